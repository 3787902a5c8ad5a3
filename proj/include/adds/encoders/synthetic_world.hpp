// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale stand-in for a multi-label photo dataset. Each class owns a
// random +-1 signature patch; an image is Gaussian background noise with 1..5
// signatures planted on distinct patch-aligned cells. A class's text vector is
// the normalised CLS response of the frozen image encoder to its signature, so
// image and text embeddings are aligned by construction.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adds/encoders/encoders.hpp"

namespace adds::enc {

struct WorldConfig {
    std::size_t num_classes = 16;
    std::size_t image_side = 64;
    std::size_t base_size = 32;
    std::size_t patch_size = 8;
    std::size_t channels = 3;
    std::size_t embed_dim = 32;
    std::uint64_t seed = 0;
    double noise = 0.2;
    double amplitude = 1.0;
    std::size_t min_objects = 1;
    std::size_t max_objects = 5;

    void validate() const;
};

struct Sample {
    Image image;
    std::vector<std::uint8_t> labels;  // one entry per world class
};

/// 80 single-word class names in a fixed, non-alphabetical order.
std::span<const std::string> builtin_class_names();

class SyntheticWorld {
public:
    explicit SyntheticWorld(const WorldConfig& cfg);

    const WorldConfig& config() const noexcept { return cfg_; }
    std::size_t num_classes() const noexcept { return cfg_.num_classes; }
    const std::vector<std::string>& class_names() const noexcept { return names_; }
    /// Index of a class name (case-insensitive), or npos.
    std::size_t class_index(const std::string& name) const;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    /// P*P*c values in {-1, +1}, HWC order.
    const std::vector<float>& signature(std::size_t c) const { return signatures_.at(c); }
    /// Zero S x S tile carrying only class c's signature at the origin.
    Image signature_tile(std::size_t c) const;
    const std::vector<double>& text_embedding(std::size_t c) const { return text_vectors_.at(c); }

    const FrozenImageEncoder& image_encoder() const noexcept { return *image_encoder_; }
    const FrozenTextEncoder& text_encoder() const noexcept { return *text_encoder_; }

    /// Random-access generator: sample `index` of the stream named `split`.
    /// When `allowed` is non-empty only those classes are planted.
    Sample sample(const std::string& split, std::uint64_t index, std::span<const std::size_t> allowed = {}) const;
    std::vector<Sample> dataset(const std::string& split, std::size_t count,
                                std::span<const std::size_t> allowed = {}) const;

    /// Plants class c at cell (cell_y, cell_x) of `img` (cell units of P).
    void plant(Image& img, std::size_t c, std::size_t cell_y, std::size_t cell_x) const;

private:
    WorldConfig cfg_;
    std::vector<std::string> names_;
    std::vector<std::vector<float>> signatures_;
    std::vector<std::vector<double>> text_vectors_;
    std::unique_ptr<FrozenImageEncoder> image_encoder_;
    std::unique_ptr<FrozenTextEncoder> text_encoder_;
};

}  // namespace adds::enc

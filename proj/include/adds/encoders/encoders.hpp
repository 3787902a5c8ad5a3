// SPDX-License-Identifier: Apache-2.0
//
// Frozen toy towers. The image tower is a ViT-shaped linear encoder (patch
// embedding, frozen mixing, mean-pooled CLS row); the text tower is a
// bag-of-words embedder whose content words can be bound to fixed vectors.
// Nothing here is trainable and no method mutates weights after construction.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adds/numerics/matrix.hpp"
#include "adds/pyramid/image.hpp"

namespace adds::enc {

using num::MatrixD;
using pyramid::Image;

struct ImageEncoderConfig {
    std::size_t base_size = 32;
    std::size_t patch_size = 8;
    std::size_t channels = 3;
    std::size_t embed_dim = 32;
    std::uint64_t seed = 0;
    /// Std-dev of the patch-projection bias; 0 gives a zero bias.
    double bias_scale = 0.0;

    void validate() const;
    std::size_t patches_per_side() const { return base_size / patch_size; }
    std::size_t patch_count() const { return patches_per_side() * patches_per_side(); }
};

class FrozenImageEncoder {
public:
    explicit FrozenImageEncoder(const ImageEncoderConfig& cfg);

    /// Row 0 is the CLS token, rows 1..p the patch tokens in row-major patch
    /// order. Pure function of the tile.
    MatrixD encode(const Image& tile) const;

    const ImageEncoderConfig& config() const noexcept { return cfg_; }
    std::size_t tokens_per_tile() const noexcept { return cfg_.patch_count() + 1; }
    std::size_t embed_dim() const noexcept { return cfg_.embed_dim; }
    std::size_t base_size() const noexcept { return cfg_.base_size; }

    /// Hash over all weight bytes.
    std::uint64_t fingerprint() const;

private:
    ImageEncoderConfig cfg_;
    MatrixD patch_proj_;  // [P*P*c x e]
    MatrixD patch_bias_;  // [1 x e]
    MatrixD mixing_;      // [e x e]
};

inline MatrixD encode_image_tile(const Image& tile, const FrozenImageEncoder& encoder) { return encoder.encode(tile); }

/// A prompt pattern with exactly one '@' placeholder for the class name.
class PromptTemplate {
public:
    static constexpr char placeholder = '@';

    explicit PromptTemplate(std::string pattern);
    std::string instantiate(const std::string& class_name) const;
    const std::string& pattern() const noexcept { return pattern_; }

private:
    std::string pattern_;
};

/// "This photo contains @" and "This is a @ photo".
std::vector<PromptTemplate> default_templates();

struct TextEncoderConfig {
    std::size_t embed_dim = 32;
    std::uint64_t seed = 0;
    /// Weight of template words relative to class-name words.
    double context_weight = 0.1;
};

class FrozenTextEncoder {
public:
    /// `bindings` pins lower-cased words to fixed vectors (normalised on
    /// construction); other words get seeded hash vectors.
    FrozenTextEncoder(const TextEncoderConfig& cfg, std::vector<PromptTemplate> templates,
                      std::map<std::string, std::vector<double>> bindings = {});

    /// Unit vector for one lower-cased word.
    std::vector<double> word_vector(const std::string& word) const;

    /// Unit-norm embedding of a whole string: weighted sum of word vectors,
    /// words that occur in the templates weighted by context_weight.
    std::vector<double> encode(const std::string& text) const;

    bool is_context_word(const std::string& word) const;
    const std::vector<PromptTemplate>& templates() const noexcept { return templates_; }
    const TextEncoderConfig& config() const noexcept { return cfg_; }
    std::size_t embed_dim() const noexcept { return cfg_.embed_dim; }
    std::uint64_t fingerprint() const;

private:
    TextEncoderConfig cfg_;
    std::vector<PromptTemplate> templates_;
    std::vector<std::string> context_words_;
    std::map<std::string, std::vector<double>> bindings_;
};

/// Lower-case ASCII letters; other bytes unchanged.
std::string to_lower(std::string s);
std::vector<std::string> split_words(const std::string& text);

/// Mean of the prompted embeddings over distinct templates, renormalised.
std::vector<double> embed_label(const std::string& class_name, std::span<const PromptTemplate> templates,
                                const FrozenTextEncoder& encoder);

/// Stacked label embeddings, one row per name.
MatrixD embed_labels(std::span<const std::string> names, const FrozenTextEncoder& encoder);

void normalize(std::span<double> v);
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace adds::enc

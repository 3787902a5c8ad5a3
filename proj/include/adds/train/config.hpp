// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration. Every key has a default; `to_text`
// writes all of them so a saved config fully determines a run.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adds/decoder/decoder.hpp"
#include "adds/encoders/synthetic_world.hpp"
#include "adds/supervision/supervision.hpp"

namespace adds::train {

struct TrainConfig {
    // synthetic world
    std::size_t classes = 16;
    std::size_t image_side = 64;
    std::size_t base_size = 32;
    std::size_t patch_size = 8;
    std::size_t channels = 3;
    std::size_t embed_dim = 32;
    double noise = 0.2;
    std::size_t min_objects = 1;
    std::size_t max_objects = 5;
    std::size_t seen_classes = 12;
    std::size_t train_samples = 1600;
    std::size_t test_samples = 400;

    // pyramid
    std::optional<std::vector<std::size_t>> levels;  // all when unset
    bool cls_only = false;
    unsigned encode_threads = 1;

    // decoder
    std::size_t depth = 6;
    std::size_t heads = 2;
    std::size_t hidden = 0;
    double dropout = 0.1;
    decoder::BlockKind kind = decoder::BlockKind::dual_modal;
    bool identity_init = true;

    // optimisation
    std::optional<double> lr;  // unset: 3e-4, or 1e-4 for images above 336 px
    double weight_decay = 1e-4;
    std::size_t epochs = 5;
    std::size_t batch_size = 8;
    /// Rotate queries and visual tokens by one shared random orthogonal
    /// matrix per training sample.
    bool rotate_augment = true;

    // supervision
    double alpha = 3.0;
    std::size_t select_above = 512;
    double gamma_pos = 0.0;
    double gamma_neg = 4.0;
    double margin = 0.05;

    // evaluation
    std::vector<std::size_t> ks = {3, 5};
    double threshold = 0.5;

    std::uint64_t seed = 0;
    std::string run_id = "run";
    /// Recorded in metrics records; filled with the wall clock when unset.
    std::string timestamp;

    double learning_rate() const;
    void validate() const;

    enc::WorldConfig world() const;
    decoder::DecoderConfig decoder() const;
    sup::AslConfig asl() const;

    /// Applies one key=value pair; unknown keys and bad values throw
    /// ConfigError naming the key.
    void set(const std::string& key, const std::string& value);
    /// Canonical text with every key materialised, one per line, sorted.
    std::string to_text() const;
    std::uint64_t hash() const;

    static TrainConfig parse(const std::string& text);
    static TrainConfig load(const std::string& path);
    static std::vector<std::string> keys();
};

/// Splits "key=value" lines; '#' starts a comment. Throws ConfigError with
/// the line number on malformed lines.
std::map<std::string, std::string> parse_key_values(const std::string& text);

std::string utc_timestamp();

}  // namespace adds::train

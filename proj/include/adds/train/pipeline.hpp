// SPDX-License-Identifier: Apache-2.0
//
// Training and evaluation on the synthetic world. Images are pyramid-encoded
// once by the frozen image tower; label queries come from the frozen text
// tower. Only the decoder stack and the shared head are optimised, in float.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adds/decoder/decoder.hpp"
#include "adds/encoders/embedding_file.hpp"
#include "adds/encoders/synthetic_world.hpp"
#include "adds/numerics/param.hpp"
#include "adds/pyramid/pyramid.hpp"
#include "adds/train/checkpoint.hpp"
#include "adds/train/config.hpp"
#include "adds/train/metrics.hpp"

namespace adds::train {

using num::MatrixD;
using num::MatrixF;

/// Case-insensitive ascending sort; the first n_seen names are seen.
std::pair<std::vector<std::string>, std::vector<std::string>> open_vocab_split(std::vector<std::string> names,
                                                                               std::size_t n_seen);

/// Pyramid-encoded images with their world-level label vectors.
struct EncodedSet {
    std::vector<MatrixF> tokens;
    LabelMatrix labels;
    /// Mean of the bottom-level tile CLS rows and the level-0 CLS row, kept
    /// for the cosine baseline.
    std::vector<std::vector<double>> bottom_cls, top_cls;
    std::size_t size() const noexcept { return tokens.size(); }
};

/// Label queries: names plus their unit embeddings.
struct Vocabulary {
    std::vector<std::string> names;
    MatrixD embeddings;  // [names x e]
};

class Experiment {
public:
    explicit Experiment(TrainConfig cfg);

    const TrainConfig& config() const noexcept { return cfg_; }
    const enc::SyntheticWorld& world() const noexcept { return *world_; }
    const pyramid::PyramidPlan& plan() const noexcept { return plan_; }
    const std::vector<std::string>& seen() const noexcept { return seen_; }
    const std::vector<std::string>& unseen() const noexcept { return unseen_; }
    std::vector<std::size_t> seen_ids() const;

    /// Visual tokens of one image, [tokens x e] in double.
    MatrixD encode_image(const pyramid::Image& image) const;
    EncodedSet encode(const std::vector<enc::Sample>& samples) const;

    /// Training images contain only seen classes; test images any class.
    const EncodedSet& train_set() const;
    const EncodedSet& test_set() const;

    Vocabulary vocabulary(const std::vector<std::string>& names) const;
    /// Rows whose dimension disagrees with the model raise ConfigError.
    Vocabulary vocabulary(const enc::EmbeddingTable& table) const;

    /// Ground-truth column for each vocabulary name (all zero when the
    /// name is not a world class).
    LabelMatrix labels_for(const EncodedSet& set, const Vocabulary& vocab) const;

private:
    TrainConfig cfg_;
    std::unique_ptr<enc::SyntheticWorld> world_;
    pyramid::PyramidPlan plan_;
    std::vector<std::string> seen_, unseen_;
    mutable std::unique_ptr<EncodedSet> train_, test_;
};

struct TrainState {
    decoder::Model<float> model;
    num::AdamState<float> adam;
    std::size_t epochs_done = 0;
    std::uint64_t steps_done = 0;
    double initial_loss = 0.0;
    std::vector<double> epoch_loss;
};

TrainState initial_state(const Experiment& exp);

/// Runs epochs epochs_done+1 .. min(config epochs, stop_after). `on_epoch`
/// is called after each finished epoch.
void train(const Experiment& exp, TrainState& state, std::optional<std::size_t> stop_after = std::nullopt,
           const std::function<void(const TrainState&)>& on_epoch = {});

/// Mean loss over a set in inference mode.
double dataset_loss(const Experiment& exp, const decoder::Model<float>& model, const EncodedSet& set,
                    const Vocabulary& vocab);

/// [images x vocab] probabilities.
MatrixD predict(const decoder::Model<float>& model, const EncodedSet& set, const Vocabulary& vocab);

MetricsReport evaluate(const Experiment& exp, const decoder::Model<float>& model, const EncodedSet& set,
                       const Vocabulary& vocab);

/// Zero-shot cosine scores against the bottom-level (or level-0) CLS.
MetricsReport evaluate_cosine(const Experiment& exp, const EncodedSet& set, const Vocabulary& vocab,
                              bool use_bottom_level = true);

Checkpoint to_checkpoint(const Experiment& exp, const TrainState& state);
/// Checks weights against the architecture the config describes.
TrainState from_checkpoint(const Experiment& exp, const Checkpoint& ckpt);

std::vector<NamedBlob> export_weights(std::span<num::Param<float>* const> params);
void import_weights(std::span<num::Param<float>* const> params, const std::vector<NamedBlob>& blobs,
                    const std::string& what);

}  // namespace adds::train

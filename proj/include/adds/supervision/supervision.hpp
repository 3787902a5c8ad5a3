// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adds/numerics/matrix.hpp"
#include "adds/numerics/rng.hpp"

namespace adds::sup {

/// Selected label set for one batch: every positive in the batch plus a
/// uniform sample of negatives, min(alpha * |pos|, k - |pos|) of them.
struct LabelSelection {
    std::vector<std::size_t> selected;   // sorted ascending
    std::vector<std::size_t> positives;  // sorted ascending
    std::vector<std::size_t> sampled_negatives;  // in draw order
    double alpha = 3.0;
};

/// Number of negatives drawn for a given positive count.
std::size_t negative_budget(std::size_t num_positives, std::size_t num_classes, double alpha);

LabelSelection select_labels(std::span<const std::vector<std::uint8_t>> batch_labels, double alpha,
                             num::SeedStream& rng);

struct AslConfig {
    double gamma_pos = 0.0;
    double gamma_neg = 4.0;
    double margin = 0.05;
    double clip_eps = 1e-7;

    void validate() const;
};

template <typename T>
struct LossResult {
    T loss = 0;
    std::vector<T> grad;  // dL/dp
};

/// Asymmetric loss averaged over classes. Positive term
/// -(1-p)^g+ log p, negative term -p_m^g- log(1-p_m) with p_m = max(p-m, 0).
template <typename T>
LossResult<T> asl_loss(std::span<const T> probs, std::span<const std::uint8_t> labels, const AslConfig& cfg);

/// Plain mean binary cross-entropy, for reference checks.
double bce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels);

struct CosineResult {
    std::vector<double> scores;
    std::vector<std::uint8_t> decisions;
};

/// score_i = cos(image, label_i); decision_i = score_i > eta.
CosineResult cosine_baseline(std::span<const double> image_embedding, const num::MatrixD& label_embeddings,
                             double eta = 0.5);

}  // namespace adds::sup

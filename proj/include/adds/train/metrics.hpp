// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adds/numerics/matrix.hpp"

namespace adds::train {

using LabelMatrix = std::vector<std::vector<std::uint8_t>>;  // [images][classes]

/// Precision averaged over the ranks of the positives, images sorted by
/// descending score with ties broken by ascending image index. Empty when
/// the column has no positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Micro-averaged F1 when every image predicts its k top-scored classes
/// (ties to the lower class index). k larger than the class count predicts
/// every class.
double f1_at_k(const num::MatrixD& scores, const LabelMatrix& labels, std::size_t k);

/// Indices of the k best scores of one row, best first.
std::vector<std::size_t> top_k(std::span<const double> row, std::size_t k);

struct MetricsReport {
    double map = 0.0;
    std::map<std::size_t, double> f1;                 // by k
    std::vector<std::optional<double>> per_class_ap;  // empty for classes without positives
    std::vector<std::string> class_names;
    std::vector<std::size_t> excluded;  // classes left out of mAP
    std::size_t samples = 0;

    /// mAP over a subset of classes that have positives; nullopt when none do.
    std::optional<double> map_over(std::span<const std::size_t> classes) const;
};

MetricsReport compute_metrics(const num::MatrixD& scores, const LabelMatrix& labels, std::span<const std::size_t> ks,
                              std::vector<std::string> class_names = {});

}  // namespace adds::train

// SPDX-License-Identifier: Apache-2.0

#include "adds/train/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "adds/errors.hpp"

namespace adds::train {

namespace {

std::vector<std::size_t> ranking(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

void check_shape(const num::MatrixD& scores, const LabelMatrix& labels) {
    if (labels.size() != scores.rows())
        throw ShapeError("metrics: " + std::to_string(scores.rows()) + " score rows vs " +
                         std::to_string(labels.size()) + " label rows");
    for (const auto& row : labels)
        if (row.size() != scores.cols())
            throw ShapeError("metrics: label row of width " + std::to_string(row.size()) + ", expected " +
                             std::to_string(scores.cols()));
}

}  // namespace

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ShapeError("average_precision: score/label length mismatch");
    std::size_t hits = 0;
    double sum = 0.0;
    const auto order = ranking(scores);
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (!labels[order[r]]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

std::vector<std::size_t> top_k(std::span<const double> row, std::size_t k) {
    auto order = ranking(row);
    order.resize(std::min(k, order.size()));
    return order;
}

double f1_at_k(const num::MatrixD& scores, const LabelMatrix& labels, std::size_t k) {
    check_shape(scores, labels);
    if (k == 0) throw ConfigError("f1_at_k: k must be >= 1");
    std::size_t tp = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto row = scores.row(i);
        for (std::size_t c : top_k(std::span<const double>(row.data(), row.size()), k)) tp += labels[i][c];
        predicted += std::min(k, scores.cols());
        for (auto y : labels[i]) actual += y;
    }
    if (tp == 0) return 0.0;
    const double p = static_cast<double>(tp) / static_cast<double>(predicted);
    const double r = static_cast<double>(tp) / static_cast<double>(actual);
    return 2.0 * p * r / (p + r);
}

std::optional<double> MetricsReport::map_over(std::span<const std::size_t> classes) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c : classes) {
        if (c >= per_class_ap.size()) throw IndexError("map_over: class " + std::to_string(c) + " out of range");
        if (per_class_ap[c]) {
            sum += *per_class_ap[c];
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

MetricsReport compute_metrics(const num::MatrixD& scores, const LabelMatrix& labels, std::span<const std::size_t> ks,
                              std::vector<std::string> class_names) {
    check_shape(scores, labels);
    if (scores.rows() == 0) throw InputError("compute_metrics: empty dataset");
    MetricsReport rep;
    rep.samples = scores.rows();
    rep.class_names = std::move(class_names);
    std::vector<double> col(scores.rows());
    std::vector<std::uint8_t> ycol(scores.rows());
    std::vector<std::size_t> all;
    for (std::size_t c = 0; c < scores.cols(); ++c) {
        for (std::size_t i = 0; i < scores.rows(); ++i) {
            col[i] = scores(i, c);
            ycol[i] = labels[i][c];
        }
        rep.per_class_ap.push_back(average_precision(col, ycol));
        if (!rep.per_class_ap.back()) rep.excluded.push_back(c);
        all.push_back(c);
    }
    rep.map = rep.map_over(all).value_or(0.0);
    for (std::size_t k : ks) rep.f1[k] = f1_at_k(scores, labels, k);
    return rep;
}

}  // namespace adds::train

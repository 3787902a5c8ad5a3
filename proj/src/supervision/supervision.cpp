// SPDX-License-Identifier: Apache-2.0

#include "adds/supervision/supervision.hpp"

#include <algorithm>
#include <cmath>

#include "adds/errors.hpp"

namespace adds::sup {

std::size_t negative_budget(std::size_t num_positives, std::size_t num_classes, double alpha) {
    if (num_positives > num_classes) throw InputError("more positives than classes");
    const double want = std::floor(alpha * static_cast<double>(num_positives));
    const std::size_t remaining = num_classes - num_positives;
    return want >= static_cast<double>(remaining) ? remaining : static_cast<std::size_t>(want);
}

LabelSelection select_labels(std::span<const std::vector<std::uint8_t>> batch_labels, double alpha,
                             num::SeedStream& rng) {
    if (!(alpha >= 0.0)) throw ConfigError("select_labels: alpha must be >= 0");
    if (batch_labels.empty()) throw InputError("select_labels: empty batch");
    const std::size_t k = batch_labels.front().size();
    if (k == 0) throw InputError("select_labels: zero classes");

    std::vector<std::uint8_t> is_pos(k, 0);
    for (const auto& labels : batch_labels) {
        if (labels.size() != k) throw ShapeError("select_labels: ragged label vectors in batch");
        for (std::size_t i = 0; i < k; ++i)
            if (labels[i]) is_pos[i] = 1;
    }

    LabelSelection sel;
    sel.alpha = alpha;
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < k; ++i) (is_pos[i] ? sel.positives : negatives).push_back(i);

    // Partial Fisher-Yates: the first `budget` slots become a uniform sample
    // without replacement.
    const std::size_t budget = negative_budget(sel.positives.size(), k, alpha);
    for (std::size_t i = 0; i < budget; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(negatives.size() - i));
        std::swap(negatives[i], negatives[j]);
        sel.sampled_negatives.push_back(negatives[i]);
    }

    sel.selected = sel.positives;
    sel.selected.insert(sel.selected.end(), sel.sampled_negatives.begin(), sel.sampled_negatives.end());
    std::sort(sel.selected.begin(), sel.selected.end());
    return sel;
}

void AslConfig::validate() const {
    if (!(gamma_pos >= 0.0) || !(gamma_neg >= 0.0)) throw ConfigError("asl: focusing exponents must be >= 0");
    if (!(margin >= 0.0 && margin < 1.0)) throw ConfigError("asl: margin must lie in [0, 1)");
}

template <typename T>
LossResult<T> asl_loss(std::span<const T> probs, std::span<const std::uint8_t> labels, const AslConfig& cfg) {
    if (probs.size() != labels.size())
        throw ShapeError("asl_loss: " + std::to_string(probs.size()) + " probabilities for " +
                         std::to_string(labels.size()) + " labels");
    LossResult<T> out;
    out.grad.assign(probs.size(), T(0));
    if (probs.empty()) return out;

    const double lo = cfg.clip_eps, hi = 1.0 - cfg.clip_eps;
    const double inv_n = 1.0 / static_cast<double>(probs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double raw = static_cast<double>(probs[i]);
        const bool clipped = raw < lo || raw > hi;
        const double p = std::clamp(raw, lo, hi);
        double loss = 0.0, grad = 0.0;
        if (labels[i]) {
            const double gp = cfg.gamma_pos;
            const double w = gp == 0.0 ? 1.0 : std::pow(1.0 - p, gp);
            loss = -w * std::log(p);
            grad = -w / p;
            if (gp != 0.0) grad += gp * std::pow(1.0 - p, gp - 1.0) * std::log(p);
        } else {
            const double pm = std::max(p - cfg.margin, 0.0);
            const double gn = cfg.gamma_neg;
            const double w = gn == 0.0 ? 1.0 : std::pow(pm, gn);
            loss = -w * std::log(1.0 - pm);
            if (pm > 0.0) {
                grad = w / (1.0 - pm);
                if (gn != 0.0) grad += -gn * std::pow(pm, gn - 1.0) * std::log(1.0 - pm);
            }
        }
        total += loss;
        out.grad[i] = clipped ? T(0) : static_cast<T>(grad * inv_n);
    }
    out.loss = static_cast<T>(total * inv_n);
    return out;
}

template LossResult<float> asl_loss(std::span<const float>, std::span<const std::uint8_t>, const AslConfig&);
template LossResult<double> asl_loss(std::span<const double>, std::span<const std::uint8_t>, const AslConfig&);

double bce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
    if (probs.size() != labels.size()) throw ShapeError("bce_loss: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        total += labels[i] ? -std::log(probs[i]) : -std::log(1.0 - probs[i]);
    return probs.empty() ? 0.0 : total / static_cast<double>(probs.size());
}

CosineResult cosine_baseline(std::span<const double> image, const num::MatrixD& labels, double eta) {
    if (image.size() != labels.cols())
        throw ShapeError("cosine_baseline: image dim " + std::to_string(image.size()) + " vs label dim " +
                         std::to_string(labels.cols()));
    double in = 0.0;
    for (double v : image) in += v * v;
    in = std::sqrt(in);
    if (in == 0.0) throw InputError("cosine_baseline: zero-norm image embedding");
    CosineResult r;
    for (std::size_t c = 0; c < labels.rows(); ++c) {
        auto row = labels.row(c);
        double dot = 0.0, ln = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            dot += image[j] * row[j];
            ln += row[j] * row[j];
        }
        ln = std::sqrt(ln);
        if (ln == 0.0) throw InputError("cosine_baseline: zero-norm label embedding at row " + std::to_string(c));
        const double s = dot / (in * ln);
        r.scores.push_back(s);
        r.decisions.push_back(s > eta ? 1 : 0);
    }
    return r;
}

}  // namespace adds::sup

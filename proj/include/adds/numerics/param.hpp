// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adds/errors.hpp"
#include "adds/numerics/matrix.hpp"
#include "adds/numerics/rng.hpp"

namespace adds::num {

/// A learnable tensor and its accumulated gradient. Frozen tensors never
/// receive gradient and are skipped by the optimizer.
template <typename T>
struct Param {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Matrix<T> v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), trainable(train) {}

    void zero_grad() { grad.fill(T(0)); }

    /// Gradient accumulation that respects freezing.
    void accumulate(const Matrix<T>& g) {
        if (!trainable) return;
        if (!g.same_shape(grad)) throw ShapeError("gradient " + g.shape() + " for param " + name + " " + grad.shape());
        auto d = grad.data();
        auto s = g.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    }
};

/// Scaled uniform init, +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Matrix<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, SeedStream& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix<T> m(fan_in, fan_out);
    for (auto& v : m.data()) v = static_cast<T>(rng.uniform(-limit, limit));
    return m;
}

/// Haar-ish random orthogonal matrix: modified Gram-Schmidt over Gaussian
/// rows, computed in double.
template <typename T>
Matrix<T> random_orthogonal(std::size_t n, SeedStream& rng) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = rows[i];
        for (;;) {
            for (auto& v : r) v = rng.normal();
            for (std::size_t j = 0; j < i; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < n; ++k) dot += r[k] * rows[j][k];
                for (std::size_t k = 0; k < n; ++k) r[k] -= dot * rows[j][k];
            }
            double norm = 0.0;
            for (double v : r) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (auto& v : r) v /= norm;
                break;
            }
        }
    }
    Matrix<T> out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) out(i, k) = static_cast<T>(rows[i][k]);
    return out;
}

struct AdamConfig {
    double lr = 3e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<Matrix<T>> first_moment;
    std::vector<Matrix<T>> second_moment;
    std::uint64_t step = 0;

    static AdamState for_params(std::span<Param<T>* const> params) {
        AdamState s;
        for (const auto* p : params) {
            s.first_moment.emplace_back(p->value.rows(), p->value.cols());
            s.second_moment.emplace_back(p->value.rows(), p->value.cols());
        }
        return s;
    }
};

/// One Adam update with decoupled weight decay. Frozen params (and their
/// moments) are left untouched.
template <typename T>
void adam_step(std::span<Param<T>* const> params, const AdamConfig& cfg, AdamState<T>& state) {
    if (!(cfg.lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive, got " + std::to_string(cfg.lr));
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
        throw ShapeError("adam_step: optimizer state does not match parameter list");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Param<T>& p = *params[k];
        if (!p.trainable) continue;
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        if (!m.same_shape(p.value) || !v.same_shape(p.value))
            throw ShapeError("adam_step: moment shape mismatch for " + p.name);
        auto w = p.value.data();
        auto g = p.grad.data();
        auto md = m.data();
        auto vd = v.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            md[i] = b1 * md[i] + (T(1) - b1) * g[i];
            vd[i] = b2 * vd[i] + (T(1) - b2) * g[i] * g[i];
            const double mhat = static_cast<double>(md[i]) / bc1;
            const double vhat = static_cast<double>(vd[i]) / bc2;
            const double update = mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * static_cast<double>(w[i]);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - cfg.lr * update);
        }
    }
}

}  // namespace adds::num

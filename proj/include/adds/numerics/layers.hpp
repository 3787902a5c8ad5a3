// SPDX-License-Identifier: Apache-2.0
//
// Parameterised layers with explicit forward caches and hand-written
// backward passes. Backward functions accumulate into Param::grad (frozen
// params are skipped) and return the gradient with respect to the inputs.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "adds/numerics/ops.hpp"
#include "adds/numerics/param.hpp"
#include "adds/numerics/rng.hpp"

namespace adds::num {

// ---------------------------------------------------------------------------
// Linear: Y = X W + b, W is [in x out], b is [1 x out].

template <typename T>
Matrix<T> linear(const Matrix<T>& x, const Param<T>& w, const Param<T>& b) {
    return add_row_bias(matmul(x, w.value), b.value);
}

template <typename T>
Matrix<T> linear_backward(const Matrix<T>& x, const Matrix<T>& dy, Param<T>& w, Param<T>& b, bool need_dx = true) {
    if (w.trainable) w.accumulate(matmul_tn(x, dy));
    if (b.trainable) b.accumulate(column_sums(dy));
    return need_dx ? matmul_nt(dy, w.value) : Matrix<T>();
}

// ---------------------------------------------------------------------------
// LayerNorm over the last (embedding) dimension, population variance.

template <typename T>
struct LayerNormParams {
    Param<T> gain;
    Param<T> bias;

    static LayerNormParams make(const std::string& name, std::size_t dim) {
        return {Param<T>(name + ".gain", Matrix<T>(1, dim, T(1))), Param<T>(name + ".bias", Matrix<T>(1, dim))};
    }
    std::vector<Param<T>*> params() { return {&gain, &bias}; }
};

template <typename T>
struct LayerNormCache {
    Matrix<T> normalized;
    std::vector<T> inv_std;
};

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, T eps,
                     LayerNormCache<T>* cache = nullptr) {
    const std::size_t e = x.cols();
    if (gain.rows() != 1 || gain.cols() != e || !gain.same_shape(bias))
        throw ShapeError("layer_norm: gain " + gain.shape() + " / bias " + bias.shape() + " for input " + x.shape());
    Matrix<T> out(x.rows(), e);
    if (cache) {
        cache->normalized = Matrix<T>(x.rows(), e);
        cache->inv_std.assign(x.rows(), T(0));
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        T mean = 0;
        for (T v : r) mean += v;
        mean /= static_cast<T>(e);
        T var = 0;
        for (T v : r) var += (v - mean) * (v - mean);
        var /= static_cast<T>(e);
        const T inv = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < e; ++j) {
            const T xh = (r[j] - mean) * inv;
            out(i, j) = gain(0, j) * xh + bias(0, j);
            if (cache) cache->normalized(i, j) = xh;
        }
        if (cache) cache->inv_std[i] = inv;
    }
    return out;
}

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const LayerNormParams<T>& p, T eps, LayerNormCache<T>* cache = nullptr) {
    return layer_norm(x, p.gain.value, p.bias.value, eps, cache);
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const LayerNormCache<T>& c, LayerNormParams<T>& p) {
    const std::size_t rows = dy.rows(), e = dy.cols();
    Matrix<T> dgain(1, e), dbias(1, e), dx(rows, e);
    std::vector<T> dxh(e);
    for (std::size_t i = 0; i < rows; ++i) {
        T mean_d = 0, mean_dx = 0;
        for (std::size_t j = 0; j < e; ++j) {
            const T xh = c.normalized(i, j);
            dgain(0, j) += dy(i, j) * xh;
            dbias(0, j) += dy(i, j);
            dxh[j] = dy(i, j) * p.gain.value(0, j);
            mean_d += dxh[j];
            mean_dx += dxh[j] * xh;
        }
        mean_d /= static_cast<T>(e);
        mean_dx /= static_cast<T>(e);
        for (std::size_t j = 0; j < e; ++j)
            dx(i, j) = c.inv_std[i] * (dxh[j] - mean_d - c.normalized(i, j) * mean_dx);
    }
    p.gain.accumulate(dgain);
    p.bias.accumulate(dbias);
    return dx;
}

// ---------------------------------------------------------------------------
// Multi-head attention. Per head h: softmax(Q_h K_h^T / sqrt(e/heads)) V_h,
// heads concatenated and passed through the output projection.

template <typename T>
struct AttentionParams {
    Param<T> wq, bq, wk, bk, wv, bv, wo, bo;

    static AttentionParams make(const std::string& name, std::size_t e, SeedStream& rng) {
        auto w = [&](const char* s) { return Param<T>(name + "." + s, xavier_uniform<T>(e, e, rng)); };
        auto b = [&](const char* s) { return Param<T>(name + "." + s, Matrix<T>(1, e)); };
        AttentionParams p;
        p.wq = w("wq");
        p.bq = b("bq");
        p.wk = w("wk");
        p.bk = b("bk");
        p.wv = w("wv");
        p.bv = b("bv");
        p.wo = w("wo");
        p.bo = b("bo");
        return p;
    }
    std::vector<Param<T>*> params() { return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}; }
    std::size_t dim() const { return wq.value.rows(); }
};

template <typename T>
struct AttentionCache {
    Matrix<T> query, key, value;        // inputs
    Matrix<T> qp, kp, vp;               // projected
    std::vector<Matrix<T>> probs;       // per head, [q x n]
    Matrix<T> heads_out;                // concatenated head outputs, [q x e]
};

inline void check_heads(std::size_t e, std::size_t heads) {
    if (heads == 0 || e % heads != 0)
        throw ConfigError("attention: embedding dim " + std::to_string(e) + " not divisible by " +
                          std::to_string(heads) + " heads");
}

template <typename T>
Matrix<T> multi_head_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                               const AttentionParams<T>& p, std::size_t heads,
                               AttentionCache<T>* cache = nullptr) {
    const std::size_t e = p.dim();
    check_heads(e, heads);
    if (q.cols() != e || k.cols() != e || v.cols() != e)
        throw ShapeError("attention: Q " + q.shape() + ", K " + k.shape() + ", V " + v.shape() +
                         " for embedding dim " + std::to_string(e));
    if (k.rows() != v.rows()) throw ShapeError("attention: K " + k.shape() + " and V " + v.shape() + " row mismatch");
    const std::size_t dh = e / heads;
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));

    Matrix<T> qp = linear(q, p.wq, p.bq);
    Matrix<T> kp = linear(k, p.wk, p.bk);
    Matrix<T> vp = linear(v, p.wv, p.bv);
    Matrix<T> concat(q.rows(), e);
    std::vector<Matrix<T>> probs;
    probs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix<T> scores = scale(matmul_nt(slice_cols(qp, h * dh, dh), slice_cols(kp, h * dh, dh)), inv_scale);
        Matrix<T> a = softmax_rows(scores);
        set_cols(concat, h * dh, matmul(a, slice_cols(vp, h * dh, dh)));
        probs.push_back(std::move(a));
    }
    Matrix<T> out = linear(concat, p.wo, p.bo);
    if (cache) {
        cache->query = q;
        cache->key = k;
        cache->value = v;
        cache->qp = std::move(qp);
        cache->kp = std::move(kp);
        cache->vp = std::move(vp);
        cache->probs = std::move(probs);
        cache->heads_out = std::move(concat);
    }
    return out;
}

template <typename T>
struct AttentionGrads {
    Matrix<T> dquery, dkey, dvalue;
};

template <typename T>
AttentionGrads<T> multi_head_attention_backward(const Matrix<T>& dout, const AttentionCache<T>& c,
                                                AttentionParams<T>& p, std::size_t heads,
                                                bool need_query_grad = true, bool need_kv_grad = true) {
    const std::size_t e = p.dim();
    const std::size_t dh = e / heads;
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));

    Matrix<T> dconcat = linear_backward(c.heads_out, dout, p.wo, p.bo);
    Matrix<T> dqp(c.qp.rows(), e), dkp(c.kp.rows(), e), dvp(c.vp.rows(), e);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix<T>& a = c.probs[h];
        Matrix<T> dho = slice_cols(dconcat, h * dh, dh);
        Matrix<T> qh = slice_cols(c.qp, h * dh, dh);
        Matrix<T> kh = slice_cols(c.kp, h * dh, dh);
        Matrix<T> vh = slice_cols(c.vp, h * dh, dh);
        Matrix<T> da = matmul_nt(dho, vh);
        set_cols(dvp, h * dh, matmul_tn(a, dho));
        Matrix<T> ds = scale(softmax_rows_backward(a, da), inv_scale);
        set_cols(dqp, h * dh, matmul(ds, kh));
        set_cols(dkp, h * dh, matmul_tn(ds, qh));
    }
    AttentionGrads<T> g;
    g.dquery = linear_backward(c.query, dqp, p.wq, p.bq, need_query_grad);
    g.dkey = linear_backward(c.key, dkp, p.wk, p.bk, need_kv_grad);
    g.dvalue = linear_backward(c.value, dvp, p.wv, p.bv, need_kv_grad);
    return g;
}

// ---------------------------------------------------------------------------
// Position-wise feed-forward: X -> project(ReLU(expand(X))).
// `expand` maps e -> h, `project` maps h -> e.

template <typename T>
struct FeedForwardParams {
    Param<T> expand_w, expand_b, project_w, project_b;

    static FeedForwardParams make(const std::string& name, std::size_t e, std::size_t hidden, SeedStream& rng) {
        if (hidden == 0) throw ConfigError("feed_forward: hidden width must be >= 1");
        FeedForwardParams p;
        p.expand_w = Param<T>(name + ".expand_w", xavier_uniform<T>(e, hidden, rng));
        p.expand_b = Param<T>(name + ".expand_b", Matrix<T>(1, hidden));
        p.project_w = Param<T>(name + ".project_w", xavier_uniform<T>(hidden, e, rng));
        p.project_b = Param<T>(name + ".project_b", Matrix<T>(1, e));
        return p;
    }
    std::vector<Param<T>*> params() { return {&expand_w, &expand_b, &project_w, &project_b}; }
};

template <typename T>
struct FeedForwardCache {
    Matrix<T> input, pre_activation, hidden;
};

template <typename T>
Matrix<T> feed_forward(const Matrix<T>& x, const FeedForwardParams<T>& p, FeedForwardCache<T>* cache = nullptr) {
    if (x.cols() != p.expand_w.value.rows() || p.expand_w.value.cols() != p.project_w.value.rows())
        throw ShapeError("feed_forward: input " + x.shape() + " with expand " + p.expand_w.value.shape() +
                         " and project " + p.project_w.value.shape());
    Matrix<T> pre = linear(x, p.expand_w, p.expand_b);
    Matrix<T> hidden = relu(pre);
    Matrix<T> out = linear(hidden, p.project_w, p.project_b);
    if (cache) {
        cache->input = x;
        cache->pre_activation = std::move(pre);
        cache->hidden = std::move(hidden);
    }
    return out;
}

template <typename T>
Matrix<T> feed_forward_backward(const Matrix<T>& dout, const FeedForwardCache<T>& c, FeedForwardParams<T>& p) {
    Matrix<T> dhidden = linear_backward(c.hidden, dout, p.project_w, p.project_b);
    Matrix<T> dpre = relu_backward(c.pre_activation, dhidden);
    return linear_backward(c.input, dpre, p.expand_w, p.expand_b);
}

// ---------------------------------------------------------------------------
// Inverted dropout. The mask holds 0 or 1/(1-rate) per entry.

inline void check_dropout_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
}

template <typename T>
Matrix<T> dropout(const Matrix<T>& x, double rate, SeedStream& rng, bool training, Matrix<T>* mask_out = nullptr) {
    check_dropout_rate(rate);
    if (!training || rate == 0.0) {
        if (mask_out) *mask_out = Matrix<T>();
        return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    Matrix<T> mask(x.rows(), x.cols());
    Matrix<T> out(x.rows(), x.cols());
    auto m = mask.data();
    auto o = out.data();
    auto in = x.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        m[i] = rng.uniform() < rate ? T(0) : keep_scale;
        o[i] = in[i] * m[i];
    }
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

/// An empty mask means dropout was the identity.
template <typename T>
Matrix<T> dropout_backward(const Matrix<T>& dy, const Matrix<T>& mask) {
    if (mask.empty()) return dy;
    Matrix<T> dx = dy;
    auto d = dx.data();
    auto m = mask.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= m[i];
    return dx;
}

}  // namespace adds::num

// SPDX-License-Identifier: Apache-2.0

#include "adds/decoder/decoder.hpp"

#include "adds/errors.hpp"
#include "adds/numerics/ops.hpp"

namespace adds::decoder {

using namespace adds::num;

std::string to_string(BlockKind kind) { return kind == BlockKind::dual_modal ? "dual" : "baseline"; }

BlockKind block_kind_from_string(const std::string& s) {
    if (s == "dual" || s == "dual_modal" || s == "dm") return BlockKind::dual_modal;
    if (s == "baseline" || s == "ml") return BlockKind::baseline;
    throw ConfigError("unknown decoder block kind '" + s + "' (expected dual or baseline)");
}

void DecoderConfig::validate() const {
    if (embed_dim == 0) throw ConfigError("decoder: embed_dim must be positive");
    check_heads(embed_dim, heads);
    if (depth == 0) throw ConfigError("decoder: depth must be >= 1");
    check_dropout_rate(dropout);
    if (!(ln_eps > 0.0)) throw ConfigError("decoder: ln_eps must be positive");
}

template <typename T>
BlockParams<T> BlockParams<T>::make(const std::string& name, const DecoderConfig& cfg, SeedStream& rng) {
    const std::size_t e = cfg.embed_dim;
    BlockParams p;
    p.kind = cfg.kind;
    p.dropout = cfg.dropout;
    p.text_attn = AttentionParams<T>::make(name + ".text_attn", e, rng);
    if (cfg.identity_qk_init) {
        for (auto* w : {&p.text_attn.wq.value, &p.text_attn.wk.value}) {
            for (auto& v : w->data()) v *= T(0.1);
            for (std::size_t i = 0; i < e; ++i) (*w)(i, i) += T(1);
        }
    }
    p.ffn = FeedForwardParams<T>::make(name + ".ffn", e, cfg.hidden_width(), rng);
    p.ln_query_in = LayerNormParams<T>::make(name + ".ln_query_in", e);
    p.ln_attn = LayerNormParams<T>::make(name + ".ln_attn", e);
    p.ln_ffn = LayerNormParams<T>::make(name + ".ln_ffn", e);
    if (cfg.kind == BlockKind::dual_modal) {
        p.visual_attn = AttentionParams<T>::make(name + ".visual_attn", e, rng);
        // Closed visual-update branch: tokens start out only re-normalised.
        if (cfg.identity_qk_init) p.visual_attn.wo.value.fill(T(0));
        p.ln_query_out = LayerNormParams<T>::make(name + ".ln_query_out", e);
        p.ln_visual = LayerNormParams<T>::make(name + ".ln_visual", e);
    }
    return p;
}

template <typename T>
std::vector<Param<T>*> BlockParams<T>::params() {
    std::vector<Param<T>*> out;
    auto append = [&out](std::vector<Param<T>*> v) { out.insert(out.end(), v.begin(), v.end()); };
    append(text_attn.params());
    append(ffn.params());
    append(ln_query_in.params());
    append(ln_attn.params());
    append(ln_ffn.params());
    if (kind == BlockKind::dual_modal) {
        append(visual_attn.params());
        append(ln_query_out.params());
        append(ln_visual.params());
    }
    return out;
}

namespace {

template <typename T>
void check_inputs(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, std::size_t e) {
    if (q.cols() != e || k.cols() != e || v.cols() != e || k.rows() != v.rows())
        throw ShapeError("decoder block: Q " + q.shape() + ", K " + k.shape() + ", V " + v.shape() +
                         " do not match embedding dim " + std::to_string(e));
}

template <typename T>
Matrix<T> apply_dropout(const Matrix<T>& x, double rate, const ForwardContext<T>& ctx, Matrix<T>* mask) {
    if (ctx.training && rate > 0.0 && ctx.rng == nullptr)
        throw ConfigError("decoder block: training with dropout needs a random stream");
    SeedStream unused;
    return dropout(x, rate, ctx.rng ? *ctx.rng : unused, ctx.training, mask);
}

/// The first five lines shared by both block kinds; returns Q_mid5.
template <typename T>
Matrix<T> query_path(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, const BlockParams<T>& p,
                     std::size_t heads, T eps, const ForwardContext<T>& ctx, BlockCache<T>* c) {
    Matrix<T> mask_in, mask_ffn;
    Matrix<T> mid1 = layer_norm(add(q, apply_dropout(q, p.dropout, ctx, &mask_in)), p.ln_query_in, eps,
                                c ? &c->ln_query_in : nullptr);
    Matrix<T> mid2 = multi_head_attention(mid1, k, v, p.text_attn, heads, c ? &c->text_attn : nullptr);
    Matrix<T> mid3 = layer_norm(add(mid2, mid1), p.ln_attn, eps, c ? &c->ln_attn : nullptr);
    Matrix<T> mid4 = apply_dropout(feed_forward(mid3, p.ffn, c ? &c->ffn : nullptr), p.dropout, ctx, &mask_ffn);
    Matrix<T> mid5 = layer_norm(add(mid4, mid3), p.ln_ffn, eps, c ? &c->ln_ffn : nullptr);
    if (c) {
        c->query_in = q;
        c->drop_in_mask = std::move(mask_in);
        c->drop_ffn_mask = std::move(mask_ffn);
    }
    return mid5;
}

}  // namespace

template <typename T>
BlockOutput<T> dm_block_forward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, const BlockParams<T>& p,
                                std::size_t heads, T eps, const ForwardContext<T>& ctx, BlockCache<T>* c) {
    if (p.kind != BlockKind::dual_modal) throw ConfigError("dm_block_forward called with baseline block weights");
    check_inputs(q, k, v, p.text_attn.dim());
    Matrix<T> mid5 = query_path(q, k, v, p, heads, eps, ctx, c);
    BlockOutput<T> out;
    out.query = layer_norm(add(mid5, q), p.ln_query_out, eps, c ? &c->ln_query_out : nullptr);
    Matrix<T> v1 = multi_head_attention(v, mid5, mid5, p.visual_attn, heads, c ? &c->visual_attn : nullptr);
    out.value = layer_norm(add(v1, v), p.ln_visual, eps, c ? &c->ln_visual : nullptr);
    out.key = out.value;
    return out;
}

template <typename T>
BlockOutput<T> baseline_block_forward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                      const BlockParams<T>& p, std::size_t heads, T eps,
                                      const ForwardContext<T>& ctx, BlockCache<T>* c) {
    check_inputs(q, k, v, p.text_attn.dim());
    BlockOutput<T> out;
    out.query = query_path(q, k, v, p, heads, eps, ctx, c);
    out.key = k;
    out.value = v;
    return out;
}

template <typename T>
BlockOutput<T> block_backward(const Matrix<T>& dq_out, const Matrix<T>& dk_out, const Matrix<T>& dv_out,
                              const BlockCache<T>& c, BlockParams<T>& p, std::size_t heads, bool need_input_grads) {
    const bool dual = p.kind == BlockKind::dual_modal;
    BlockOutput<T> g;
    Matrix<T> dmid5;
    Matrix<T> dq_in(c.query_in.rows(), c.query_in.cols());
    Matrix<T> dv_in, dk_in;

    if (dual) {
        // K' = V', so both upstream gradients land on V'.
        Matrix<T> dvp(c.ln_visual.normalized.rows(), c.ln_visual.normalized.cols());
        if (!dk_out.empty()) add_into(dvp, dk_out);
        if (!dv_out.empty()) add_into(dvp, dv_out);
        Matrix<T> dsum_v = layer_norm_backward(dvp, c.ln_visual, p.ln_visual);
        auto ga = multi_head_attention_backward(dsum_v, c.visual_attn, p.visual_attn, heads, need_input_grads, true);
        if (need_input_grads) dv_in = add(dsum_v, ga.dquery);
        Matrix<T> dsum_q = layer_norm_backward(dq_out, c.ln_query_out, p.ln_query_out);
        dq_in = dsum_q;
        dmid5 = add(add(dsum_q, ga.dkey), ga.dvalue);
    } else {
        dmid5 = dq_out;
        if (need_input_grads) {
            dk_in = dk_out.empty() ? Matrix<T>(c.text_attn.key.rows(), c.text_attn.key.cols()) : dk_out;
            dv_in = dv_out.empty() ? Matrix<T>(c.text_attn.value.rows(), c.text_attn.value.cols()) : dv_out;
        }
    }

    Matrix<T> dsum5 = layer_norm_backward(dmid5, c.ln_ffn, p.ln_ffn);
    Matrix<T> dmid3 = dsum5;
    add_into(dmid3, feed_forward_backward(dropout_backward(dsum5, c.drop_ffn_mask), c.ffn, p.ffn));
    Matrix<T> dsum3 = layer_norm_backward(dmid3, c.ln_attn, p.ln_attn);
    auto gt = multi_head_attention_backward(dsum3, c.text_attn, p.text_attn, heads, true, need_input_grads);
    Matrix<T> dmid1 = add(dsum3, gt.dquery);
    Matrix<T> dsum1 = layer_norm_backward(dmid1, c.ln_query_in, p.ln_query_in);

    if (need_input_grads) {
        add_into(dq_in, dsum1);
        add_into(dq_in, dropout_backward(dsum1, c.drop_in_mask));
        g.query = std::move(dq_in);
        if (dual) {
            g.key = std::move(gt.dkey);
            add_into(dv_in, gt.dvalue);
            g.value = std::move(dv_in);
        } else {
            add_into(dk_in, gt.dkey);
            add_into(dv_in, gt.dvalue);
            g.key = std::move(dk_in);
            g.value = std::move(dv_in);
        }
    }
    return g;
}

template <typename T>
DecoderStack<T> DecoderStack<T>::make(const DecoderConfig& cfg, SeedStream& rng) {
    cfg.validate();
    DecoderStack s;
    s.config = cfg;
    for (std::size_t i = 0; i < cfg.depth; ++i)
        s.blocks.push_back(BlockParams<T>::make("block" + std::to_string(i), cfg, rng));
    return s;
}

template <typename T>
std::vector<Param<T>*> DecoderStack<T>::params() {
    std::vector<Param<T>*> out;
    for (auto& b : blocks) {
        auto v = b.params();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

template <typename T>
Matrix<T> stack_forward(const Matrix<T>& queries, const Matrix<T>& visual, const DecoderStack<T>& stack,
                        const ForwardContext<T>& ctx, StackCache<T>* cache) {
    if (stack.blocks.empty()) throw ConfigError("stack_forward: empty decoder stack");
    const T eps = static_cast<T>(stack.config.ln_eps);
    const std::size_t heads = stack.config.heads;
    if (cache) cache->blocks.assign(stack.blocks.size(), BlockCache<T>{});
    BlockOutput<T> cur{queries, visual, visual};
    for (std::size_t i = 0; i < stack.blocks.size(); ++i) {
        const auto& b = stack.blocks[i];
        BlockCache<T>* bc = cache ? &cache->blocks[i] : nullptr;
        cur = b.kind == BlockKind::dual_modal
                  ? dm_block_forward(cur.query, cur.key, cur.value, b, heads, eps, ctx, bc)
                  : baseline_block_forward(cur.query, cur.key, cur.value, b, heads, eps, ctx, bc);
    }
    return std::move(cur.query);
}

template <typename T>
void stack_backward(const Matrix<T>& dqueries, const StackCache<T>& cache, DecoderStack<T>& stack) {
    if (cache.blocks.size() != stack.blocks.size()) throw ShapeError("stack_backward: cache does not match stack");
    Matrix<T> dq = dqueries, dk, dv;
    for (std::size_t i = stack.blocks.size(); i-- > 0;) {
        auto g = block_backward(dq, dk, dv, cache.blocks[i], stack.blocks[i], stack.config.heads, i > 0);
        dq = std::move(g.query);
        dk = std::move(g.key);
        dv = std::move(g.value);
    }
}

template <typename T>
ClassifierHead<T> ClassifierHead<T>::make(std::size_t embed_dim, SeedStream& rng) {
    ClassifierHead h;
    h.weight = Param<T>("head.weight", xavier_uniform<T>(embed_dim, 1, rng));
    h.bias = Param<T>("head.bias", Matrix<T>(1, 1));
    return h;
}

template <typename T>
std::vector<T> classify(const Matrix<T>& queries, const ClassifierHead<T>& head) {
    if (head.weight.value.rows() != queries.cols())
        throw ShapeError("classify: head " + head.weight.value.shape() + " for queries " + queries.shape());
    std::vector<T> probs(queries.rows());
    const T b = head.bias.value(0, 0);
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        T z = b;
        for (std::size_t j = 0; j < queries.cols(); ++j) z += queries(i, j) * head.weight.value(j, 0);
        probs[i] = sigmoid(z);
    }
    return probs;
}

template <typename T>
Matrix<T> classify_backward(const Matrix<T>& queries, const std::vector<T>& probs, const std::vector<T>& dprobs,
                            ClassifierHead<T>& head) {
    const std::size_t k = queries.rows(), e = queries.cols();
    Matrix<T> dz(k, 1);
    for (std::size_t i = 0; i < k; ++i) dz(i, 0) = dprobs[i] * probs[i] * (T(1) - probs[i]);
    head.weight.accumulate(matmul_tn(queries, dz));
    head.bias.accumulate(column_sums(dz));
    Matrix<T> dq(k, e);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < e; ++j) dq(i, j) = dz(i, 0) * head.weight.value(j, 0);
    return dq;
}

template <typename T>
Model<T> Model<T>::make(const DecoderConfig& cfg, std::uint64_t seed) {
    SeedStream rng(seed, "init");
    Model m;
    m.stack = DecoderStack<T>::make(cfg, rng);
    m.head = ClassifierHead<T>::make(cfg.embed_dim, rng);
    return m;
}

template <typename T>
std::vector<Param<T>*> Model<T>::params() {
    auto out = stack.params();
    auto h = head.params();
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

template <typename T>
void Model<T>::zero_grad() {
    for (auto* p : params()) p->zero_grad();
}

#define ADDS_INSTANTIATE_DECODER(T)                                                                               \
    template struct BlockParams<T>;                                                                               \
    template struct DecoderStack<T>;                                                                              \
    template struct ClassifierHead<T>;                                                                            \
    template struct Model<T>;                                                                                     \
    template BlockOutput<T> dm_block_forward(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,                \
                                             const BlockParams<T>&, std::size_t, T, const ForwardContext<T>&,     \
                                             BlockCache<T>*);                                                     \
    template BlockOutput<T> baseline_block_forward(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,          \
                                                   const BlockParams<T>&, std::size_t, T,                         \
                                                   const ForwardContext<T>&, BlockCache<T>*);                     \
    template BlockOutput<T> block_backward(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,                  \
                                           const BlockCache<T>&, BlockParams<T>&, std::size_t, bool);             \
    template Matrix<T> stack_forward(const Matrix<T>&, const Matrix<T>&, const DecoderStack<T>&,                  \
                                     const ForwardContext<T>&, StackCache<T>*);                                   \
    template void stack_backward(const Matrix<T>&, const StackCache<T>&, DecoderStack<T>&);                       \
    template std::vector<T> classify(const Matrix<T>&, const ClassifierHead<T>&);                                 \
    template Matrix<T> classify_backward(const Matrix<T>&, const std::vector<T>&, const std::vector<T>&,          \
                                         ClassifierHead<T>&);

ADDS_INSTANTIATE_DECODER(float)
ADDS_INSTANTIATE_DECODER(double)

}  // namespace adds::decoder

// SPDX-License-Identifier: Apache-2.0
//
// Dual-modal decoder. Each block refines the label queries against the
// visual tokens (text -> image cross-attention), then lets the visual tokens
// attend back to the refined label summary so the keys/values handed to the
// next block carry textual information. A simplified baseline block (keys and
// values passed through unchanged) is provided for ablations.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "adds/numerics/layers.hpp"
#include "adds/numerics/matrix.hpp"
#include "adds/numerics/param.hpp"
#include "adds/numerics/rng.hpp"

namespace adds::decoder {

using num::Matrix;
using num::Param;

enum class BlockKind { dual_modal, baseline };

std::string to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& s);

struct DecoderConfig {
    std::size_t embed_dim = 32;
    std::size_t heads = 2;
    /// Hidden width of the feed-forward sublayer; 0 selects 4 * embed_dim.
    std::size_t hidden = 0;
    std::size_t depth = 6;
    double dropout = 0.1;
    double ln_eps = 1e-5;
    BlockKind kind = BlockKind::dual_modal;
    /// Start the label-to-visual query/key projections near the identity, so
    /// attention begins as similarity in the shared embedding space.
    bool identity_qk_init = false;

    std::size_t hidden_width() const { return hidden == 0 ? 4 * embed_dim : hidden; }
    void validate() const;
};

/// Weights of one block. Baseline blocks leave visual_attn, ln_query_out and
/// ln_visual empty.
template <typename T>
struct BlockParams {
    BlockKind kind = BlockKind::dual_modal;
    num::AttentionParams<T> text_attn;    // label queries over visual tokens
    num::AttentionParams<T> visual_attn;  // visual tokens over refined labels
    num::FeedForwardParams<T> ffn;
    num::LayerNormParams<T> ln_query_in;   // Q_mid1
    num::LayerNormParams<T> ln_attn;       // Q_mid3
    num::LayerNormParams<T> ln_ffn;        // Q_mid5
    num::LayerNormParams<T> ln_query_out;  // Q'
    num::LayerNormParams<T> ln_visual;     // V'
    double dropout = 0.0;

    static BlockParams make(const std::string& name, const DecoderConfig& cfg, num::SeedStream& rng);
    std::vector<Param<T>*> params();
    std::size_t layer_norm_count() const { return kind == BlockKind::dual_modal ? 5 : 3; }
};

/// Dropout is only active in training mode and draws from `rng`.
template <typename T>
struct ForwardContext {
    bool training = false;
    num::SeedStream* rng = nullptr;
};

template <typename T>
struct BlockOutput {
    Matrix<T> query, key, value;
};

template <typename T>
struct BlockCache {
    Matrix<T> query_in;
    Matrix<T> drop_in_mask, drop_ffn_mask;
    num::LayerNormCache<T> ln_query_in, ln_attn, ln_ffn, ln_query_out, ln_visual;
    num::AttentionCache<T> text_attn, visual_attn;
    num::FeedForwardCache<T> ffn;
};

template <typename T>
BlockOutput<T> dm_block_forward(const Matrix<T>& query, const Matrix<T>& key, const Matrix<T>& value,
                                const BlockParams<T>& p, std::size_t heads, T ln_eps,
                                const ForwardContext<T>& ctx, BlockCache<T>* cache = nullptr);

template <typename T>
BlockOutput<T> baseline_block_forward(const Matrix<T>& query, const Matrix<T>& key, const Matrix<T>& value,
                                      const BlockParams<T>& p, std::size_t heads, T ln_eps,
                                      const ForwardContext<T>& ctx, BlockCache<T>* cache = nullptr);

/// Gradients with respect to the block inputs. Empty `dkey`/`dvalue` on the
/// way in mean zero upstream gradient. With `need_input_grads` false only the
/// parameter gradients are produced.
template <typename T>
BlockOutput<T> block_backward(const Matrix<T>& dquery, const Matrix<T>& dkey, const Matrix<T>& dvalue,
                              const BlockCache<T>& cache, BlockParams<T>& p, std::size_t heads,
                              bool need_input_grads);

template <typename T>
struct DecoderStack {
    DecoderConfig config;
    std::vector<BlockParams<T>> blocks;

    static DecoderStack make(const DecoderConfig& cfg, num::SeedStream& rng);
    std::vector<Param<T>*> params();
};

template <typename T>
struct StackCache {
    std::vector<BlockCache<T>> blocks;
};

/// Threads (Q, K=V=visual) through the blocks and returns the final queries.
template <typename T>
Matrix<T> stack_forward(const Matrix<T>& queries, const Matrix<T>& visual, const DecoderStack<T>& stack,
                        const ForwardContext<T>& ctx, StackCache<T>* cache = nullptr);

/// Backward through the stack from the gradient of the final queries.
/// Inputs are frozen embeddings, so no input gradient is returned.
template <typename T>
void stack_backward(const Matrix<T>& dqueries, const StackCache<T>& cache, DecoderStack<T>& stack);

/// One weight vector and bias shared by every label row.
template <typename T>
struct ClassifierHead {
    Param<T> weight;  // [e x 1]
    Param<T> bias;    // [1 x 1]

    static ClassifierHead make(std::size_t embed_dim, num::SeedStream& rng);
    std::vector<Param<T>*> params() { return {&weight, &bias}; }
};

/// Per-label probabilities sigmoid(w . q_i + b).
template <typename T>
std::vector<T> classify(const Matrix<T>& queries, const ClassifierHead<T>& head);

/// Backward of classify given dL/dp; returns dL/dQ.
template <typename T>
Matrix<T> classify_backward(const Matrix<T>& queries, const std::vector<T>& probs, const std::vector<T>& dprobs,
                            ClassifierHead<T>& head);

/// Decoder stack plus shared head: everything the optimizer updates.
template <typename T>
struct Model {
    DecoderStack<T> stack;
    ClassifierHead<T> head;

    static Model make(const DecoderConfig& cfg, std::uint64_t seed);
    std::vector<Param<T>*> params();
    void zero_grad();
};

}  // namespace adds::decoder

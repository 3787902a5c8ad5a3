#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "../support/oracles.hpp"
#include "adds/decoder/decoder.hpp"
#include "adds/decoder/grad_suite.hpp"

using namespace adds;
using decoder::BlockKind;
using num::MatrixD;

namespace {

decoder::DecoderConfig small(std::size_t e, std::size_t heads, std::size_t depth, BlockKind kind) {
    decoder::DecoderConfig c;
    c.embed_dim = e;
    c.heads = heads;
    c.depth = depth;
    c.dropout = 0.0;
    c.kind = kind;
    return c;
}

// Randomise LN gains/biases and attention biases so the oracle comparison
// does not hide behind identity-valued parameters.
void perturb(decoder::BlockParams<double>& p, num::SeedStream& rng) {
    for (auto* q : p.params()) {
        const bool is_gain = q->name.ends_with(".gain");
        for (auto& v : q->value.data())
            if (q->value.rows() == 1) v = (is_gain ? 1.0 : 0.0) + 0.3 * rng.normal();
    }
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("dual-modal block shapes and key/value identity") {
    num::SeedStream rng(1, "dm");
    const auto cfg = small(8, 2, 1, BlockKind::dual_modal);
    const auto p = decoder::BlockParams<double>::make("b", cfg, rng);
    const auto q = oracle::random_matrix(5, 8, rng), v = oracle::random_matrix(12, 8, rng);
    const auto out = decoder::dm_block_forward(q, v, v, p, 2, 1e-5, decoder::ForwardContext<double>{});
    CHECK(out.query.rows() == 5);
    CHECK(out.query.cols() == 8);
    CHECK(out.value.rows() == 12);
    CHECK(out.key == out.value);
    CHECK(out.value != v);

    const auto again = decoder::dm_block_forward(q, v, v, p, 2, 1e-5, decoder::ForwardContext<double>{});
    CHECK(again.query == out.query);
    CHECK(again.value == out.value);
}

TEST_CASE("dual-modal block matches the line-by-line transcription") {
    const auto cfg = small(4, 1, 1, BlockKind::dual_modal);
    num::SeedStream rng(42, "oracle");
    auto p = decoder::BlockParams<double>::make("b", cfg, rng);
    perturb(p, rng);
    const auto q = oracle::random_matrix(1, 4, rng), v = oracle::random_matrix(2, 4, rng);
    const auto out = decoder::dm_block_forward(q, v, v, p, 1, 1e-5, decoder::ForwardContext<double>{});
    const auto ref = oracle::dm_block(oracle::rows_of(q), oracle::rows_of(v), oracle::rows_of(v), p, 1, 1e-5);
    CHECK(oracle::max_abs_diff(ref.query, out.query) < 1e-10);
    CHECK(oracle::max_abs_diff(ref.value, out.value) < 1e-10);
    CHECK(oracle::max_abs_diff(ref.key, out.key) < 1e-10);

    // wider instance with two heads
    const auto cfg2 = small(8, 2, 1, BlockKind::dual_modal);
    auto p2 = decoder::BlockParams<double>::make("b", cfg2, rng);
    perturb(p2, rng);
    const auto q2 = oracle::random_matrix(3, 8, rng), v2 = oracle::random_matrix(6, 8, rng);
    const auto out2 = decoder::dm_block_forward(q2, v2, v2, p2, 2, 1e-5, decoder::ForwardContext<double>{});
    const auto ref2 = oracle::dm_block(oracle::rows_of(q2), oracle::rows_of(v2), oracle::rows_of(v2), p2, 2, 1e-5);
    CHECK(oracle::max_abs_diff(ref2.query, out2.query) < 1e-10);
    CHECK(oracle::max_abs_diff(ref2.value, out2.value) < 1e-10);
}

TEST_CASE("dual-modal key equals value bit-exactly on random instances") {
    num::SeedStream rng(3, "kv");
    for (int t = 0; t < 100; ++t) {
        const std::size_t heads = 1 + rng.below(2), e = heads * (1 + rng.below(4));
        const auto cfg = small(e, heads, 1, BlockKind::dual_modal);
        const auto p = decoder::BlockParams<double>::make("b", cfg, rng);
        const auto k = oracle::random_matrix(1 + rng.below(5), e, rng);
        const auto v = oracle::random_matrix(1 + rng.below(7), e, rng);
        const auto out = decoder::dm_block_forward(k, v, v, p, heads, 1e-5, decoder::ForwardContext<double>{});
        CHECK(out.key == out.value);
        CHECK(out.query.rows() == k.rows());
        CHECK(out.value.rows() == v.rows());
    }
}

TEST_CASE("baseline block") {
    num::SeedStream rng(4, "base");
    const auto cfg = small(4, 1, 1, BlockKind::baseline);
    auto p = decoder::BlockParams<double>::make("b", cfg, rng);
    perturb(p, rng);
    const auto q = oracle::random_matrix(1, 4, rng), k = oracle::random_matrix(3, 4, rng),
               v = oracle::random_matrix(3, 4, rng);
    const auto out = decoder::baseline_block_forward(q, k, v, p, 1, 1e-5, decoder::ForwardContext<double>{});
    CHECK(out.key == k);
    CHECK(out.value == v);
    const auto ref = oracle::baseline_block(oracle::rows_of(q), oracle::rows_of(k), oracle::rows_of(v), p, 1, 1e-5);
    CHECK(oracle::max_abs_diff(ref.query, out.query) < 1e-10);
    CHECK(p.layer_norm_count() == 3);
}

TEST_CASE("block layout") {
    num::SeedStream rng(5, "layout");
    auto cfg = small(8, 2, 1, BlockKind::dual_modal);
    cfg.hidden = 12;
    auto p = decoder::BlockParams<double>::make("b", cfg, rng);
    CHECK(p.layer_norm_count() == 5);
    for (auto* a : {&p.text_attn, &p.visual_attn})
        for (auto* w : {&a->wq, &a->wk, &a->wv, &a->wo}) CHECK(w->value.shape() == "[8x8]");
    CHECK(p.ffn.expand_w.value.shape() == "[8x12]");
    CHECK(p.ffn.project_w.value.shape() == "[12x8]");
    CHECK(p.text_attn.wq.value != p.visual_attn.wq.value);
}

TEST_CASE("stack composition") {
    num::SeedStream rng(6, "stack");
    const auto q = oracle::random_matrix(4, 8, rng), v = oracle::random_matrix(9, 8, rng);
    const decoder::ForwardContext<double> ctx{};

    SUBCASE("one block equals a single call") {
        num::SeedStream r(7, "s");
        const auto stack = decoder::DecoderStack<double>::make(small(8, 2, 1, BlockKind::dual_modal), r);
        const auto one = decoder::dm_block_forward(q, v, v, stack.blocks[0], 2, 1e-5, ctx);
        CHECK(decoder::stack_forward(q, v, stack, ctx) == one.query);
    }
    SUBCASE("three blocks equal manual chaining") {
        num::SeedStream r(8, "s");
        const auto stack = decoder::DecoderStack<double>::make(small(8, 2, 3, BlockKind::dual_modal), r);
        MatrixD qq = q, kk = v, vv = v;
        for (const auto& b : stack.blocks) {
            auto o = decoder::dm_block_forward(qq, kk, vv, b, 2, 1e-5, ctx);
            qq = o.query;
            kk = o.key;
            vv = o.value;
        }
        CHECK(decoder::stack_forward(q, v, stack, ctx) == qq);
    }
    SUBCASE("six blocks keep the query shape") {
        num::SeedStream r(9, "s");
        const auto stack = decoder::DecoderStack<double>::make(small(8, 2, 6, BlockKind::dual_modal), r);
        const auto out = decoder::stack_forward(q, v, stack, ctx);
        CHECK(out.rows() == 4);
        CHECK(out.cols() == 8);
    }
    SUBCASE("baseline stack never touches keys and values") {
        num::SeedStream r(10, "s");
        const auto stack = decoder::DecoderStack<double>::make(small(8, 2, 4, BlockKind::baseline), r);
        MatrixD qq = q, kk = v, vv = v;
        for (const auto& b : stack.blocks) {
            auto o = decoder::baseline_block_forward(qq, kk, vv, b, 2, 1e-5, ctx);
            CHECK(o.key == v);
            CHECK(o.value == v);
            qq = o.query;
        }
        CHECK(decoder::stack_forward(q, v, stack, ctx) == qq);
    }
}

TEST_CASE("dropout in training mode is seeded") {
    auto cfg = small(8, 2, 2, BlockKind::dual_modal);
    cfg.dropout = 0.3;
    num::SeedStream r(11, "s");
    const auto stack = decoder::DecoderStack<double>::make(cfg, r);
    num::SeedStream rng(12, "in");
    const auto q = oracle::random_matrix(3, 8, rng), v = oracle::random_matrix(5, 8, rng);
    num::SeedStream d1(5, "drop"), d2(5, "drop"), d3(6, "drop");
    const auto a = decoder::stack_forward(q, v, stack, decoder::ForwardContext<double>{true, &d1});
    const auto b = decoder::stack_forward(q, v, stack, decoder::ForwardContext<double>{true, &d2});
    const auto c = decoder::stack_forward(q, v, stack, decoder::ForwardContext<double>{true, &d3});
    CHECK(a == b);
    CHECK(a != c);
    CHECK(decoder::stack_forward(q, v, stack, decoder::ForwardContext<double>{}) != a);
}

TEST_CASE("shared classifier head") {
    num::SeedStream rng(13, "head");
    auto head = decoder::ClassifierHead<double>::make(6, rng);
    const auto q = oracle::random_matrix(4, 6, rng);

    auto zero = head;
    zero.weight.value.fill(0.0);
    zero.bias.value.fill(0.0);
    for (double p : decoder::classify(q, zero)) CHECK(p == 0.5);

    head.bias.value(0, 0) = 0.3;
    const auto probs = decoder::classify(q, head);
    for (std::size_t i = 0; i < 4; ++i) {
        double z = head.bias.value(0, 0);
        for (std::size_t j = 0; j < 6; ++j) z += q(i, j) * head.weight.value(j, 0);
        CHECK(std::abs(probs[i] - 1.0 / (1.0 + std::exp(-z))) < 1e-12);
    }

    const std::vector<std::size_t> perm{2, 0, 3, 1};
    MatrixD shuffled(4, 6);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j) shuffled(i, j) = q(perm[i], j);
    const auto sp = decoder::classify(shuffled, head);
    for (std::size_t i = 0; i < 4; ++i) CHECK(sp[i] == probs[perm[i]]);
    CHECK(head.weight.value.shape() == "[6x1]");
}

TEST_CASE("end-to-end gradients") {
    for (auto kind : {BlockKind::dual_modal, BlockKind::baseline}) {
        for (std::size_t depth : {1u, 2u}) {
            decoder::GradSuiteConfig g;
            g.kind = kind;
            g.depth = depth;
            const auto r = decoder::run_grad_suite(g);
            CHECK(r.max_relative_error < 1e-4);
            CHECK_FALSE(r.frozen_violation);
        }
    }
    decoder::GradSuiteConfig bce;
    bce.asl.gamma_neg = 0.0;
    bce.asl.margin = 0.0;
    CHECK(decoder::run_grad_suite(bce).max_relative_error < 1e-4);

    decoder::GradSuiteConfig bad;
    bad.corrupt = true;
    CHECK(decoder::run_grad_suite(bad).max_relative_error > 1e-2);

    CHECK(decoder::quadratic_self_test(12, 1e-3).max_relative_error < 1e-9);
    CHECK(decoder::quadratic_self_test(12, 1e-5).max_relative_error < 1e-9);
}

TEST_CASE("identity initialisation") {
    auto cfg = small(8, 2, 2, BlockKind::dual_modal);
    cfg.identity_qk_init = true;
    const auto m = decoder::Model<double>::make(cfg, 3);
    for (const auto& b : m.stack.blocks) {
        for (std::size_t i = 0; i < 8; ++i) {
            CHECK(std::abs(b.text_attn.wq.value(i, i) - 1.0) < 0.1);
            CHECK(std::abs(b.text_attn.wk.value(i, i) - 1.0) < 0.1);
        }
        for (double v : b.visual_attn.wo.value.data()) CHECK(v == 0.0);
    }
    // closed visual branch: V' is just LN(V)
    num::SeedStream rng(14, "id");
    const auto q = oracle::random_matrix(3, 8, rng), v = oracle::random_matrix(5, 8, rng);
    const auto out =
        decoder::dm_block_forward(q, v, v, m.stack.blocks[0], 2, 1e-5, decoder::ForwardContext<double>{});
    const auto& ln = m.stack.blocks[0].ln_visual;
    const auto ref = oracle::layer_norm(oracle::rows_of(v), ln.gain.value, ln.bias.value, 1e-5);
    CHECK(oracle::max_abs_diff(ref, out.value) < 1e-12);
}

TEST_CASE("config validation") {
    auto c = small(8, 3, 1, BlockKind::dual_modal);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small(8, 2, 0, BlockKind::dual_modal);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(decoder::block_kind_from_string("dual") == BlockKind::dual_modal);
    CHECK(decoder::block_kind_from_string("baseline") == BlockKind::baseline);
    CHECK_THROWS_AS(decoder::block_kind_from_string("transformer"), ConfigError);
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "adds/numerics/grad_check.hpp"
#include "adds/numerics/layers.hpp"
#include "adds/numerics/ops.hpp"
#include "adds/numerics/param.hpp"

using namespace adds;
using num::MatrixD;

TEST_SUITE("numerics") {

TEST_CASE("matmul small cases") {
    num::SeedStream rng(1, "mm");
    const MatrixD b = oracle::random_matrix(3, 4, rng);
    CHECK(num::matmul(MatrixD::identity(3), b) == b);

    const MatrixD a{{1, 2}, {3, 4}}, v{{0}, {1}};
    CHECK(num::matmul(a, v) == MatrixD{{2}, {4}});

    CHECK_THROWS_AS(num::matmul(a, b), ShapeError);
}

TEST_CASE("matmul matches triple loop") {
    num::SeedStream rng(2, "mm");
    const MatrixD a = oracle::random_matrix(5, 7, rng), b = oracle::random_matrix(7, 3, rng);
    CHECK(oracle::max_abs_diff(oracle::mm(oracle::rows_of(a), oracle::rows_of(b)), num::matmul(a, b)) < 1e-12);
    CHECK(num::matmul_tn(num::transpose(a), b) == num::matmul(a, b));
    CHECK(num::matmul_nt(a, num::transpose(b)) == num::matmul(a, b));
}

TEST_CASE("matmul is associative on random triples") {
    num::SeedStream rng(3, "assoc");
    for (int t = 0; t < 50; ++t) {
        const auto a = oracle::random_matrix(1 + rng.below(6), 1 + rng.below(6), rng);
        const auto b = oracle::random_matrix(a.cols(), 1 + rng.below(6), rng);
        const auto c = oracle::random_matrix(b.cols(), 1 + rng.below(6), rng);
        const auto left = num::matmul(num::matmul(a, b), c);
        const auto right = num::matmul(a, num::matmul(b, c));
        CHECK(oracle::max_abs_diff(oracle::rows_of(left), right) < 1e-9);
    }
}

TEST_CASE("softmax") {
    const auto u = num::softmax_rows(MatrixD{{2.5, 2.5, 2.5, 2.5}});
    for (double v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    const auto p = num::softmax_rows(MatrixD{{0.0, std::log(3.0)}});
    CHECK(p(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

    const auto s = num::softmax_rows(MatrixD{{1e4, 0.0, -3.0}});
    CHECK(std::abs(s(0, 0) - 1.0) < 1e-9);

    num::SeedStream rng(4, "softmax");
    for (int t = 0; t < 200; ++t) {
        const auto m = oracle::random_matrix(1 + rng.below(5), 1 + rng.below(9), rng, 30.0);
        const auto y = num::softmax_rows(m);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double sum = 0.0;
            for (double v : y.row(i)) sum += v;
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
        CHECK(num::all_finite(y));
    }
}

TEST_CASE("layer norm") {
    const MatrixD gain(1, 3, 1.0), bias(1, 3, 0.0);
    const auto z = num::layer_norm(MatrixD{{7, 7, 7}}, gain, bias, 1e-5);
    for (double v : z.data()) CHECK(v == 0.0);

    const auto n = num::layer_norm(MatrixD{{1, -1}}, MatrixD(1, 2, 1.0), MatrixD(1, 2), 0.0);
    CHECK(n(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(n(0, 1) == doctest::Approx(-1.0).epsilon(1e-15));

    num::SeedStream rng(5, "ln");
    const auto x = oracle::random_matrix(3, 4, rng);
    const auto g = oracle::random_matrix(1, 4, rng), b = oracle::random_matrix(1, 4, rng);
    CHECK(oracle::max_abs_diff(oracle::layer_norm(oracle::rows_of(x), g, b, 1e-5), num::layer_norm(x, g, b, 1e-5)) <
          1e-10);
}

TEST_CASE("attention") {
    SUBCASE("single key broadcasts its value") {
        num::SeedStream rng(0, "x");
        auto p = num::AttentionParams<double>::make("a", 3, rng);
        for (auto* w : {&p.wq, &p.wk, &p.wv, &p.wo}) w->value = MatrixD::identity(3);
        const MatrixD q{{1, 2, 3}, {-1, 0, 4}}, kv{{0.5, -2, 9}};
        const auto out = num::multi_head_attention(q, kv, kv, p, 1);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j) CHECK(out(i, j) == kv(0, j));
    }
    SUBCASE("shape") {
        num::SeedStream rng(6, "att");
        const auto p = num::AttentionParams<double>::make("a", 8, rng);
        const auto out =
            num::multi_head_attention(oracle::random_matrix(5, 8, rng), oracle::random_matrix(12, 8, rng),
                                      oracle::random_matrix(12, 8, rng), p, 2);
        CHECK(out.rows() == 5);
        CHECK(out.cols() == 8);
        CHECK_THROWS_AS(num::multi_head_attention(MatrixD(1, 8), MatrixD(2, 8), MatrixD(2, 8), p, 3), ConfigError);
    }
    SUBCASE("scalar oracle") {
        num::SeedStream rng(7, "att");
        auto p = num::AttentionParams<double>::make("a", 4, rng);
        for (auto* b : {&p.bq, &p.bk, &p.bv, &p.bo}) b->value = oracle::random_matrix(1, 4, rng);
        const auto q = oracle::random_matrix(2, 4, rng), kv = oracle::random_matrix(3, 4, rng);
        for (std::size_t heads : {1u, 2u, 4u}) {
            const auto out = num::multi_head_attention(q, kv, kv, p, heads);
            const auto ref = oracle::attention(oracle::rows_of(q), oracle::rows_of(kv), oracle::rows_of(kv), p, heads);
            CHECK(oracle::max_abs_diff(ref, out) < 1e-10);
        }
    }
}

TEST_CASE("feed forward") {
    num::SeedStream rng(8, "ffn");
    auto p = num::FeedForwardParams<double>::make("f", 4, 6, rng);
    p.project_b.value = oracle::random_matrix(1, 4, rng);

    SUBCASE("all-negative pre-activation leaves the output bias") {
        auto q = p;
        q.expand_b.value = MatrixD(1, 6, -1e3);
        const auto out = num::feed_forward(oracle::random_matrix(3, 4, rng), q);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(out(i, j) == q.project_b.value(0, j));
    }
    SUBCASE("zero weights") {
        auto z = p;
        for (auto* w : z.params()) w->value.fill(0.0);
        const auto out = num::feed_forward(oracle::random_matrix(2, 4, rng), z);
        for (double v : out.data()) CHECK(v == 0.0);
    }
    SUBCASE("loop oracle") {
        p.expand_b.value = oracle::random_matrix(1, 6, rng);
        const auto x = oracle::random_matrix(2, 4, rng);
        CHECK(oracle::max_abs_diff(oracle::feed_forward(oracle::rows_of(x), p), num::feed_forward(x, p)) < 1e-10);
    }
}

TEST_CASE("dropout") {
    num::SeedStream rng(9, "drop");
    const auto x = oracle::random_matrix(4, 5, rng);
    CHECK(num::dropout(x, 0.0, rng, true) == x);
    CHECK(num::dropout(x, 0.7, rng, false) == x);
    CHECK_THROWS_AS(num::dropout(x, 1.0, rng, true), ConfigError);

    const MatrixD ones(1000, 100, 1.0);
    num::SeedStream a(11, "drop"), b(11, "drop");
    const auto y = num::dropout(ones, 0.5, a, true);
    CHECK(num::dropout(ones, 0.5, b, true) == y);
    double kept = 0.0, mean = 0.0;
    for (double v : y.data()) {
        kept += v != 0.0;
        mean += v;
    }
    kept /= static_cast<double>(y.size());
    mean /= static_cast<double>(y.size());
    CHECK(std::abs(kept - 0.5) < 0.01);
    CHECK(std::abs(mean - 1.0) < 0.02);
}

TEST_CASE("grad_check on a quadratic and a frozen param") {
    num::SeedStream rng(12, "gc");
    num::Param<double> theta("theta", oracle::random_matrix(3, 3, rng));
    num::Param<double> frozen("frozen", oracle::random_matrix(1, 2, rng), false);
    std::vector<num::Param<double>*> params{&theta, &frozen};
    const num::LossFn f = [&](bool backward) {
        double s = 0.0;
        for (double v : theta.value.data()) s += 0.5 * v * v;
        for (double v : frozen.value.data()) s += v * v;
        if (backward) {
            theta.zero_grad();
            frozen.zero_grad();
            theta.accumulate(theta.value);
            frozen.accumulate(num::scale(frozen.value, 2.0));
        }
        return s;
    };
    const auto r = num::grad_check(f, params, 1e-5);
    CHECK(r.max_relative_error < 1e-9);
    CHECK_FALSE(r.frozen_violation);
    for (double g : frozen.grad.data()) CHECK(g == 0.0);
    CHECK(r.checked == 9);
}

// Random linear read-out of an op's output, so every output entry gets a
// distinct upstream gradient.
TEST_CASE("per-op gradients") {
    num::SeedStream rng(13, "ops");
    auto readout = [](const MatrixD& y, const MatrixD& w) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
        return s;
    };

    SUBCASE("layer norm") {
        auto p = num::LayerNormParams<double>::make("ln", 6);
        p.gain.value = oracle::random_matrix(1, 6, rng);
        num::Param<double> x("x", oracle::random_matrix(4, 6, rng));
        const auto w = oracle::random_matrix(4, 6, rng);
        std::vector<num::Param<double>*> params{&x, &p.gain, &p.bias};
        const num::LossFn f = [&](bool backward) {
            num::LayerNormCache<double> c;
            const auto y = num::layer_norm(x.value, p, 1e-5, &c);
            if (backward) {
                for (auto* q : params) q->zero_grad();
                x.accumulate(num::layer_norm_backward(w, c, p));
            }
            return readout(y, w);
        };
        CHECK(num::grad_check(f, params, 1e-5, 1e-6).max_relative_error < 1e-4);
    }
    SUBCASE("attention") {
        auto p = num::AttentionParams<double>::make("a", 8, rng);
        for (auto* b : {&p.bq, &p.bk, &p.bv, &p.bo}) b->value = oracle::random_matrix(1, 8, rng, 0.1);
        num::Param<double> q("q", oracle::random_matrix(3, 8, rng)), k("k", oracle::random_matrix(5, 8, rng)),
            v("v", oracle::random_matrix(5, 8, rng));
        const auto w = oracle::random_matrix(3, 8, rng);
        auto params = p.params();
        params.insert(params.end(), {&q, &k, &v});
        const num::LossFn f = [&](bool backward) {
            num::AttentionCache<double> c;
            const auto y = num::multi_head_attention(q.value, k.value, v.value, p, 2, &c);
            if (backward) {
                for (auto* x : params) x->zero_grad();
                const auto g = num::multi_head_attention_backward(w, c, p, 2);
                q.accumulate(g.dquery);
                k.accumulate(g.dkey);
                v.accumulate(g.dvalue);
            }
            return readout(y, w);
        };
        CHECK(num::grad_check(f, params, 1e-5, 1e-6).max_relative_error < 1e-4);
    }
    SUBCASE("feed forward") {
        auto p = num::FeedForwardParams<double>::make("f", 4, 7, rng);
        p.expand_b.value = oracle::random_matrix(1, 7, rng, 0.1);
        num::Param<double> x("x", oracle::random_matrix(3, 4, rng));
        const auto w = oracle::random_matrix(3, 4, rng);
        auto params = p.params();
        params.push_back(&x);
        const num::LossFn f = [&](bool backward) {
            num::FeedForwardCache<double> c;
            const auto y = num::feed_forward(x.value, p, &c);
            if (backward) {
                for (auto* q : params) q->zero_grad();
                x.accumulate(num::feed_forward_backward(w, c, p));
            }
            return readout(y, w);
        };
        CHECK(num::grad_check(f, params, 1e-5, 1e-6).max_relative_error < 1e-4);
    }
    SUBCASE("dropout with a fixed mask") {
        num::Param<double> x("x", oracle::random_matrix(3, 5, rng));
        const auto w = oracle::random_matrix(3, 5, rng);
        std::vector<num::Param<double>*> params{&x};
        const num::LossFn f = [&](bool backward) {
            num::SeedStream d(99, "mask");
            MatrixD mask;
            const auto y = num::dropout(x.value, 0.3, d, true, &mask);
            if (backward) {
                x.zero_grad();
                x.accumulate(num::dropout_backward(w, mask));
            }
            return readout(y, w);
        };
        CHECK(num::grad_check(f, params, 1e-5, 1e-6).max_relative_error < 1e-4);
    }
}

TEST_CASE("adam") {
    num::SeedStream rng(14, "adam");
    num::Param<double> w("w", oracle::random_matrix(2, 3, rng));
    num::Param<double> frozen("f", oracle::random_matrix(1, 3, rng), false);
    std::vector<num::Param<double>*> params{&w, &frozen};
    auto state = num::AdamState<double>::for_params(params);

    const auto before = w.value;
    num::AdamConfig cfg;
    cfg.weight_decay = 0.0;
    num::adam_step<double>(params, cfg, state);
    CHECK(w.value == before);
    CHECK(state.step == 1);

    const auto frozen_before = frozen.value;
    frozen.grad.fill(1.0);
    for (int i = 0; i < 20; ++i) num::adam_step<double>(params, cfg, state);
    CHECK(frozen.value == frozen_before);
    CHECK(state.step == 21);

    cfg.lr = 0.0;
    CHECK_THROWS_AS(num::adam_step<double>(params, cfg, state), ConfigError);
}

TEST_CASE("adam converges on a 1-d quadratic") {
    num::Param<double> theta("theta", MatrixD{{1.0}});
    std::vector<num::Param<double>*> params{&theta};
    auto state = num::AdamState<double>::for_params(params);
    num::AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    for (int i = 0; i < 200; ++i) {
        theta.grad(0, 0) = theta.value(0, 0);
        num::adam_step<double>(params, cfg, state);
    }
    CHECK(std::abs(theta.value(0, 0)) < 1e-3);
}

TEST_CASE("random orthogonal") {
    num::SeedStream rng(15, "orth");
    const auto q = num::random_orthogonal<double>(9, rng);
    const auto qtq = num::matmul_tn(q, q);
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < 9; ++j) CHECK(std::abs(qtq(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
}

TEST_CASE("seed streams") {
    num::SeedStream a(5, "x"), b(5, "x"), c(5, "y");
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());
    CHECK(a.fork(3).next_u64() == b.fork(3).next_u64());
    CHECK(a.fork(3).next_u64() != a.fork(4).next_u64());

    num::SeedStream d(5, "x");
    d.set_counter(a.counter());
    CHECK(d.next_u64() == a.next_u64());
}

}  // TEST_SUITE

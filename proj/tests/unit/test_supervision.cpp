#include <doctest.h>

#include <cmath>
#include <set>

#include "adds/numerics/rng.hpp"
#include "adds/supervision/supervision.hpp"

using namespace adds;

namespace {

sup::AslConfig plain_bce() {
    sup::AslConfig c;
    c.gamma_pos = 0.0;
    c.gamma_neg = 0.0;
    c.margin = 0.0;
    return c;
}

std::vector<std::vector<std::uint8_t>> one_row(std::size_t k, std::initializer_list<std::size_t> pos) {
    std::vector<std::uint8_t> y(k, 0);
    for (auto p : pos) y[p] = 1;
    return {y};
}

}  // namespace

TEST_SUITE("supervision") {

TEST_CASE("selection size law") {
    num::SeedStream rng(1, "sel");
    const auto sel = sup::select_labels(one_row(10, {2, 5}), 3.0, rng);
    CHECK(sel.sampled_negatives.size() == 6);
    CHECK(sel.selected.size() == 8);
    CHECK(std::binary_search(sel.selected.begin(), sel.selected.end(), 2));
    CHECK(std::binary_search(sel.selected.begin(), sel.selected.end(), 5));

    const auto all = sup::select_labels(one_row(4, {0, 1, 2, 3}), 3.0, rng);
    CHECK(all.sampled_negatives.empty());
    CHECK(all.selected == std::vector<std::size_t>{0, 1, 2, 3});

    CHECK(sup::negative_budget(2, 4, 3.0) == 2);
    CHECK(sup::negative_budget(0, 9, 3.0) == 0);
    CHECK(sup::negative_budget(3, 20, 0.5) == 1);
    CHECK_THROWS_AS(sup::select_labels(one_row(4, {1}), -1.0, rng), ConfigError);
}

TEST_CASE("selection pools positives across the batch") {
    num::SeedStream rng(2, "pool");
    std::vector<std::vector<std::uint8_t>> batch = {{1, 0, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 1, 0, 0, 0, 0}};
    const auto sel = sup::select_labels(batch, 1.0, rng);
    CHECK(sel.positives == std::vector<std::size_t>{0, 3});
    CHECK(sel.selected.size() == 4);
}

TEST_CASE("selection law holds for every positive subset up to k = 10") {
    num::SeedStream rng(3, "exh");
    for (std::size_t k = 1; k <= 10; ++k)
        for (std::uint32_t mask = 0; mask < (1u << k); ++mask)
            for (double alpha : {0.0, 1.0, 3.0}) {
                std::vector<std::uint8_t> y(k);
                std::size_t npos = 0;
                for (std::size_t i = 0; i < k; ++i) npos += (y[i] = (mask >> i) & 1u);
                const std::vector<std::vector<std::uint8_t>> batch{y};
                const auto sel = sup::select_labels(batch, alpha, rng);
                const std::size_t expect = npos + std::min(static_cast<std::size_t>(alpha * npos), k - npos);
                REQUIRE(sel.selected.size() == expect);
                for (std::size_t i = 0; i < k; ++i)
                    if (y[i]) REQUIRE(std::binary_search(sel.selected.begin(), sel.selected.end(), i));
                REQUIRE(std::set<std::size_t>(sel.selected.begin(), sel.selected.end()).size() == expect);
            }
}

TEST_CASE("negative sampling is uniform") {
    const std::size_t k = 1000, draws = 10000;
    std::vector<std::uint8_t> y(k, 0);
    for (std::size_t i = 0; i < 10; ++i) y[i * 97] = 1;
    const std::vector<std::vector<std::uint8_t>> batch{y};
    std::vector<std::size_t> counts(k, 0);
    num::SeedStream base(4, "uniform");
    for (std::size_t d = 0; d < draws; ++d) {
        auto rng = base.fork(d);
        for (auto n : sup::select_labels(batch, 3.0, rng).sampled_negatives) ++counts[n];
    }
    const double p = 30.0 / 990.0;
    const double mean = draws * p, sigma = std::sqrt(draws * p * (1 - p));
    std::size_t outside = 0;
    for (std::size_t i = 0; i < k; ++i) {
        if (y[i]) {
            CHECK(counts[i] == 0);
            continue;
        }
        if (std::abs(static_cast<double>(counts[i]) - mean) > 3.0 * sigma) ++outside;
    }
    // 990 classes at a 3-sigma band: ~2.7 expected outside by chance
    CHECK(outside <= 10);
}

TEST_CASE("asymmetric loss values") {
    const std::vector<double> half{0.5};
    const std::vector<std::uint8_t> pos{1}, neg{0};
    CHECK(sup::asl_loss<double>(half, pos, plain_bce()).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    const std::vector<double> near_one{1.0 - 1e-9};
    CHECK(sup::asl_loss<double>(near_one, pos, sup::AslConfig{}).loss < 1e-6);

    sup::AslConfig c;
    c.gamma_pos = 0.0;
    c.gamma_neg = 4.0;
    c.margin = 0.05;
    const std::vector<double> p{0.3};
    const double expect = -std::pow(0.25, 4) * std::log(0.75);
    CHECK(sup::asl_loss<double>(p, neg, c).loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(1.124e-3).epsilon(1e-3));

    // below the margin a negative costs nothing
    const std::vector<double> small{0.03};
    const auto r = sup::asl_loss<double>(small, neg, c);
    CHECK(r.loss == 0.0);
    CHECK(r.grad[0] == 0.0);
}

TEST_CASE("asymmetric loss reduces to cross-entropy") {
    num::SeedStream rng(5, "bce");
    std::vector<double> p(10000);
    std::vector<std::uint8_t> y(10000);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = rng.uniform(0.001, 0.999);
        y[i] = rng.bernoulli(0.5);
    }
    CHECK(std::abs(sup::asl_loss<double>(p, y, plain_bce()).loss - sup::bce_loss(p, y)) < 1e-12);
    for (std::size_t i = 0; i < 200; ++i) {
        const std::vector<double> pi{p[i]};
        const std::vector<std::uint8_t> yi{y[i]};
        CHECK(std::abs(sup::asl_loss<double>(pi, yi, plain_bce()).loss - sup::bce_loss(pi, yi)) < 1e-12);
    }
}

TEST_CASE("asymmetric loss gradient away from the margin kink") {
    num::SeedStream rng(6, "aslgrad");
    for (double gp : {0.0, 1.0}) {
        for (double gn : {0.0, 4.0}) {
            sup::AslConfig c;
            c.gamma_pos = gp;
            c.gamma_neg = gn;
            c.margin = 0.05;
            std::vector<double> p(8);
            std::vector<std::uint8_t> y(8);
            for (std::size_t i = 0; i < 8; ++i) {
                p[i] = rng.uniform(0.1, 0.95);
                y[i] = i % 2;
            }
            const auto r = sup::asl_loss<double>(p, y, c);
            for (std::size_t i = 0; i < 8; ++i) {
                const double h = 1e-6;
                auto up = p, down = p;
                up[i] += h;
                down[i] -= h;
                const double num = (sup::asl_loss<double>(up, y, c).loss - sup::asl_loss<double>(down, y, c).loss) /
                                   (2 * h);
                CHECK(std::abs(num - r.grad[i]) <= 1e-5 * std::max(1.0, std::abs(num)));
            }
        }
    }
}

TEST_CASE("asl config validation") {
    sup::AslConfig c;
    c.margin = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.margin = 0.0;
    c.gamma_neg = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    const std::vector<double> p{0.5, 0.5};
    const std::vector<std::uint8_t> y{1};
    CHECK_THROWS_AS(sup::asl_loss<double>(p, y, sup::AslConfig{}), ShapeError);
}

TEST_CASE("cosine baseline") {
    const std::vector<double> u{0.6, 0.8, 0.0};
    num::MatrixD labels{{0.6, 0.8, 0.0}, {0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}};
    const auto r = sup::cosine_baseline(u, labels, 0.5);
    CHECK(r.scores[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.decisions[0] == 1);
    CHECK(r.scores[1] == 0.0);
    CHECK(r.decisions[1] == 0);
    CHECK(sup::cosine_baseline(u, labels, 0.999).decisions[0] == 1);

    const std::vector<double> a{1, 1, 0};
    CHECK(sup::cosine_baseline(a, num::MatrixD{{1, 0, 0}}).scores[0] ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));

    num::SeedStream rng(7, "cos");
    for (int t = 0; t < 50; ++t) {
        std::vector<double> v(5);
        num::MatrixD m(3, 5);
        for (auto& x : v) x = rng.normal();
        for (auto& x : m.data()) x = rng.normal();
        const double s1 = rng.uniform(0.01, 100.0), s2 = rng.uniform(0.01, 100.0);
        auto vs = v;
        for (auto& x : vs) x *= s1;
        auto ms = m;
        for (auto& x : ms.data()) x *= s2;
        const auto a1 = sup::cosine_baseline(v, m).scores, a2 = sup::cosine_baseline(vs, ms).scores;
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(a1[i] - a2[i]) < 1e-12);
    }
}

}  // TEST_SUITE

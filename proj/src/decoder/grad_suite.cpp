// SPDX-License-Identifier: Apache-2.0

#include "adds/decoder/grad_suite.hpp"

#include "adds/numerics/rng.hpp"

namespace adds::decoder {

num::GradCheckResult run_grad_suite(const GradSuiteConfig& cfg) {
    DecoderConfig dc;
    dc.embed_dim = cfg.embed_dim;
    dc.heads = cfg.heads;
    dc.depth = cfg.depth;
    dc.dropout = 0.0;
    dc.kind = cfg.kind;
    auto model = Model<double>::make(dc, cfg.seed);

    num::SeedStream rng(cfg.seed, "grad-suite");
    num::MatrixD queries(cfg.labels, cfg.embed_dim), visual(cfg.tokens, cfg.embed_dim);
    for (auto& v : queries.data()) v = rng.normal();
    for (auto& v : visual.data()) v = rng.normal();
    std::vector<std::uint8_t> labels(cfg.labels);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2 == 0;

    const ForwardContext<double> ctx{};
    auto params = model.params();
    const num::LossFn loss_fn = [&](bool backward) {
        if (!backward) {
            const auto q = stack_forward(queries, visual, model.stack, ctx);
            const auto probs = classify(q, model.head);
            return sup::asl_loss<double>(probs, labels, cfg.asl).loss;
        }
        model.zero_grad();
        StackCache<double> cache;
        const auto q = stack_forward(queries, visual, model.stack, ctx, &cache);
        const auto probs = classify(q, model.head);
        const auto loss = sup::asl_loss<double>(probs, labels, cfg.asl);
        const auto dq = classify_backward(q, probs, loss.grad, model.head);
        stack_backward(dq, cache, model.stack);
        if (cfg.corrupt) {
            auto g = params.front()->grad.data();
            g[0] = g[0] * 1.5 + 1e-3;
        }
        return loss.loss;
    };
    return num::grad_check(loss_fn, params, cfg.eps, cfg.floor);
}

num::GradCheckResult quadratic_self_test(std::size_t dims, double eps, std::uint64_t seed) {
    num::SeedStream rng(seed, "quadratic");
    num::MatrixD a(dims, dims), b(1, dims);
    for (std::size_t i = 0; i < dims; ++i)
        for (std::size_t j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
    for (auto& v : b.data()) v = rng.normal();
    num::MatrixD x0(1, dims);
    for (auto& v : x0.data()) v = rng.normal();
    num::Param<double> x("x", x0);

    std::vector<num::Param<double>*> params{&x};
    const num::LossFn f = [&](bool backward) {
        const auto v = x.value.data();
        double out = 0.0;
        for (std::size_t i = 0; i < dims; ++i) {
            out += b(0, i) * v[i];
            for (std::size_t j = 0; j < dims; ++j) out += 0.5 * v[i] * a(i, j) * v[j];
        }
        if (backward) {
            auto g = x.grad.data();
            for (std::size_t i = 0; i < dims; ++i) {
                g[i] = b(0, i);
                for (std::size_t j = 0; j < dims; ++j) g[i] += a(i, j) * v[j];
            }
        }
        return out;
    };
    return num::grad_check(f, params, eps, 1e-8);
}

}  // namespace adds::decoder

// SPDX-License-Identifier: Apache-2.0
//
// End-to-end finite-difference checks: decoder stack + head + asymmetric
// loss in double precision, plus a quadratic self-test of the checker.

#pragma once

#include <cstdint>

#include "adds/decoder/decoder.hpp"
#include "adds/numerics/grad_check.hpp"
#include "adds/supervision/supervision.hpp"

namespace adds::decoder {

struct GradSuiteConfig {
    std::size_t embed_dim = 8;
    std::size_t heads = 2;
    std::size_t depth = 2;
    std::size_t labels = 3;
    std::size_t tokens = 5;
    BlockKind kind = BlockKind::dual_modal;
    double eps = 1e-5;
    // Entries whose true gradient is zero (key biases under softmax) leave
    // only difference noise, so the denominator never drops below this.
    double floor = 1e-6;
    std::uint64_t seed = 0;
    sup::AslConfig asl{};
    /// Scale one analytic gradient entry before comparison (negative control).
    bool corrupt = false;
};

num::GradCheckResult run_grad_suite(const GradSuiteConfig& cfg);

/// f(x) = 0.5 x^T A x + b^T x with a known gradient, checked by the same
/// finite-difference routine.
num::GradCheckResult quadratic_self_test(std::size_t dims, double eps, std::uint64_t seed = 0);

}  // namespace adds::decoder

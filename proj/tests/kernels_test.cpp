// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "contaccum/diagnostics.hpp"
#include "contaccum/kernels.hpp"
#include "contaccum/strategies.hpp"
#include "test_util.hpp"

namespace contaccum {
namespace {

using kernels::Isa;
using kernels::KernelTable;

std::vector<double> random_vec(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

TEST(Kernels, ScalarMatchesNaiveLoops) {
    const KernelTable& s = kernels::scalar_table();
    for (std::size_t n : {0, 1, 5, 64}) {
        const auto x = random_vec(n, n), y = random_vec(n + 100, n);
        double dot = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += x[i] * y[i];
            sq += x[i] * x[i];
        }
        EXPECT_EQ(s.dot(x.data(), y.data(), n), dot);
        EXPECT_EQ(s.sum_sq(x.data(), n), sq);
    }
}

// Every lane width and remainder: lengths 0..40 cover 4-wide bodies plus tails.
TEST(Kernels, VariantsAgreeWithScalar) {
    const KernelTable& ref = kernels::scalar_table();
    for (const KernelTable* t : kernels::available()) {
        for (std::size_t n = 0; n <= 40; ++n) {
            const auto x = random_vec(3 * n + 1, n), y = random_vec(3 * n + 2, n);
            double mag = 0.0;
            for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
            EXPECT_NEAR(t->dot(x.data(), y.data(), n), ref.dot(x.data(), y.data(), n), 1e-14 * (mag + 1))
                << t->name << " n=" << n;
            const double sq_ref = ref.sum_sq(x.data(), n);
            EXPECT_NEAR(t->sum_sq(x.data(), n), sq_ref, 1e-14 * (sq_ref + 1)) << t->name << " n=" << n;

            auto ya = y, yb = y;
            t->axpy(0.37, x.data(), ya.data(), n);
            ref.axpy(0.37, x.data(), yb.data(), n);
            for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(ya[i], yb[i], 1e-15 * (std::abs(yb[i]) + 1));

            auto xa = x, xb = x;
            t->scale(-1.25, xa.data(), n);
            ref.scale(-1.25, xb.data(), n);
            EXPECT_EQ(xa, xb) << t->name;  // one multiply per element: exact
        }
    }
}

TEST(Kernels, AxpyLeavesTailUntouchedBeyondN) {
    for (const KernelTable* t : kernels::available()) {
        std::vector<double> x(9, 1.0), y(12, 5.0);
        t->axpy(2.0, x.data(), y.data(), 9);
        for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[i], 7.0);
        for (std::size_t i = 9; i < 12; ++i) EXPECT_EQ(y[i], 5.0) << t->name;
    }
}

TEST(Kernels, ScopedIsaPinsAndRestores) {
    const KernelTable* before = &kernels::active();
    {
        kernels::ScopedIsa pin(Isa::kScalar);
        EXPECT_EQ(kernels::active().isa, Isa::kScalar);
    }
    EXPECT_EQ(&kernels::active(), before);
    EXPECT_THROW(kernels::parse_isa("sse9"), std::invalid_argument);
    EXPECT_EQ(kernels::parse_isa("avx2"), Isa::kAvx2);
}

// A whole bank step under each variant gives the same parameter gradients.
TEST(Kernels, FullPipelineAgreesAcrossVariants) {
    Rng rq(1), rp(2);
    const EncoderState q = init_encoder(rq, EncoderKind::kMlp, 13, 11, 7);
    const EncoderState p = init_encoder(rp, EncoderKind::kMlp, 13, 11, 7);
    StrategyConfig cfg;
    cfg.kind = StrategyKind::kContAccum;
    cfg.n_local = 5;
    cfg.accum_steps = 3;
    cfg.n_memory_q = cfg.n_memory_p = 9;
    Batch b;
    b.queries = testing::random_mat(3, 15, 13);
    b.positives = testing::random_mat(4, 15, 13);
    b.hard = Mat(0, 13);
    b.pair_ids.resize(15);
    std::iota(b.pair_ids.begin(), b.pair_ids.end(), std::size_t{0});

    auto run = [&](Isa isa) {
        kernels::ScopedIsa pin(isa);
        DualMemoryBank bank = make_bank(cfg, 11);
        StepOutcome first = step_contaccum(q, p, b, cfg, bank, 0);
        (void)first;
        return step_contaccum(q, p, b, cfg, bank, 1);
    };
    const StepOutcome ref = run(Isa::kScalar);
    for (const KernelTable* t : kernels::available()) {
        const StepOutcome got = run(t->isa);
        EXPECT_LE(max_param_rel_diff(got, ref), 1e-12) << t->name;
        EXPECT_NEAR(got.loss, ref.loss, 1e-12 * std::abs(ref.loss)) << t->name;
    }
}

}  // namespace
}  // namespace contaccum

// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "contaccum/instrumentation.hpp"
#include "contaccum/trainer.hpp"
#include "test_util.hpp"

namespace contaccum {
namespace {

using testing::random_mat;

TEST(Ratio, Values) {
    EXPECT_EQ(grad_norm_ratio(3.0, 1.5), 2.0);
    EXPECT_EQ(grad_norm_ratio(0.7, 0.7), 1.0);
    EXPECT_FALSE(grad_norm_ratio(4.0, 0.0).has_value());
    EXPECT_FALSE(grad_norm_ratio(0.0, 0.0).has_value());
    EXPECT_EQ(grad_norm_ratio(0.0, 2.0), 0.0);
}

TEST(SimMass, SingleTermRaw) {
    const std::map<std::size_t, Mat> banked{{1, Mat::from_rows({{1, 0}})}};
    const auto m = sim_mass(Mat::from_rows({{1, 0}}), banked, Mat(0, 2), 1.0, SimMassMode::kRaw);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m.at(1), 1.0);
}

std::map<std::size_t, Mat> random_buckets(std::uint64_t seed, std::size_t d) {
    return {{1, random_mat(seed, 3, d)}, {2, random_mat(seed + 1, 5, d)}, {4, random_mat(seed + 2, 2, d)}};
}

TEST(SimMass, RawMatchesDoubleLoop) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Mat q = random_mat(seed, 6, 4), p = random_mat(seed + 50, 6, 4);
        const auto buckets = random_buckets(seed + 100, 4);
        const auto got = sim_mass(q, buckets, p, 1.0, SimMassMode::kRaw);
        auto oracle = [&](const Mat& bucket) {
            double s = 0.0;
            for (std::size_t i = 0; i < q.rows(); ++i)
                for (std::size_t j = 0; j < bucket.rows(); ++j)
                    for (std::size_t k = 0; k < 4; ++k) s += q(i, k) * bucket(j, k);
            return s / double(q.rows());
        };
        EXPECT_NEAR(got.at(0), oracle(p), 1e-12);
        for (const auto& [age, m] : buckets) EXPECT_NEAR(got.at(age), oracle(m), 1e-12);
    }
}

TEST(SimMass, RawIsBilinear) {
    const Mat q = random_mat(1, 4, 3), p = random_mat(2, 4, 3);
    const auto buckets = random_buckets(3, 3);
    const auto base = sim_mass(q, buckets, p, 1.0, SimMassMode::kRaw);
    Mat q2 = q;
    scale_inplace(q2, 3.0);
    const auto scaled = sim_mass(q2, buckets, p, 1.0, SimMassMode::kRaw);
    for (const auto& [age, v] : base) EXPECT_NEAR(scaled.at(age), 3.0 * v, 1e-12);
}

TEST(SimMass, SoftmaxBucketsSumToOne) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Mat q = random_mat(seed, 5, 4, 2.0), p = random_mat(seed + 50, 5, 4);
        for (double tau : {0.5, 1.0}) {
            // One query at a time so the per-query sum is checked.
            for (std::size_t i = 0; i < q.rows(); ++i) {
                const auto m = sim_mass(slice_rows(q, i, i + 1), random_buckets(seed + 100, 4), p, tau, SimMassMode::kSoftmax);
                double total = 0.0;
                for (const auto& [age, v] : m) {
                    EXPECT_GE(v, 0.0);
                    total += v;
                }
                EXPECT_NEAR(total, 1.0, 1e-12);
            }
        }
    }
}

TEST(SimMass, EmptyBucketsOmittedAndErrors) {
    const std::map<std::size_t, Mat> buckets{{1, Mat(0, 2)}, {3, Mat::from_rows({{1, 1}})}};
    const auto m = sim_mass(Mat::from_rows({{1, 0}}), buckets, Mat::from_rows({{0, 1}}), 1.0, SimMassMode::kSoftmax);
    EXPECT_EQ(m.size(), 2u);
    EXPECT_TRUE(m.count(0) && m.count(3));
    EXPECT_THROW(sim_mass(Mat(1, 2), {{0, Mat(1, 2)}}, Mat(1, 2), 1.0, SimMassMode::kRaw), std::invalid_argument);
    EXPECT_THROW(sim_mass(Mat(1, 2), {{1, Mat(1, 3)}}, Mat(1, 2), 1.0, SimMassMode::kRaw), ShapeError);
}

TEST(SimMass, BucketByAge) {
    const Mat p = Mat::from_rows({{1}, {2}, {3}, {4}});
    const std::size_t ages[] = {3, 1, 3, 2};
    const auto b = bucket_by_age(p, ages);
    EXPECT_EQ(b.at(3), Mat::from_rows({{1}, {3}}));
    EXPECT_EQ(b.at(1), Mat::from_rows({{2}}));
    const std::size_t short_ages[] = {1};
    EXPECT_THROW(bucket_by_age(p, short_ages), ShapeError);
}

StepStats record(std::size_t update, std::size_t substep, const std::string& strategy, double loss,
                 std::optional<double> ratio) {
    StepStats s;
    s.update = update;
    s.substep = substep;
    s.strategy = strategy;
    s.loss = loss;
    s.grad_norm_ratio = ratio;
    return s;
}

TEST(Aggregate, ConstantSeries) {
    std::vector<StepStats> log;
    for (std::size_t t = 0; t < 10; ++t) log.push_back(record(t, 0, "fullbatch", 2.5, 1.0));
    for (double w : {0.1, 0.25, 1.0}) {
        const auto s = aggregate(log, w);
        ASSERT_EQ(s.size(), 1u);
        EXPECT_EQ(*s[0].ratio_median, 1.0);
        EXPECT_EQ(*s[0].ratio_mean, 1.0);
        EXPECT_EQ(*s[0].ratio_max, 1.0);
        EXPECT_EQ(s[0].loss_median, 2.5);
        EXPECT_EQ(s[0].loss_max, 2.5);
    }
}

TEST(Aggregate, WindowAndSortOracle) {
    Rng rng(5);
    std::vector<StepStats> log;
    std::vector<double> ratios;
    for (std::size_t t = 0; t < 40; ++t) {
        const double r = rng.uniform() * 10;
        ratios.push_back(r);
        log.push_back(record(t, 0, "gradaccum", r, r));
    }
    const auto all = aggregate(log, 1.0);
    std::vector<double> sorted = ratios;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(*all[0].ratio_median, 0.5 * (sorted[19] + sorted[20]));
    EXPECT_EQ(*all[0].ratio_max, sorted.back());
    EXPECT_EQ(all[0].updates, 40u);

    const auto tail = aggregate(log, 0.25);
    EXPECT_EQ(tail[0].updates, 10u);
    std::vector<double> last(ratios.end() - 10, ratios.end());
    std::sort(last.begin(), last.end());
    EXPECT_EQ(*tail[0].ratio_median, 0.5 * (last[4] + last[5]));

    EXPECT_THROW(aggregate(log, 0.0), std::invalid_argument);
    EXPECT_THROW(aggregate(std::vector<StepStats>{}, 0.5), std::invalid_argument);
}

TEST(Aggregate, SubstepsAveragedAndStrategiesGrouped) {
    const std::vector<StepStats> log = {
        record(0, 0, "contaccum", 1.0, 1.0), record(0, 1, "contaccum", 3.0, 3.0),
        record(1, 0, "contaccum", 2.0, std::nullopt), record(1, 1, "contaccum", 2.0, 4.0),
        record(0, 0, "prebatch", 5.0, 8.0)};
    const auto pts = per_update(log, "contaccum");
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(*pts[0].ratio, 2.0);
    EXPECT_EQ(pts[0].loss, 2.0);
    EXPECT_EQ(*pts[1].ratio, 4.0);  // undefined substep skipped
    const auto s = aggregate(log, 1.0);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].strategy, "contaccum");
    EXPECT_EQ(*s[0].ratio_median, 3.0);
    EXPECT_EQ(s[1].strategy, "prebatch");
    EXPECT_EQ(*s[1].ratio_max, 8.0);
}

TEST(Median, OddEvenEmpty) {
    EXPECT_EQ(median({3, 1, 2}), 2.0);
    EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
    EXPECT_THROW(median({}), std::invalid_argument);
}

// Stored ratios are consistent with the stored post-clip norms.
TEST(StoredRatio, RecomputesFromNorms) {
    TaskParams tp;
    tp.latent_dim = 4;
    tp.d_in = 6;
    tp.n_train = 64;
    tp.n_corpus = 96;
    tp.n_eval = 10;
    Rng rng(3);
    const SyntheticTask task = generate_task(rng, tp);
    StrategyConfig s;
    s.kind = StrategyKind::kPreBatchNeg;
    s.n_local = 4;
    s.accum_steps = 2;
    s.n_memory_p = 8;
    TrainConfig tc = TrainConfig::desk_profile(10, 1);
    tc.clip_norm = 0.05;  // binding
    ModelConfig mc;
    mc.d_model = 4;
    mc.hidden = 5;
    const TrainResult r = run_training(task, s, tc, mc);
    for (const StepStats& st : r.log.steps) {
        ASSERT_TRUE(st.grad_norm_ratio);
        EXPECT_NEAR(*st.grad_norm_ratio, st.grad_norm_p_post / st.grad_norm_q_post, 1e-12 * *st.grad_norm_ratio);
    }
}

}  // namespace
}  // namespace contaccum

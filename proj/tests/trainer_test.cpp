// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "contaccum/error.hpp"
#include "contaccum/trainer.hpp"
#include "test_util.hpp"

namespace contaccum {
namespace {

SyntheticTask small_task(std::uint64_t seed = 1) {
    TaskParams tp;
    tp.latent_dim = 4;
    tp.d_in = 6;
    tp.n_train = 64;
    tp.n_corpus = 128;
    tp.n_eval = 20;
    Rng rng(seed);
    return generate_task(rng, tp);
}

ModelConfig small_model() {
    ModelConfig m;
    m.d_model = 5;
    m.hidden = 7;
    return m;
}

StrategyConfig strat(StrategyKind kind, std::size_t n_local, std::size_t K, std::size_t mem = 0) {
    StrategyConfig s;
    s.kind = kind;
    s.n_local = n_local;
    s.accum_steps = K;
    if (kind == StrategyKind::kContAccum) s.n_memory_q = mem;
    if (kind == StrategyKind::kContAccum || kind == StrategyKind::kPreBatchNeg) s.n_memory_p = mem;
    return s;
}

TEST(LrSchedule, ShapeOfWarmupAndDecay) {
    TrainConfig c;
    c.peak_lr = 1e-3;
    c.warmup_steps = 10;
    c.total_steps = 110;
    EXPECT_EQ(lr_at(c, 0), 0.0);
    EXPECT_DOUBLE_EQ(lr_at(c, 5), 5e-4);
    EXPECT_EQ(lr_at(c, 10), 1e-3);
    EXPECT_DOUBLE_EQ(lr_at(c, 60), 5e-4);
    EXPECT_EQ(lr_at(c, 110), 0.0);
    EXPECT_THROW(lr_at(c, 111), std::out_of_range);
    double mx = 0.0;
    for (std::size_t s = 0; s <= 110; ++s) {
        mx = std::max(mx, lr_at(c, s));
        if (s > 0) EXPECT_LE(std::abs(lr_at(c, s) - lr_at(c, s - 1)), 1e-4 + 1e-18);  // continuous
    }
    EXPECT_EQ(mx, 1e-3);
}

TEST(LrSchedule, Profiles) {
    const TrainConfig d = TrainConfig::desk_profile(400, 3);
    EXPECT_EQ(d.peak_lr, 1e-3);
    EXPECT_EQ(d.warmup_steps, 20u);
    const TrainConfig b = TrainConfig::bert_profile(5000, 3);
    EXPECT_EQ(b.peak_lr, 2e-5);
    EXPECT_EQ(b.warmup_steps, 1237u);
    EXPECT_EQ(b.clip_norm, 2.0);
}

GradBuffer single(double v) {
    GradBuffer g;
    g.grads.push_back(Mat::from_rows({{v}}));
    return g;
}

TEST(Clip, PerEncoder) {
    GradBuffer q, p;
    q.grads.push_back(Mat::from_rows({{0, 4}}));
    p.grads.push_back(Mat::from_rows({{0.6, 0.8}}));
    const ClipResult r = clip_global(q, p, 2.0);
    EXPECT_EQ(r.pre_norm_q, 4.0);
    EXPECT_EQ(r.coef_q, 0.5);
    EXPECT_EQ(q.grads[0], Mat::from_rows({{0, 2}}));
    EXPECT_EQ(r.coef_p, 1.0);
    EXPECT_EQ(p.grads[0], Mat::from_rows({{0.6, 0.8}}));
    EXPECT_THROW(clip_global(q, p, 0.0), std::invalid_argument);
}

TEST(Clip, PostNormIsMinOfPreAndLimit) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        GradBuffer q, p;
        q.grads = {testing::random_mat(seed, 3, 4, 0.5), testing::random_mat(seed + 1, 1, 4, 0.5)};
        p.grads = {testing::random_mat(seed + 2, 5, 2, 0.2)};
        const double before_q = q.norm(), before_p = p.norm();
        const ClipResult r = clip_global(q, p, 1.5);
        EXPECT_NEAR(q.norm(), std::min(before_q, 1.5), 1e-12);
        EXPECT_NEAR(p.norm(), std::min(before_p, 1.5), 1e-12);
        EXPECT_LE(q.norm(), before_q + 1e-15);
        EXPECT_NEAR(r.pre_norm_q * r.coef_q, q.norm(), 1e-12);
    }
}

TEST(AdamW, OneStepHandCalculation) {
    EncoderState enc;
    enc.params.push_back(Mat::from_rows({{2.0}}));
    AdamState st = AdamState::zeros_like(enc);
    TrainConfig c;
    c.weight_decay = 0.01;
    adamw_update(st, enc, single(0.5), 0.1, c, 1);
    // decay: 2 * (1 - 0.001) = 1.998; m_hat = 0.5, v_hat = 0.25 -> step 0.1 * 0.5 / (0.5 + 1e-8)
    EXPECT_NEAR(enc.params[0](0, 0), 1.998 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
    EXPECT_NEAR(st.m[0](0, 0), 0.05, 1e-16);
    EXPECT_NEAR(st.v[0](0, 0), 0.00025, 1e-18);

    // Second step, same gradient: m_hat stays 0.5, v_hat stays 0.25.
    const double before = enc.params[0](0, 0);
    adamw_update(st, enc, single(0.5), 0.1, c, 2);
    EXPECT_NEAR(enc.params[0](0, 0), before * (1 - 0.001) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-14);
}

TEST(AdamW, ZeroGradientNoDecayIsNoOp) {
    EncoderState enc;
    enc.params.push_back(Mat::from_rows({{1.5, -3}}));
    const EncoderState before = enc;
    AdamState st = AdamState::zeros_like(enc);
    GradBuffer g;
    g.grads.push_back(Mat(1, 2));
    adamw_update(st, enc, g, 0.1, TrainConfig{}, 1);
    EXPECT_EQ(enc, before);
    EXPECT_THROW(adamw_update(st, enc, g, 0.1, TrainConfig{}, 0), std::invalid_argument);
}

TEST(Training, ZeroStepsLeavesInitialEncoders) {
    const SyntheticTask task = small_task();
    TrainConfig tc;
    tc.seed = 4;
    const TrainResult r = run_training(task, strat(StrategyKind::kFullBatch, 8, 1), tc, small_model());
    EXPECT_TRUE(r.log.steps.empty());
    EXPECT_TRUE(r.log.evals.empty());
    Rng init = Rng(4).derive(1);
    EXPECT_EQ(r.enc_q, init_encoder(init, EncoderKind::kMlp, 6, 5, 7));
}

TEST(Training, FullBatchAndGradCacheTrajectoriesAgree) {
    const SyntheticTask task = small_task();
    TrainConfig tc = TrainConfig::desk_profile(50, 9);
    const TrainResult fb = run_training(task, strat(StrategyKind::kFullBatch, 16, 1), tc, small_model());
    const TrainResult gc = run_training(task, strat(StrategyKind::kGradCache, 4, 4), tc, small_model());
    for (std::size_t i = 0; i < fb.enc_q.params.size(); ++i) {
        EXPECT_LE(max_rel_diff(gc.enc_q.params[i], fb.enc_q.params[i]), 1e-6);
    }
    // The passage output bias adds the same q.b to every logit of a row, so
    // its exact gradient is zero and Adam turns round-off into full steps.
    // It drifts apart but cannot change any loss.
    const std::size_t bias = fb.enc_p.params.size() - 1;
    for (std::size_t i = 0; i < bias; ++i) {
        EXPECT_LE(max_rel_diff(gc.enc_p.params[i], fb.enc_p.params[i]), 1e-6);
    }
    EncoderState shifted = fb.enc_p;
    shifted.params[bias] = gc.enc_p.params[bias];
    const Batch b = sample_batch(task, 1, 0, 16, false);
    StrategyConfig cfg = strat(StrategyKind::kFullBatch, 16, 1);
    EXPECT_NEAR(step_full_batch(fb.enc_q, shifted, b, cfg).loss, step_full_batch(fb.enc_q, fb.enc_p, b, cfg).loss,
                1e-12);
}

TEST(Training, ContAccumRecordsEverySubstep) {
    const SyntheticTask task = small_task();
    const TrainConfig tc = TrainConfig::desk_profile(12, 2);
    const TrainResult r = run_training(task, strat(StrategyKind::kContAccum, 4, 3, 8), tc, small_model());
    ASSERT_EQ(r.log.steps.size(), 36u);
    for (std::size_t i = 0; i < r.log.steps.size(); ++i) {
        const StepStats& s = r.log.steps[i];
        EXPECT_EQ(s.update, i / 3);
        EXPECT_EQ(s.substep, i % 3);
        EXPECT_EQ(s.strategy, "contaccum");
        EXPECT_EQ(s.fwd_passes_cum, 2 * (i + 1));
        EXPECT_EQ(s.lr, lr_at(tc, s.update));
        ASSERT_TRUE(s.grad_norm_ratio.has_value());
        EXPECT_NEAR(*s.grad_norm_ratio, s.grad_norm_p_post / s.grad_norm_q_post, 1e-12 * *s.grad_norm_ratio);
        EXPECT_LE(s.grad_norm_q_post, s.grad_norm_q_pre);
    }
    ASSERT_EQ(r.log.evals.size(), 1u);
    EXPECT_EQ(r.log.evals[0].step, 12u);
}

TEST(Training, ClippingScalesLoggedNorms) {
    const SyntheticTask task = small_task();
    TrainConfig tc = TrainConfig::desk_profile(5, 2);
    tc.clip_norm = 1e-3;
    const TrainResult r = run_training(task, strat(StrategyKind::kGradAccum, 4, 2), tc, small_model());
    for (std::size_t t = 0; t < 5; ++t) {
        // Both substep shares of an update are scaled by the same coefficient.
        const StepStats& a = r.log.steps[2 * t];
        const StepStats& b = r.log.steps[2 * t + 1];
        EXPECT_LE(a.grad_norm_q_post, a.grad_norm_q_pre);
        EXPECT_NEAR(a.grad_norm_q_post / a.grad_norm_q_pre, b.grad_norm_q_post / b.grad_norm_q_pre, 1e-12);
    }
}

TEST(Training, IsDeterministic) {
    const SyntheticTask task = small_task();
    const TrainConfig tc = TrainConfig::desk_profile(10, 5);
    TrainHooks hooks;
    hooks.eval_every = 3;
    const TrainResult a = run_training(task, strat(StrategyKind::kContAccum, 4, 2, 8), tc, small_model(), hooks);
    const TrainResult b = run_training(task, strat(StrategyKind::kContAccum, 4, 2, 8), tc, small_model(), hooks);
    EXPECT_EQ(a.log.steps, b.log.steps);
    ASSERT_EQ(a.log.evals.size(), 4u);  // 3, 6, 9 and the final update
    for (std::size_t i = 0; i < a.log.evals.size(); ++i) EXPECT_EQ(a.log.evals[i].metrics, b.log.evals[i].metrics);
    EXPECT_EQ(a.enc_p, b.enc_p);
}

TEST(Training, QueryBankDisableTakesEffect) {
    const SyntheticTask task = small_task();
    StrategyConfig s = strat(StrategyKind::kContAccum, 4, 2, 8);
    s.disable_query_bank_at_step = 3;
    const TrainResult r = run_training(task, s, TrainConfig::desk_profile(6, 1), small_model());
    for (const StepStats& st : r.log.steps) {
        if (st.update >= 3) {
            EXPECT_EQ(st.bank_fill_q, 0u);
            EXPECT_EQ(st.bank_fill_p, 8u);
        } else if (st.update >= 1) {
            EXPECT_EQ(st.bank_fill_q, st.bank_fill_p);
        }
    }
    EXPECT_FALSE(r.bank.query_bank_enabled());
}

TEST(Training, PreBatchGateDelaysBank) {
    const SyntheticTask task = small_task();
    StrategyConfig s = strat(StrategyKind::kPreBatchNeg, 4, 2, 8);
    s.enable_bank_after_step = 2;
    const TrainResult r = run_training(task, s, TrainConfig::desk_profile(4, 1), small_model());
    for (const StepStats& st : r.log.steps) {
        if (st.update < 2) EXPECT_EQ(st.negatives_per_query, 3u);
        if (st.update == 3) EXPECT_EQ(st.negatives_per_query, 11u);
    }
}

TEST(Training, DivergenceCarriesRecord) {
    SyntheticTask task = small_task();
    // Poison every training query so the first batch sees it.
    for (std::size_t i = 0; i < task.train_queries.rows(); ++i) task.train_queries(i, 0) = std::nan("");
    try {
        run_training(task, strat(StrategyKind::kGradAccum, 4, 2), TrainConfig::desk_profile(3, 1), small_model());
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.record().update, 0u);
        EXPECT_EQ(e.record().strategy, "gradaccum");
    }
}

TEST(Training, RejectsOversizedBatch) {
    const SyntheticTask task = small_task();
    EXPECT_THROW(run_training(task, strat(StrategyKind::kFullBatch, 65, 1), TrainConfig::desk_profile(1, 1), small_model()),
                 ConfigError);
    TrainConfig bad = TrainConfig::desk_profile(4, 1);
    bad.warmup_steps = 5;
    EXPECT_THROW(run_training(task, strat(StrategyKind::kFullBatch, 8, 1), bad, small_model()), ConfigError);
}

}  // namespace
}  // namespace contaccum

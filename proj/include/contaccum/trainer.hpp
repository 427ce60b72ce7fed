// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop: sample -> strategy step -> per-encoder clipping ->
// AdamW with linear warmup/decay -> scheduled retrieval evaluation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "contaccum/data.hpp"
#include "contaccum/encoder.hpp"
#include "contaccum/error.hpp"
#include "contaccum/instrumentation.hpp"
#include "contaccum/membank.hpp"
#include "contaccum/numerics.hpp"
#include "contaccum/strategies.hpp"

namespace contaccum {

struct TrainConfig {
    double peak_lr = 1e-3;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 0;
    double clip_norm = 2.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    void validate() const;

    // Desk-scale defaults: peak 1e-3, warmup 5% of total_steps.
    static TrainConfig desk_profile(std::size_t total_steps, std::uint64_t seed);
    // BERT fine-tuning values: peak 2e-5, 1237 warmup steps.
    static TrainConfig bert_profile(std::size_t total_steps, std::uint64_t seed);
};

struct ModelConfig {
    EncoderKind kind = EncoderKind::kMlp;
    std::size_t d_model = 32;
    std::size_t hidden = 64;
};

// First/second moments for one encoder.
struct AdamState {
    std::vector<Mat> m;
    std::vector<Mat> v;

    static AdamState zeros_like(const EncoderState& enc);
};

struct OptState {
    AdamState query;
    AdamState passage;
    std::size_t t = 0;  // completed updates
};

// Linear 0 -> peak over [0, warmup], then peak -> 0 over [warmup, total].
double lr_at(const TrainConfig& cfg, std::size_t step);

struct ClipResult {
    double pre_norm_q = 0.0;
    double pre_norm_p = 0.0;
    double coef_q = 1.0;  // applied scale factors
    double coef_p = 1.0;
};

// Caps each encoder's global gradient norm at clip_norm independently.
ClipResult clip_global(GradBuffer& grad_q, GradBuffer& grad_p, double clip_norm);

// Decoupled weight decay then the bias-corrected Adam step; `step` is the
// 1-based update count used for bias correction.
void adamw_update(AdamState& state, EncoderState& enc, const GradBuffer& grads, double lr,
                  const TrainConfig& cfg, std::size_t step);

struct EvalRecord {
    std::size_t step = 0;  // updates completed
    std::map<std::string, double> metrics;
};

struct MetricsLog {
    std::vector<StepStats> steps;
    std::vector<EvalRecord> evals;
};

struct TrainHooks {
    std::size_t eval_every = 0;             // 0: evaluate after the last update only
    std::vector<std::size_t> ks{1, 5, 10, 20};
    std::function<void(std::size_t update, const StepOutcome&)> on_update;
};

struct TrainResult {
    MetricsLog log;
    EncoderState enc_q;
    EncoderState enc_p;
    DualMemoryBank bank;
};

class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, StepStats record)
        : NumericError(what), record_(std::move(record)) {}
    const StepStats& record() const noexcept { return record_; }

private:
    StepStats record_;
};

// Encoders are initialized from train_cfg.seed; batches are drawn per update
// from (train_cfg.seed, update).
TrainResult run_training(const SyntheticTask& task, const StrategyConfig& strategy,
                         const TrainConfig& train_cfg, const ModelConfig& model,
                         const TrainHooks& hooks = {});

}  // namespace contaccum

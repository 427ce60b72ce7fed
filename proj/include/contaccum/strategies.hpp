// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training-step strategies. Each maps one total batch of N_total = n_local * K
// pairs to accumulated parameter gradients for both encoders, plus per-substep
// statistics and forward/backward pass counters.
//
//   FullBatch    one n_total x n_total similarity matrix (K must be 1)
//   GradAccum    K local n_local x n_local matrices, gradients averaged by 1/K
//   GradCache    uncaptured forward of everything, one n_total loss, then K
//                captured re-forwards driven by the cached representation grads
//   PreBatchNeg  GradAccum plus a passage-only FIFO bank (rectangular matrix)
//   ContAccum    GradAccum plus pair-aligned query and passage banks
//
// Bank strategies build each substep's matrix from the bank as it stood
// before the substep, and enqueue the substep's pairs afterwards.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "contaccum/data.hpp"
#include "contaccum/encoder.hpp"
#include "contaccum/instrumentation.hpp"
#include "contaccum/membank.hpp"

namespace contaccum {

enum class StrategyKind { kFullBatch, kGradAccum, kGradCache, kPreBatchNeg, kContAccum };

std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);

struct StrategyConfig {
    StrategyKind kind = StrategyKind::kFullBatch;
    std::size_t n_local = 8;
    std::size_t accum_steps = 1;
    std::size_t n_memory_q = 0;
    std::size_t n_memory_p = 0;
    double tau = 1.0;
    bool use_hard_negatives = false;
    // Bank strategies ignore the bank (and do not fill it) for updates < this.
    std::optional<std::size_t> enable_bank_after_step;
    // ContAccum: drop the query bank from this update on.
    std::optional<std::size_t> disable_query_bank_at_step;
    // Re-encode banked inputs with the current encoders at the start of each update.
    bool refresh_bank = false;

    std::size_t n_total() const noexcept { return n_local * accum_steps; }
    bool uses_bank() const noexcept {
        return kind == StrategyKind::kPreBatchNeg || kind == StrategyKind::kContAccum;
    }
    // Throws ConfigError naming the violated field.
    void validate() const;
};

struct StepOutcome {
    GradBuffer grad_q;  // query encoder (Theta)
    GradBuffer grad_p;  // passage encoder (Lambda)
    double loss = 0.0;  // (1/K) sum_k L(S_k), or the single full loss
    std::vector<StepStats> stats;  // one per substep; post-clip fields left for the trainer
    std::uint64_t forward_passes = 0;
    std::uint64_t backward_passes = 0;
};

StepOutcome step_full_batch(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                            const StrategyConfig& cfg, std::size_t update = 0);

StepOutcome step_grad_accum(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                            const StrategyConfig& cfg, std::size_t update = 0);

StepOutcome step_grad_cache(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                            const StrategyConfig& cfg, std::size_t update = 0);

StepOutcome step_contaccum(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                           const StrategyConfig& cfg, DualMemoryBank& bank, std::size_t update = 0);

StepOutcome step_prebatch(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                          const StrategyConfig& cfg, DualMemoryBank& bank, std::size_t update = 0);

// Dispatches on cfg.kind; `bank` is only touched by bank strategies.
StepOutcome run_step(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                     const StrategyConfig& cfg, DualMemoryBank& bank, std::size_t update);

// Bank sized for the strategy (empty for bank-free strategies).
DualMemoryBank make_bank(const StrategyConfig& cfg, std::size_t d_model);

// Negatives seen by each query of one similarity matrix, given the passage
// bank fill at that moment. Hard negatives add one column per current query.
std::size_t negative_count(const StrategyConfig& cfg, std::size_t bank_fill_p);

// True iff a warm passage bank gives more negatives than the total batch:
// n_memory_p > n_local * (K - 1).
bool surpasses_total(const StrategyConfig& cfg);

}  // namespace contaccum

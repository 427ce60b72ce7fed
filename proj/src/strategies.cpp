// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "contaccum/error.hpp"
#include "contaccum/loss.hpp"

namespace contaccum {

std::string_view to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::kFullBatch: return "fullbatch";
        case StrategyKind::kGradAccum: return "gradaccum";
        case StrategyKind::kGradCache: return "gradcache";
        case StrategyKind::kPreBatchNeg: return "prebatch";
        case StrategyKind::kContAccum: return "contaccum";
    }
    return "?";
}

StrategyKind parse_strategy(std::string_view name) {
    for (auto k : {StrategyKind::kFullBatch, StrategyKind::kGradAccum, StrategyKind::kGradCache,
                   StrategyKind::kPreBatchNeg, StrategyKind::kContAccum}) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("strategy", "unknown strategy '" + std::string(name) +
                                      "' (fullbatch, gradaccum, gradcache, prebatch, contaccum)");
}

void StrategyConfig::validate() const {
    if (n_local == 0) throw ConfigError("n_local", "must be >= 1");
    if (accum_steps == 0) throw ConfigError("accum_steps", "must be >= 1");
    if (!(tau > 0.0)) throw ConfigError("tau", "must be > 0");
    switch (kind) {
        case StrategyKind::kFullBatch:
            if (accum_steps != 1) throw ConfigError("accum_steps", "fullbatch requires accum_steps == 1");
            [[fallthrough]];
        case StrategyKind::kGradAccum:
        case StrategyKind::kGradCache:
            if (n_memory_q != 0 || n_memory_p != 0) {
                throw ConfigError(n_memory_q != 0 ? "n_memory_q" : "n_memory_p",
                                  std::string(to_string(kind)) + " uses no memory bank; must be 0");
            }
            break;
        case StrategyKind::kPreBatchNeg:
            if (n_memory_q != 0) throw ConfigError("n_memory_q", "prebatch keeps passages only; must be 0");
            if (n_memory_p == 0) throw ConfigError("n_memory_p", "prebatch requires n_memory_p > 0");
            break;
        case StrategyKind::kContAccum:
            if (n_memory_q != n_memory_p) {
                throw ConfigError("n_memory_q", "contaccum requires n_memory_q == n_memory_p (got " +
                                                    std::to_string(n_memory_q) + " vs " +
                                                    std::to_string(n_memory_p) +
                                                    "); use strategy=prebatch for a passage-only bank");
            }
            break;
    }
    if (!uses_bank() && (enable_bank_after_step || refresh_bank)) {
        throw ConfigError(refresh_bank ? "refresh_bank" : "enable_bank_after_step",
                          "only meaningful for bank strategies");
    }
    if (disable_query_bank_at_step && kind != StrategyKind::kContAccum) {
        throw ConfigError("disable_query_bank_at_step", "only meaningful for contaccum");
    }
}

namespace {

void check_batch(const Batch& batch, const StrategyConfig& cfg) {
    cfg.validate();
    if (batch.size() != cfg.n_total()) {
        throw ShapeError("strategy step: batch of " + std::to_string(batch.size()) + " pairs, expected n_local * K = " +
                         std::to_string(cfg.n_local) + " * " + std::to_string(cfg.accum_steps));
    }
    if (batch.positives.rows() != batch.size() || batch.pair_ids.size() != batch.size() ||
        (batch.has_hard() && batch.hard.rows() != batch.size())) {
        throw ShapeError("strategy step: queries " + batch.queries.shape_str() + ", positives " +
                         batch.positives.shape_str() + ", hard " + batch.hard.shape_str() + " and " +
                         std::to_string(batch.pair_ids.size()) + " pair ids disagree");
    }
    if (batch.has_hard() != cfg.use_hard_negatives) {
        throw ShapeError(cfg.use_hard_negatives ? "strategy step: batch carries no hard negatives"
                                                : "strategy step: unexpected hard negatives in batch");
    }
}

struct Counters {
    std::uint64_t fwd = 0;
    std::uint64_t bwd = 0;
};

// Passages and their hard negatives go through the passage encoder as one pass.
Mat passage_inputs(const Batch& b) { return b.has_hard() ? vstack(b.positives, b.hard) : b.positives; }

StepStats substep_stats(const StrategyConfig& cfg, std::size_t update, std::size_t k, double loss,
                        const GradBuffer& gq, const GradBuffer& gp, std::size_t negatives,
                        const DualMemoryBank* bank, std::size_t fill_q, std::size_t fill_p, const Counters& c) {
    StepStats s;
    s.update = update;
    s.substep = k;
    s.strategy = std::string(to_string(cfg.kind));
    s.loss = loss;
    s.grad_norm_q_pre = gq.norm();
    s.grad_norm_p_pre = gp.norm();
    s.negatives_per_query = negatives;
    s.bank_fill_q = fill_q;
    s.bank_fill_p = fill_p;
    s.bank_bytes = bank != nullptr ? bank->bytes() : 0;
    s.fwd_passes_cum = c.fwd;
    s.bwd_passes_cum = c.bwd;
    return s;
}

// GradAccum / PreBatchNeg / ContAccum share this loop; FullBatch is the K == 1 case.
// `bank` is null for bank-free strategies.
StepOutcome accumulate(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                       const StrategyConfig& cfg, DualMemoryBank* bank, std::size_t update) {
    check_batch(batch, cfg);
    const std::size_t K = cfg.accum_steps;
    const bool bank_live = bank != nullptr &&
                           (!cfg.enable_bank_after_step || update >= *cfg.enable_bank_after_step);

    StepOutcome out;
    out.grad_q = GradBuffer::zeros_like(enc_q);
    out.grad_p = GradBuffer::zeros_like(enc_p);
    Counters c;

    if (bank_live && cfg.refresh_bank && bank->has_inputs() && bank->fill_p() > 0) {
        const Mat q_in = bank->stored_query_inputs();
        const Mat q_new = q_in.rows() > 0 ? forward(enc_q, q_in, false).reps : Mat(0, enc_q.d_model);
        const Mat p_new = forward(enc_p, bank->stored_passage_inputs(), false).reps;
        c.fwd += q_in.rows() > 0 ? 2 : 1;
        bank->replace_representations(q_new, p_new);
    }

    const BankSnapshot no_bank{Mat(0, enc_q.d_model), Mat(0, enc_q.d_model), {}, {}};
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const Batch sub = batch.slice(k * cfg.n_local, (k + 1) * cfg.n_local);
        const std::size_t global_substep = update * K + k;

        auto fq = forward(enc_q, sub.queries, true);
        const Mat p_in = passage_inputs(sub);
        auto fp = forward(enc_p, p_in, true);
        c.fwd += 2;
        const Mat p_pos = slice_rows(fp.reps, 0, sub.size());
        const Mat p_hard = slice_rows(fp.reps, sub.size(), fp.reps.rows());

        const BankSnapshot snap = bank_live ? bank->snapshot(global_substep) : no_bank;
        const ContrastiveResult res = contrastive_loss(fq.reps, p_pos, snap, p_hard, cfg.tau);
        if (!std::isfinite(res.grads.loss)) throw NumericError("strategy step: non-finite loss");

        GradBuffer gq = backward(enc_q, fq.tape, res.grads.grad_q_cur);
        GradBuffer gp = backward(enc_p, fp.tape, vstack(res.grads.grad_p_cur, res.grads.grad_hard));
        c.bwd += 2;
        gq.scale(1.0 / double(K));
        gp.scale(1.0 / double(K));

        out.stats.push_back(substep_stats(cfg, update, k, res.grads.loss, gq, gp,
                                          res.view.negatives_per_query(), bank, snap.queries.rows(),
                                          snap.passages.rows(), c));
        out.grad_q.add(gq);
        out.grad_p.add(gp);
        loss_sum += res.grads.loss;

        if (bank_live) {
            if (cfg.refresh_bank) {
                bank->enqueue_pairs(fq.reps, p_pos, global_substep, &sub.queries, &sub.positives);
            } else {
                bank->enqueue_pairs(fq.reps, p_pos, global_substep);
            }
            out.stats.back().bank_bytes = bank->bytes();
        }
    }
    out.loss = loss_sum / double(K);
    out.forward_passes = c.fwd;
    out.backward_passes = c.bwd;
    return out;
}

}  // namespace

StepOutcome step_full_batch(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                            const StrategyConfig& cfg, std::size_t update) {
    if (cfg.kind != StrategyKind::kFullBatch) throw ConfigError("strategy", "step_full_batch needs fullbatch");
    return accumulate(enc_q, enc_p, batch, cfg, nullptr, update);
}

StepOutcome step_grad_accum(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                            const StrategyConfig& cfg, std::size_t update) {
    if (cfg.kind != StrategyKind::kGradAccum) throw ConfigError("strategy", "step_grad_accum needs gradaccum");
    return accumulate(enc_q, enc_p, batch, cfg, nullptr, update);
}

StepOutcome step_contaccum(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                           const StrategyConfig& cfg, DualMemoryBank& bank, std::size_t update) {
    if (cfg.kind != StrategyKind::kContAccum) throw ConfigError("strategy", "step_contaccum needs contaccum");
    return accumulate(enc_q, enc_p, batch, cfg, &bank, update);
}

StepOutcome step_prebatch(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                          const StrategyConfig& cfg, DualMemoryBank& bank, std::size_t update) {
    if (cfg.kind != StrategyKind::kPreBatchNeg) throw ConfigError("strategy", "step_prebatch needs prebatch");
    if (bank.cap_q() != 0) throw StateError("step_prebatch: bank must not hold queries");
    return accumulate(enc_q, enc_p, batch, cfg, &bank, update);
}

StepOutcome step_grad_cache(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                            const StrategyConfig& cfg, std::size_t update) {
    if (cfg.kind != StrategyKind::kGradCache) throw ConfigError("strategy", "step_grad_cache needs gradcache");
    check_batch(batch, cfg);
    const std::size_t K = cfg.accum_steps;
    const std::size_t nl = cfg.n_local;
    const std::size_t d = enc_q.d_model;
    Counters c;

    // Phase 1: representations of the whole batch, no activations kept.
    std::vector<Mat> q_chunks, p_chunks, h_chunks;
    for (std::size_t k = 0; k < K; ++k) {
        const Batch sub = batch.slice(k * nl, (k + 1) * nl);
        q_chunks.push_back(forward(enc_q, sub.queries, false).reps);
        const Mat reps = forward(enc_p, passage_inputs(sub), false).reps;
        c.fwd += 2;
        p_chunks.push_back(slice_rows(reps, 0, nl));
        h_chunks.push_back(slice_rows(reps, nl, reps.rows()));
    }
    auto stack_all = [d](const std::vector<Mat>& chunks) {
        std::vector<const Mat*> parts;
        for (const Mat& m : chunks) parts.push_back(&m);
        return vstack(parts, d);
    };
    const Mat q_all = stack_all(q_chunks);
    const Mat p_all = stack_all(p_chunks);
    const Mat h_all = stack_all(h_chunks);

    // Phase 2: full n_total loss and the gradient cache w.r.t. representations.
    const BankSnapshot no_bank{Mat(0, d), Mat(0, d), {}, {}};
    const ContrastiveResult res = contrastive_loss(q_all, p_all, no_bank, h_all, cfg.tau);
    if (!std::isfinite(res.grads.loss)) throw NumericError("strategy step: non-finite loss");

    // Phase 3: re-forward each chunk with activations and push the cached slices through.
    StepOutcome out;
    out.grad_q = GradBuffer::zeros_like(enc_q);
    out.grad_p = GradBuffer::zeros_like(enc_p);
    out.loss = res.grads.loss;
    const std::size_t n_hard_chunk = cfg.use_hard_negatives ? nl : 0;
    for (std::size_t k = 0; k < K; ++k) {
        const Batch sub = batch.slice(k * nl, (k + 1) * nl);
        auto fq = forward(enc_q, sub.queries, true);
        auto fp = forward(enc_p, passage_inputs(sub), true);
        c.fwd += 2;
        const Mat up_q = slice_rows(res.grads.grad_q_cur, k * nl, (k + 1) * nl);
        const Mat up_p = vstack(slice_rows(res.grads.grad_p_cur, k * nl, (k + 1) * nl),
                                slice_rows(res.grads.grad_hard, k * n_hard_chunk, (k + 1) * n_hard_chunk));
        GradBuffer gq = backward(enc_q, fq.tape, up_q);
        GradBuffer gp = backward(enc_p, fp.tape, up_p);
        c.bwd += 2;
        out.stats.push_back(substep_stats(cfg, update, k, res.grads.loss, gq, gp,
                                          res.view.negatives_per_query(), nullptr, 0, 0, c));
        out.grad_q.add(gq);
        out.grad_p.add(gp);
    }
    out.forward_passes = c.fwd;
    out.backward_passes = c.bwd;
    return out;
}

StepOutcome run_step(const EncoderState& enc_q, const EncoderState& enc_p, const Batch& batch,
                     const StrategyConfig& cfg, DualMemoryBank& bank, std::size_t update) {
    switch (cfg.kind) {
        case StrategyKind::kFullBatch: return step_full_batch(enc_q, enc_p, batch, cfg, update);
        case StrategyKind::kGradAccum: return step_grad_accum(enc_q, enc_p, batch, cfg, update);
        case StrategyKind::kGradCache: return step_grad_cache(enc_q, enc_p, batch, cfg, update);
        case StrategyKind::kPreBatchNeg: return step_prebatch(enc_q, enc_p, batch, cfg, bank, update);
        case StrategyKind::kContAccum: return step_contaccum(enc_q, enc_p, batch, cfg, bank, update);
    }
    throw ConfigError("strategy", "unhandled strategy");
}

DualMemoryBank make_bank(const StrategyConfig& cfg, std::size_t d_model) {
    if (!cfg.uses_bank()) return DualMemoryBank(0, 0, d_model);
    return DualMemoryBank(cfg.n_memory_q, cfg.n_memory_p, d_model);
}

std::size_t negative_count(const StrategyConfig& cfg, std::size_t bank_fill_p) {
    std::size_t in_view = 0;  // current passages per similarity matrix
    std::size_t banked = 0;
    switch (cfg.kind) {
        case StrategyKind::kFullBatch:
        case StrategyKind::kGradCache:
            in_view = cfg.n_total();
            break;
        case StrategyKind::kGradAccum:
            in_view = cfg.n_local;
            break;
        case StrategyKind::kPreBatchNeg:
        case StrategyKind::kContAccum:
            in_view = cfg.n_local;
            banked = std::min(bank_fill_p, cfg.n_memory_p);
            break;
    }
    const std::size_t hard = cfg.use_hard_negatives ? in_view : 0;
    return in_view + banked + hard - 1;
}

bool surpasses_total(const StrategyConfig& cfg) {
    return cfg.n_memory_p > cfg.n_local * (cfg.accum_steps - 1);
}

}  // namespace contaccum

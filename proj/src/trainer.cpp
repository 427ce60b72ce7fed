// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/trainer.hpp"

#include <cmath>
#include <string>

#include "contaccum/error.hpp"

namespace contaccum {

void TrainConfig::validate() const {
    if (!(peak_lr > 0.0)) throw ConfigError("peak_lr", "must be > 0");
    if (warmup_steps > total_steps) throw ConfigError("warmup_steps", "must be <= total_steps");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm", "must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam_eps", "must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay", "must be >= 0");
}

TrainConfig TrainConfig::desk_profile(std::size_t total_steps, std::uint64_t seed) {
    TrainConfig c;
    c.total_steps = total_steps;
    c.warmup_steps = total_steps / 20;
    c.seed = seed;
    return c;
}

TrainConfig TrainConfig::bert_profile(std::size_t total_steps, std::uint64_t seed) {
    TrainConfig c;
    c.peak_lr = 2e-5;
    c.total_steps = total_steps;
    c.warmup_steps = std::min<std::size_t>(1237, total_steps);
    c.seed = seed;
    return c;
}

AdamState AdamState::zeros_like(const EncoderState& enc) {
    AdamState s;
    for (const Mat& p : enc.params) {
        s.m.emplace_back(p.rows(), p.cols());
        s.v.emplace_back(p.rows(), p.cols());
    }
    return s;
}

double lr_at(const TrainConfig& cfg, std::size_t step) {
    if (step > cfg.total_steps) throw std::out_of_range("lr_at: step beyond total_steps");
    if (step <= cfg.warmup_steps) {
        return cfg.warmup_steps == 0 ? cfg.peak_lr : cfg.peak_lr * double(step) / double(cfg.warmup_steps);
    }
    const double span = double(cfg.total_steps - cfg.warmup_steps);
    return cfg.peak_lr * double(cfg.total_steps - step) / span;
}

ClipResult clip_global(GradBuffer& grad_q, GradBuffer& grad_p, double clip_norm) {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_global: clip_norm must be > 0");
    ClipResult r;
    r.pre_norm_q = grad_q.norm();
    r.pre_norm_p = grad_p.norm();
    if (r.pre_norm_q > clip_norm) {
        r.coef_q = clip_norm / r.pre_norm_q;
        grad_q.scale(r.coef_q);
    }
    if (r.pre_norm_p > clip_norm) {
        r.coef_p = clip_norm / r.pre_norm_p;
        grad_p.scale(r.coef_p);
    }
    return r;
}

void adamw_update(AdamState& state, EncoderState& enc, const GradBuffer& grads, double lr,
                  const TrainConfig& cfg, std::size_t step) {
    if (grads.grads.size() != enc.params.size() || state.m.size() != enc.params.size()) {
        throw ShapeError("adamw_update: parameter/gradient/state counts differ");
    }
    if (step == 0) throw std::invalid_argument("adamw_update: step is 1-based");
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(step));
    for (std::size_t i = 0; i < enc.params.size(); ++i) {
        auto p = enc.params[i].values();
        const auto g = grads.grads[i].values();
        auto m = state.m[i].values();
        auto v = state.v[i].values();
        if (g.size() != p.size()) throw ShapeError("adamw_update: gradient shape mismatch");
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] *= 1.0 - lr * cfg.weight_decay;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

TrainResult run_training(const SyntheticTask& task, const StrategyConfig& strategy,
                         const TrainConfig& train_cfg, const ModelConfig& model,
                         const TrainHooks& hooks) {
    strategy.validate();
    train_cfg.validate();
    if (task.d_in == 0 || task.n_train() < strategy.n_total()) {
        throw ConfigError("n_local", "total batch " + std::to_string(strategy.n_total()) +
                                         " exceeds the " + std::to_string(task.n_train()) + " training pairs");
    }

    TrainResult result;
    const Rng root(train_cfg.seed);
    Rng init_q = root.derive(1);
    Rng init_p = root.derive(2);
    result.enc_q = init_encoder(init_q, model.kind, task.d_in, model.d_model, model.hidden);
    result.enc_p = init_encoder(init_p, model.kind, task.d_in, model.d_model, model.hidden);
    result.bank = make_bank(strategy, model.d_model);

    OptState opt{AdamState::zeros_like(result.enc_q), AdamState::zeros_like(result.enc_p), 0};
    std::uint64_t fwd_total = 0;
    std::uint64_t bwd_total = 0;

    for (std::size_t t = 0; t < train_cfg.total_steps; ++t) {
        if (strategy.disable_query_bank_at_step && t >= *strategy.disable_query_bank_at_step &&
            result.bank.query_bank_enabled()) {
            result.bank.set_query_bank_enabled(false);
        }
        const Batch batch = sample_batch(task, train_cfg.seed, t, strategy.n_total(), strategy.use_hard_negatives);
        StepOutcome out;
        try {
            out = run_step(result.enc_q, result.enc_p, batch, strategy, result.bank, t);
        } catch (const NumericError& e) {
            StepStats rec;
            rec.update = t;
            rec.strategy = std::string(to_string(strategy.kind));
            rec.loss = std::nan("");
            throw TrainingDiverged("update " + std::to_string(t) + ": " + e.what(), rec);
        }

        const ClipResult clip = clip_global(out.grad_q, out.grad_p, train_cfg.clip_norm);
        const double lr = lr_at(train_cfg, t);
        for (StepStats& s : out.stats) {
            s.grad_norm_q_post = s.grad_norm_q_pre * clip.coef_q;
            s.grad_norm_p_post = s.grad_norm_p_pre * clip.coef_p;
            s.grad_norm_ratio = grad_norm_ratio(s.grad_norm_p_post, s.grad_norm_q_post);
            s.fwd_passes_cum += fwd_total;
            s.bwd_passes_cum += bwd_total;
            s.lr = lr;
        }
        fwd_total += out.forward_passes;
        bwd_total += out.backward_passes;
        if (!std::isfinite(out.loss) || !std::isfinite(clip.pre_norm_q) || !std::isfinite(clip.pre_norm_p)) {
            throw TrainingDiverged("update " + std::to_string(t) + ": non-finite loss or gradient",
                                   out.stats.empty() ? StepStats{} : out.stats.back());
        }

        opt.t = t + 1;
        adamw_update(opt.query, result.enc_q, out.grad_q, lr, train_cfg, opt.t);
        adamw_update(opt.passage, result.enc_p, out.grad_p, lr, train_cfg, opt.t);

        if (hooks.on_update) hooks.on_update(t, out);
        result.log.steps.insert(result.log.steps.end(), out.stats.begin(), out.stats.end());

        const std::size_t done = t + 1;
        const bool last = done == train_cfg.total_steps;
        if (last || (hooks.eval_every > 0 && done % hooks.eval_every == 0)) {
            result.log.evals.push_back({done, evaluate(result.enc_q, result.enc_p, task, hooks.ks)});
        }
    }
    return result;
}

}  // namespace contaccum

// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "contaccum/error.hpp"
#include "contaccum/loss.hpp"

namespace contaccum {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, pattern, a, b);
    return buf;
}

double frob(const Mat& m) { return global_l2_norm(std::span<const Mat>(&m, 1)); }

Batch random_batch(Rng& rng, std::size_t n, std::size_t d_in, bool hard) {
    Batch b;
    b.queries = gaussian(rng, n, d_in, 1.0);
    b.positives = gaussian(rng, n, d_in, 1.0);
    b.hard = hard ? gaussian(rng, n, d_in, 1.0) : Mat(0, d_in);
    b.pair_ids.resize(n);
    std::iota(b.pair_ids.begin(), b.pair_ids.end(), std::size_t{0});
    return b;
}

// Folds one block comparison into a running row.
struct Worst {
    double rel = 0.0;
    double abs = 0.0;
    std::size_t blocks = 0;
    std::size_t absolute_blocks = 0;

    void add(const Mat& analytic, const Mat& numeric, const FdOptions& opt) {
        bool absolute = false;
        const double e = fd_block_error(analytic, numeric, opt, &absolute);
        ++blocks;
        if (absolute) {
            ++absolute_blocks;
            abs = std::max(abs, e);
        } else {
            rel = std::max(rel, e);
        }
    }

    CheckRow row(std::string name, const FdOptions& opt, std::size_t instances) const {
        CheckRow r;
        r.name = std::move(name);
        r.measured = rel;
        r.tolerance = opt.rel_tol;
        r.pass = rel <= opt.rel_tol && abs <= opt.abs_tol;
        r.detail = std::to_string(instances) + " instances, " + std::to_string(blocks) + " blocks";
        if (absolute_blocks > 0) {
            r.detail += fmt(", %.0f near-zero blocks (max abs %.2e)", double(absolute_blocks), abs);
        }
        return r;
    }
};

double loss_of(const Mat& q, const Mat& p, const BankSnapshot& bank, const Mat& hard, double tau) {
    return info_nce(build_similarity(q, p, bank, hard, tau));
}

CheckRow loss_suite(Rng& rng, const FdOptions& opt) {
    const std::size_t d = 8;
    const std::size_t n = 4;
    Worst w;
    std::size_t instances = 0;
    // bank layout: 0 none, 1 dual, 2 passage-only
    for (int layout = 0; layout < 3; ++layout) {
        for (double tau : {0.5, 1.0, 2.0}) {
            for (bool hard : {false, true}) {
                for (int rep = 0; rep < 6; ++rep) {
                    Mat q = gaussian(rng, n, d, 1.0);
                    Mat p = gaussian(rng, n, d, 1.0);
                    Mat h = hard ? gaussian(rng, n, d, 1.0) : Mat(0, d);
                    BankSnapshot bank;
                    bank.queries = layout == 1 ? gaussian(rng, 6, d, 1.0) : Mat(0, d);
                    bank.passages = layout >= 1 ? gaussian(rng, 6, d, 1.0) : Mat(0, d);
                    const ContrastiveResult res = contrastive_loss(q, p, bank, h, tau);
                    auto f = [&] { return loss_of(q, p, bank, h, tau); };
                    w.add(res.grads.grad_q_cur, numeric_gradient(q, f, opt.h), opt);
                    w.add(res.grads.grad_p_cur, numeric_gradient(p, f, opt.h), opt);
                    if (hard) w.add(res.grads.grad_hard, numeric_gradient(h, f, opt.h), opt);
                    ++instances;
                }
            }
        }
    }
    return w.row("loss: representation gradients", opt, instances);
}

CheckRow encoder_suite(Rng& rng, EncoderKind kind, const ModelConfig& model, const FdOptions& opt) {
    const std::size_t d_in = 6;
    Worst w;
    const std::size_t instances = 4;
    for (std::size_t rep = 0; rep < instances; ++rep) {
        EncoderState enc = init_encoder(rng, kind, d_in, std::min<std::size_t>(model.d_model, 8),
                                        std::min<std::size_t>(model.hidden, 8));
        // Biases start at zero; move them so their gradients are exercised off the origin.
        for (Mat& p : enc.params) add_inplace(p, gaussian(rng, p.rows(), p.cols(), 0.3));
        const Mat x = gaussian(rng, 5, d_in, 1.0);
        const Mat up = gaussian(rng, 5, enc.d_model, 1.0);
        const ForwardResult fr = forward(enc, x, true);
        const GradBuffer g = backward(enc, fr.tape, up);
        auto f = [&] {
            const Mat r = forward(enc, x, false).reps;
            double s = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) s += r.values()[i] * up.values()[i];
            return s;
        };
        for (std::size_t i = 0; i < enc.params.size(); ++i) {
            w.add(g.grads[i], numeric_gradient(enc.params[i], f, opt.h), opt);
        }
    }
    return w.row(std::string("encoder: ") + std::string(to_string(kind)) + " parameters", opt, instances);
}

// Whole-step loss with the bank held fixed (stop-gradient).
double step_loss(const EncoderState& eq, const EncoderState& ep, const Batch& b, const BankSnapshot& bank,
                 double tau) {
    const Mat q = forward(eq, b.queries, false).reps;
    const Mat p = forward(ep, b.positives, false).reps;
    const Mat h = b.has_hard() ? forward(ep, b.hard, false).reps : Mat(0, ep.d_model);
    return loss_of(q, p, bank, h, tau);
}

CheckRow step_suite(Rng& rng, StrategyKind kind, const ModelConfig& model, const FdOptions& opt) {
    const std::size_t d_in = 6;
    const std::size_t d_model = std::min<std::size_t>(model.d_model, 6);
    const std::size_t hidden = std::min<std::size_t>(model.hidden, 6);
    Worst w;
    const std::size_t instances = 2;
    for (std::size_t rep = 0; rep < instances; ++rep) {
        EncoderState eq = init_encoder(rng, model.kind, d_in, d_model, hidden);
        EncoderState ep = init_encoder(rng, model.kind, d_in, d_model, hidden);
        StrategyConfig cfg;
        cfg.kind = kind;
        cfg.n_local = 4;
        cfg.use_hard_negatives = true;
        cfg.tau = 0.7;
        DualMemoryBank bank;
        if (kind == StrategyKind::kContAccum) {
            cfg.n_memory_q = cfg.n_memory_p = 8;
            bank = make_bank(cfg, d_model);
            bank.enqueue_pairs(gaussian(rng, 8, d_model, 1.0), gaussian(rng, 8, d_model, 1.0), 0);
        }
        const Batch b = random_batch(rng, cfg.n_local, d_in, true);
        const BankSnapshot snap = bank.snapshot(0);
        const StepOutcome out = run_step(eq, ep, b, cfg, bank, 0);
        auto f = [&] { return step_loss(eq, ep, b, snap, cfg.tau); };
        for (std::size_t i = 0; i < eq.params.size(); ++i) {
            w.add(out.grad_q.grads[i], numeric_gradient(eq.params[i], f, opt.h), opt);
        }
        for (std::size_t i = 0; i < ep.params.size(); ++i) {
            w.add(out.grad_p.grads[i], numeric_gradient(ep.params[i], f, opt.h), opt);
        }
    }
    return w.row(std::string("step: ") + std::string(to_string(kind)) + " end to end", opt, instances);
}

}  // namespace

double fd_block_error(const Mat& analytic, const Mat& numeric, const FdOptions& opt, bool* absolute) {
    Mat diff = analytic;
    scale_inplace(diff, -1.0);
    add_inplace(diff, numeric);
    const double scale = std::max(frob(analytic), frob(numeric));
    const bool tiny = frob(analytic) < opt.tiny;
    if (absolute) *absolute = tiny;
    return tiny ? frob(diff) : frob(diff) / scale;
}

Mat numeric_gradient(Mat& x, const std::function<double()>& f, double h) {
    Mat g(x.rows(), x.cols());
    auto xs = x.values();
    auto gs = g.values();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double keep = xs[i];
        xs[i] = keep + h;
        const double up = f();
        xs[i] = keep - h;
        const double down = f();
        xs[i] = keep;
        gs[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double max_param_rel_diff(const GradBuffer& a, const GradBuffer& b) {
    if (a.grads.size() != b.grads.size()) throw ShapeError("max_param_rel_diff: parameter counts differ");
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < a.grads.size(); ++i) {
        const auto av = a.grads[i].values();
        const auto bv = b.grads[i].values();
        if (av.size() != bv.size()) throw ShapeError("max_param_rel_diff: block shapes differ");
        for (std::size_t j = 0; j < av.size(); ++j) {
            diff = std::max(diff, std::abs(av[j] - bv[j]));
            scale = std::max(scale, std::abs(bv[j]));
        }
    }
    return scale > 0.0 ? diff / scale : diff;
}

double max_param_rel_diff(const StepOutcome& a, const StepOutcome& b) {
    return std::max(max_param_rel_diff(a.grad_q, b.grad_q), max_param_rel_diff(a.grad_p, b.grad_p));
}

std::vector<CheckRow> gradcheck_suites(const ModelConfig& model, std::uint64_t seed, const FdOptions& opt) {
    const Rng root(seed);
    std::vector<CheckRow> rows;
    Rng r1 = root.derive(11);
    rows.push_back(loss_suite(r1, opt));
    Rng r2 = root.derive(12);
    rows.push_back(encoder_suite(r2, EncoderKind::kLinear, model, opt));
    Rng r3 = root.derive(13);
    rows.push_back(encoder_suite(r3, EncoderKind::kMlp, model, opt));
    Rng r4 = root.derive(14);
    rows.push_back(step_suite(r4, StrategyKind::kFullBatch, model, opt));
    Rng r5 = root.derive(15);
    rows.push_back(step_suite(r5, StrategyKind::kContAccum, model, opt));
    return rows;
}

std::vector<CheckRow> equivalence_lattice(std::uint64_t seed) {
    const Rng root(seed);
    std::vector<CheckRow> rows;
    const std::size_t d_in = 6;
    const std::size_t d_model = 5;
    const std::size_t hidden = 7;

    auto encoders = [&](Rng& rng, EncoderKind kind) {
        EncoderState q = init_encoder(rng, kind, d_in, d_model, hidden);
        EncoderState p = init_encoder(rng, kind, d_in, d_model, hidden);
        return std::pair{std::move(q), std::move(p)};
    };

    {
        CheckRow r{"gradcache == fullbatch", 0.0, 1e-9, true, ""};
        Rng rng = root.derive(21);
        std::size_t cases = 0;
        for (EncoderKind kind : {EncoderKind::kLinear, EncoderKind::kMlp}) {
            for (std::size_t n_total : {8, 16, 32}) {
                for (std::size_t k : {2, 4}) {
                    auto [eq, ep] = encoders(rng, kind);
                    const Batch b = random_batch(rng, n_total, d_in, false);
                    StrategyConfig full;
                    full.n_local = n_total;
                    StrategyConfig cache;
                    cache.kind = StrategyKind::kGradCache;
                    cache.n_local = n_total / k;
                    cache.accum_steps = k;
                    r.measured = std::max(r.measured, max_param_rel_diff(step_grad_cache(eq, ep, b, cache),
                                                                         step_full_batch(eq, ep, b, full)));
                    ++cases;
                }
            }
        }
        r.pass = r.measured <= r.tolerance;
        r.detail = std::to_string(cases) + " cases: n_total {8,16,32} x K {2,4} x {linear,mlp}";
        rows.push_back(r);
    }

    const std::size_t instances = 10;
    {
        CheckRow r{"gradaccum(K=1) == fullbatch", 0.0, 1e-12, true, ""};
        Rng rng = root.derive(22);
        for (std::size_t i = 0; i < instances; ++i) {
            auto [eq, ep] = encoders(rng, i % 2 ? EncoderKind::kMlp : EncoderKind::kLinear);
            const Batch b = random_batch(rng, 8, d_in, i % 3 == 0);
            StrategyConfig full;
            full.use_hard_negatives = b.has_hard();
            StrategyConfig accum = full;
            accum.kind = StrategyKind::kGradAccum;
            r.measured = std::max(r.measured, max_param_rel_diff(step_grad_accum(eq, ep, b, accum),
                                                                 step_full_batch(eq, ep, b, full)));
        }
        r.pass = r.measured <= r.tolerance;
        r.detail = std::to_string(instances) + " instances";
        rows.push_back(r);
    }
    {
        CheckRow r{"contaccum(empty bank, K=1) == fullbatch", 0.0, 1e-12, true, ""};
        Rng rng = root.derive(23);
        for (std::size_t i = 0; i < instances; ++i) {
            auto [eq, ep] = encoders(rng, i % 2 ? EncoderKind::kMlp : EncoderKind::kLinear);
            const Batch b = random_batch(rng, 8, d_in, i % 3 == 0);
            StrategyConfig full;
            full.use_hard_negatives = b.has_hard();
            StrategyConfig ca = full;
            ca.kind = StrategyKind::kContAccum;
            ca.n_memory_q = ca.n_memory_p = 16;
            DualMemoryBank bank = make_bank(ca, d_model);
            r.measured = std::max(r.measured, max_param_rel_diff(step_contaccum(eq, ep, b, ca, bank),
                                                                 step_full_batch(eq, ep, b, full)));
        }
        r.pass = r.measured <= r.tolerance;
        r.detail = std::to_string(instances) + " instances";
        rows.push_back(r);
    }
    {
        CheckRow r{"prebatch(before gate) == gradaccum", 0.0, 1e-12, true, ""};
        Rng rng = root.derive(24);
        for (std::size_t i = 0; i < instances; ++i) {
            auto [eq, ep] = encoders(rng, i % 2 ? EncoderKind::kMlp : EncoderKind::kLinear);
            const Batch b = random_batch(rng, 16, d_in, false);
            StrategyConfig accum;
            accum.kind = StrategyKind::kGradAccum;
            accum.n_local = 4;
            accum.accum_steps = 4;
            StrategyConfig pre = accum;
            pre.kind = StrategyKind::kPreBatchNeg;
            pre.n_memory_p = 12;
            pre.enable_bank_after_step = 5;
            DualMemoryBank bank = make_bank(pre, d_model);
            // Several updates before the gate: the bank must stay unused and empty.
            for (std::size_t t = 0; t < 3; ++t) {
                r.measured = std::max(r.measured, max_param_rel_diff(step_prebatch(eq, ep, b, pre, bank, t),
                                                                     step_grad_accum(eq, ep, b, accum, t)));
            }
        }
        r.pass = r.measured <= r.tolerance;
        r.detail = std::to_string(instances) + " instances x 3 updates";
        rows.push_back(r);
    }
    {
        // Negative control: with K=4 each query sees 7 negatives instead of 31.
        CheckRow r{"gradaccum(K=4) != fullbatch", 0.0, 0.9, true, ""};
        Rng rng = root.derive(25);
        const std::size_t seeds = 20;
        std::size_t differ = 0;
        double smallest = 1e300;
        for (std::size_t i = 0; i < seeds; ++i) {
            auto [eq, ep] = encoders(rng, EncoderKind::kMlp);
            const Batch b = random_batch(rng, 32, d_in, false);
            StrategyConfig full;
            full.n_local = 32;
            StrategyConfig accum;
            accum.kind = StrategyKind::kGradAccum;
            accum.n_local = 8;
            accum.accum_steps = 4;
            const double d = max_param_rel_diff(step_grad_accum(eq, ep, b, accum), step_full_batch(eq, ep, b, full));
            smallest = std::min(smallest, d);
            if (d > 1e-3) ++differ;
        }
        r.measured = double(differ) / double(seeds);
        r.pass = r.measured >= r.tolerance;
        r.detail = fmt("fraction of 20 seeds with rel diff > 1e-3 (needs >= 0.9); smallest diff %.3e", smallest);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace contaccum

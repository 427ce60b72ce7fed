// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "contaccum/diagnostics.hpp"
#include "contaccum/error.hpp"
#include "contaccum/kernels.hpp"
#include "contaccum/report.hpp"

namespace contaccum {

namespace fs = std::filesystem;

ConfigDocument load_document(const CliOptions& opts) {
    ConfigDocument doc = opts.config ? parse_document(read_text_file(*opts.config)) : ConfigDocument{};
    for (const std::string& kv : opts.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set", "expected key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        doc.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (opts.seed) doc.set("seed", std::to_string(*opts.seed));
    return doc;
}

SyntheticTask build_task(const ExperimentConfig& cfg) {
    SyntheticTask task;
    if (cfg.task_file) {
        task = load_task(*cfg.task_file);
    } else {
        Rng rng = Rng(cfg.seed()).derive(3);
        task = generate_task(rng, cfg.task);
    }
    if (cfg.strategy.use_hard_negatives && task.hard_neg.empty()) mine_hard_negatives(task);
    return task;
}

TrainResult run_experiment(const ExperimentConfig& cfg, const SyntheticTask& task) {
    TrainHooks hooks;
    hooks.eval_every = cfg.eval_every;
    std::set<std::size_t> ks(cfg.ks.begin(), cfg.ks.end());
    // eval.csv always carries these cutoffs.
    ks.insert({1, 5, 10, 20});
    hooks.ks.assign(ks.begin(), ks.end());
    return run_training(task, cfg.strategy, cfg.train, cfg.model, hooks);
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json optional_json(const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(); }

nlohmann::json summary_json(const ExperimentConfig& cfg, const TrainResult& r) {
    nlohmann::json j;
    j["strategy"] = std::string(to_string(cfg.strategy.kind));
    j["seed"] = cfg.seed();
    j["updates"] = cfg.train.total_steps;
    j["kernels"] = kernels::active().name;
    if (!r.log.steps.empty()) {
        const StepStats& last = r.log.steps.back();
        const auto pts = per_update(r.log.steps, last.strategy);
        j["final_loss"] = pts.back().loss;
        j["forward_passes"] = last.fwd_passes_cum;
        j["backward_passes"] = last.bwd_passes_cum;
        j["negatives_per_query"] = last.negatives_per_query;
        j["bank_fill_q"] = r.bank.fill_q();
        j["bank_fill_p"] = r.bank.fill_p();
        j["bank_bytes"] = r.bank.bytes();
        j["bank_bytes_theoretical"] = byte_usage(cfg.strategy.n_memory_p, cfg.model.d_model);
        j["bank_gib_theoretical"] = bytes_to_gib(byte_usage(cfg.strategy.n_memory_p, cfg.model.d_model));
        const StrategySummary s = aggregate(r.log.steps, 0.25).front();
        j["window"] = {{"fraction", 0.25},
                       {"updates", s.updates},
                       {"ratio_median", optional_json(s.ratio_median)},
                       {"ratio_mean", optional_json(s.ratio_mean)},
                       {"ratio_max", optional_json(s.ratio_max)},
                       {"loss_median", s.loss_median},
                       {"loss_mean", s.loss_mean}};
    }
    if (!r.log.evals.empty()) {
        j["final_eval"] = r.log.evals.back().metrics;
        j["final_eval_step"] = r.log.evals.back().step;
    }
    j["parameters_per_encoder"] = parameter_count(r.enc_q);
    return j;
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                        c == '-' || c == '_' || c == '=';
        out += ok ? c : '_';
    }
    return out;
}

std::string fixed(double x, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string sci(double x) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

void print_rows(std::ostream& out, const std::vector<CheckRow>& rows, bool higher_is_better = false) {
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.name.size());
    for (const auto& r : rows) {
        out << (r.pass ? "PASS  " : "FAIL  ") << r.name << std::string(width - r.name.size() + 2, ' ')
            << sci(r.measured) << (higher_is_better ? "  (need >= " : "  (tol ") << sci(r.tolerance) << ")  "
            << r.detail << '\n';
    }
}

int cmd_train(const CliOptions& opts, std::ostream& out) {
    const ExperimentConfig cfg = build_config(load_document(opts));
    const TrainResult r = train_to_dir(cfg, opts.out);
    out << "trained " << to_string(cfg.strategy.kind) << " for " << cfg.train.total_steps << " updates -> "
        << opts.out.string() << '\n';
    if (!r.log.evals.empty()) {
        const auto& m = r.log.evals.back().metrics;
        out << "final top1=" << fixed(m.at("top1"), 4) << " top5=" << fixed(m.at("top5"), 4)
            << " top20=" << fixed(m.at("top20"), 4) << '\n';
    }
    return kExitOk;
}

int cmd_gradcheck(const CliOptions& opts, std::ostream& out) {
    const ExperimentConfig cfg = build_config(load_document(opts));
    const auto rows = gradcheck_suites(cfg.model, cfg.seed());
    out << "finite-difference suites (central, h=1e-6; relative error per parameter block)\n";
    print_rows(out, rows);
    const bool ok = std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
    out << (ok ? "all suites passed\n" : "some suites FAILED\n");
    return ok ? kExitOk : kExitRuntime;
}

int cmd_equivalence(const CliOptions& opts, std::ostream& out) {
    const ExperimentConfig cfg = build_config(load_document(opts));
    const auto rows = equivalence_lattice(cfg.seed());
    out << "strategy equivalence lattice (max relative difference of parameter gradients)\n";
    std::vector<CheckRow> pos(rows.begin(), rows.end() - 1);
    print_rows(out, pos);
    print_rows(out, {rows.back()}, true);
    const bool ok = std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
    out << (ok ? "lattice holds\n" : "lattice BROKEN\n");
    return ok ? kExitOk : kExitRuntime;
}

int cmd_sweep(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    const ConfigDocument base = load_document(opts);
    const std::vector<SweepPoint> points = expand_sweep(base);
    // Validate every point before any work starts.
    std::vector<ExperimentConfig> configs;
    for (const SweepPoint& p : points) {
        try {
            configs.push_back(build_config(p.doc));
        } catch (const ConfigError& e) {
            throw ConfigError(e.key(), "sweep point " + p.name + ": " + e.what());
        }
    }
    fs::create_directories(opts.out);

    struct Outcome {
        bool ok = false;
        std::string message;
        std::optional<double> top5;
        std::optional<double> ratio_median;
    };
    std::vector<Outcome> outcomes(points.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            Outcome o;
            try {
                const TrainResult r = train_to_dir(configs[i], opts.out / points[i].name);
                o.ok = true;
                if (!r.log.evals.empty()) o.top5 = r.log.evals.back().metrics.at("top5");
                o.ratio_median = aggregate(r.log.steps, 0.25).front().ratio_median;
            } catch (const std::exception& e) {
                o.message = e.what();
            }
            {
                std::lock_guard lock(log_mutex);
                (o.ok ? out : err) << (o.ok ? "done   " : "failed ") << points[i].name
                                   << (o.ok ? "" : ": " + o.message) << '\n';
            }
            outcomes[i] = std::move(o);
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, std::max<std::size_t>(points.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::ostringstream index;
    index << "point,status,top5,ratio_median_final25\n";
    bool all_ok = true;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Outcome& o = outcomes[i];
        all_ok = all_ok && o.ok;
        index << points[i].name << ',' << (o.ok ? "ok" : "failed") << ','
              << (o.top5 ? format_double(*o.top5) : "") << ','
              << (o.ratio_median ? format_double(*o.ratio_median) : "") << '\n';
    }
    write_file(opts.out / "sweep.csv", index.str());
    out << points.size() << " points, " << jobs << " jobs -> " << (opts.out / "sweep.csv").string() << '\n';
    return all_ok ? kExitOk : kExitRuntime;
}

int cmd_report(const CliOptions& opts, std::ostream& out) {
    std::vector<fs::path> dirs = opts.inputs;
    if (dirs.empty()) {
        if (fs::exists(opts.out / "metrics.csv")) {
            dirs.push_back(opts.out);
        } else if (fs::is_directory(opts.out)) {
            for (const auto& entry : fs::directory_iterator(opts.out)) {
                if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv")) dirs.push_back(entry.path());
            }
            std::sort(dirs.begin(), dirs.end());
        }
    }
    if (dirs.empty()) {
        throw std::runtime_error("report: no run directories (pass them as arguments or point --out at a sweep)");
    }
    std::vector<RunData> runs;
    for (const fs::path& d : dirs) runs.push_back(load_run(d));
    write_report(runs, opts.out);
    out << "report for " << runs.size() << " run(s) -> " << (opts.out / "report.md").string() << '\n';
    return kExitOk;
}

}  // namespace

TrainResult train_to_dir(const ExperimentConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    // Fail on an unwritable directory before spending time on training.
    write_file(dir / "config.txt", to_text(cfg));
    const SyntheticTask task = build_task(cfg);
    if (cfg.export_task) save_task(task, dir / "task.bin");
    const TrainResult r = run_experiment(cfg, task);

    std::ostringstream metrics;
    write_metrics_csv(metrics, r.log.steps);
    write_file(dir / "metrics.csv", metrics.str());
    std::ostringstream evals;
    write_eval_csv(evals, r.log.evals);
    write_file(dir / "eval.csv", evals.str());
    write_file(dir / "summary.json", summary_json(cfg, r).dump(2) + "\n");
    return r;
}

std::vector<SweepPoint> expand_sweep(const ConfigDocument& doc) {
    std::vector<SweepPoint> points{{"", doc}};
    points.front().doc.sweep_axes.clear();
    for (const auto& [key, values] : doc.sweep_axes) {
        std::vector<SweepPoint> grown;
        for (const SweepPoint& p : points) {
            for (const std::string& v : values) {
                SweepPoint q = p;
                q.doc.set(key, v);
                q.name += (q.name.empty() ? "" : "__") + sanitize(key + "=" + v);
                grown.push_back(std::move(q));
            }
        }
        points = std::move(grown);
    }
    if (points.size() == 1 && points.front().name.empty()) points.front().name = "base";
    return points;
}

int run_cli(const CliOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        if (opts.command == "train") return cmd_train(opts, out);
        if (opts.command == "gradcheck") return cmd_gradcheck(opts, out);
        if (opts.command == "equivalence") return cmd_equivalence(opts, out);
        if (opts.command == "sweep") return cmd_sweep(opts, out, err);
        if (opts.command == "report") return cmd_report(opts, out);
        err << "unknown command '" << opts.command << "' (train, gradcheck, equivalence, sweep, report)\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const TrainingDiverged& e) {
        const StepStats& s = e.record();
        err << "training diverged: " << e.what() << " (update " << s.update << ", substep " << s.substep
            << ", loss " << s.loss << ")\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace contaccum

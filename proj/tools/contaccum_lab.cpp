// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// contaccum-lab: experiment runner for the dual-encoder training strategies.
//
//   contaccum-lab train       --config run.cfg --out runs/ca
//   contaccum-lab gradcheck
//   contaccum-lab equivalence
//   contaccum-lab sweep       --config grid.cfg --out runs/grid --jobs 4
//   contaccum-lab report      --out runs/grid [RUN_DIR...]
//
// CONTACCUM_ISA=scalar|avx2|neon pins the kernel variant.

#include <iostream>

#include <CLI11.hpp>

#include "contaccum/commands.hpp"
#include "contaccum/config.hpp"

int main(int argc, char** argv) {
    using namespace contaccum;
    CLI::App app{"Desk-scale lab for memory-constrained dual-encoder contrastive training"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    CliOptions opts;
    std::uint64_t seed = 0;
    bool list_keys = false;
    app.add_flag("--list-keys", list_keys, "Print every config key with its default and exit");

    auto common = [&](CLI::App* sub, bool with_jobs) {
        sub->add_option("--config", opts.config, "Flat key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed, "Override the config seed");
        sub->add_option("--set", opts.sets, "key=value override (repeatable)")->take_all();
        if (with_jobs) sub->add_option("--jobs", opts.jobs, "Concurrent sweep points")->check(CLI::PositiveNumber);
    };
    common(app.add_subcommand("train", "Train one configuration and write metrics.csv, eval.csv, summary.json"), false);
    common(app.add_subcommand("gradcheck", "Finite-difference checks of every hand-written gradient"), false);
    common(app.add_subcommand("equivalence", "Check the strategy-equivalence lattice"), false);
    common(app.add_subcommand("sweep", "Train the cross product of sweep.<key> axes"), true);
    CLI::App* report = app.add_subcommand("report", "Markdown summary and SVG charts from run directories");
    report->add_option("--out", opts.out, "Output directory (also scanned for runs when none are given)")
        ->capture_default_str();
    report->add_option("runs", opts.inputs, "Run directories containing metrics.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        if (list_keys) {
            for (const auto& k : config_keys()) {
                std::cout << k.name << " = " << (k.default_value.empty() ? "(derived)" : k.default_value) << "  # "
                          << k.help << '\n';
            }
            return kExitOk;
        }
        app.exit(e);
        return kExitUsage;
    }
    const CLI::App* sub = app.get_subcommands().front();
    opts.command = sub->get_name();
    if (const CLI::Option* o = sub->get_option_no_throw("--seed"); o != nullptr && o->count() > 0) opts.seed = seed;
    return run_cli(opts, std::cout, std::cerr);
}

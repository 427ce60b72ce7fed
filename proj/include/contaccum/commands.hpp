// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of contaccum-lab: train, gradcheck, equivalence, sweep, report.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "contaccum/config.hpp"
#include "contaccum/data.hpp"
#include "contaccum/trainer.hpp"

namespace contaccum {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct CliOptions {
    std::string command;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out = "out";
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::vector<std::string> sets;                 // "key=value" overrides, applied in order
    std::vector<std::filesystem::path> inputs;     // report: run directories
};

// Config file, then --set overrides, then --seed.
ConfigDocument load_document(const CliOptions& opts);

// Task for a config: loaded from task_file or generated from the seed; hard
// negatives mined when the strategy uses them.
SyntheticTask build_task(const ExperimentConfig& cfg);

TrainResult run_experiment(const ExperimentConfig& cfg, const SyntheticTask& task);

// Writes metrics.csv, eval.csv, config.txt and summary.json (and task.bin
// when export_task is set) into dir.
TrainResult train_to_dir(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct SweepPoint {
    std::string name;  // subdirectory name
    ConfigDocument doc;
};

// Cross product of the sweep axes in declaration order (last axis fastest).
std::vector<SweepPoint> expand_sweep(const ConfigDocument& doc);

// Dispatches to a subcommand; returns the process exit code.
int run_cli(const CliOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace contaccum

// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat experiment configuration.
//
// Format: one `key = value` per line, `#` starts a comment, blank lines are
// ignored, later assignments win. Keys and defaults are listed in
// config_keys(); unknown keys are rejected. `sweep.<key> = v1, v2, ...`
// declares a sweep axis (used by the `sweep` command only).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "contaccum/data.hpp"
#include "contaccum/strategies.hpp"
#include "contaccum/trainer.hpp"

namespace contaccum {

struct ConfigKey {
    std::string name;
    std::string default_value;  // "" means unset / derived
    std::string help;
};

const std::vector<ConfigKey>& config_keys();

// Raw assignments before typing; keeps the sweep axes separate.
struct ConfigDocument {
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, std::vector<std::string>>> sweep_axes;

    // Applies `key=value`; throws ConfigError for unknown keys.
    void set(const std::string& key, const std::string& value);
};

struct ExperimentConfig {
    StrategyConfig strategy;
    TrainConfig train;
    ModelConfig model;
    TaskParams task;
    std::size_t eval_every = 0;
    std::vector<std::size_t> ks{1, 5, 10, 20};
    std::optional<std::filesystem::path> task_file;
    bool export_task = false;
    std::vector<std::pair<std::string, std::vector<std::string>>> sweep_axes;

    std::uint64_t seed() const noexcept { return train.seed; }
};

ConfigDocument parse_document(const std::string& text);

// Types every value, fills defaults, and checks all cross-field invariants.
ExperimentConfig build_config(const ConfigDocument& doc);

ExperimentConfig parse_config(const std::string& text);

// Canonical `key = value` listing of every key; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& cfg);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace contaccum

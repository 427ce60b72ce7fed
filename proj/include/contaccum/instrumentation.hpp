// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training diagnostics: per-substep records, the passage/query gradient-norm
// ratio, similarity mass by representation age, and windowed summaries.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contaccum/numerics.hpp"

namespace contaccum {

struct StepStats {
    std::size_t update = 0;   // optimizer update index t
    std::size_t substep = 0;  // accumulation substep k within the update
    std::string strategy;
    double loss = 0.0;
    // Norms of this substep's share of the accumulated gradient.
    double grad_norm_q_pre = 0.0;
    double grad_norm_p_pre = 0.0;
    double grad_norm_q_post = 0.0;
    double grad_norm_p_post = 0.0;
    std::optional<double> grad_norm_ratio;  // p_post / q_post; nullopt when q_post == 0
    std::size_t negatives_per_query = 0;
    std::size_t bank_fill_q = 0;
    std::size_t bank_fill_p = 0;
    std::uint64_t bank_bytes = 0;
    std::uint64_t fwd_passes_cum = 0;
    std::uint64_t bwd_passes_cum = 0;
    double lr = 0.0;

    friend bool operator==(const StepStats&, const StepStats&) = default;
};

// ||grad Lambda|| / ||grad Theta||; nullopt stands for "undefined" (zero query norm).
std::optional<double> grad_norm_ratio(double norm_lambda, double norm_theta);

enum class SimMassMode { kSoftmax, kRaw };

// Similarity mass current queries put on passages of each age (0 = in-batch).
//   raw:     (1/|Q|) sum_i sum_j q_i . p_j over the bucket
//   softmax: row softmax over every column at temperature tau, bucket mass
//            averaged over queries; buckets sum to 1 per query.
// Empty buckets are omitted.
std::map<std::size_t, double> sim_mass(const Mat& q_cur, const std::map<std::size_t, Mat>& banked_by_age,
                                       const Mat& p_cur, double tau, SimMassMode mode);

// Groups banked passage rows by age for sim_mass.
std::map<std::size_t, Mat> bucket_by_age(const Mat& passages, std::span<const std::size_t> ages);

struct StrategySummary {
    std::string strategy;
    std::size_t updates = 0;  // updates in the window
    std::optional<double> ratio_median;
    std::optional<double> ratio_mean;
    std::optional<double> ratio_max;
    double loss_median = 0.0;
    double loss_mean = 0.0;
    double loss_max = 0.0;
};

// Per-update values: substeps of one update are averaged (undefined ratios skipped).
struct UpdatePoint {
    std::size_t update = 0;
    std::optional<double> ratio;
    double loss = 0.0;
};
std::vector<UpdatePoint> per_update(std::span<const StepStats> log, const std::string& strategy);

// Statistics over the trailing `window` fraction of updates, per strategy
// (in order of first appearance). Throws on an empty log or window outside (0, 1].
std::vector<StrategySummary> aggregate(std::span<const StepStats> log, double window);

double median(std::vector<double> values);

}  // namespace contaccum

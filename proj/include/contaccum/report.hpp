// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run artifacts: metrics.csv / eval.csv serialization, and the static
// report (markdown tables plus SVG line charts) built from them.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contaccum/instrumentation.hpp"
#include "contaccum/trainer.hpp"

namespace contaccum {

inline constexpr const char* kMetricsHeader =
    "step,substep,strategy,loss,grad_norm_q_pre,grad_norm_p_pre,grad_norm_q_post,grad_norm_p_post,"
    "grad_norm_ratio,negatives_per_query,bank_fill_q,bank_fill_p,bank_bytes,fwd_passes_cum,bwd_passes_cum,lr";
inline constexpr const char* kEvalHeader = "step,top1,top5,top20,recall20,ndcg10,ndcg20";

// Shortest text that reads back to the same double.
std::string format_double(double x);

void write_metrics_csv(std::ostream& out, std::span<const StepStats> steps);
void write_eval_csv(std::ostream& out, std::span<const EvalRecord> evals);

std::vector<StepStats> read_metrics_csv(const std::filesystem::path& path);
std::vector<EvalRecord> read_eval_csv(const std::filesystem::path& path);

struct RunData {
    std::string label;  // directory name
    std::vector<StepStats> steps;
    std::vector<EvalRecord> evals;
};

// Reads <dir>/metrics.csv and <dir>/eval.csv (eval.csv may be absent).
RunData load_run(const std::filesystem::path& dir);

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool dashed = false;
};

struct ChartSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
};

std::string svg_line_chart(const ChartSpec& spec, std::span<const Series> series);

// Markdown with one row per run: final loss, trailing-window ratio stats,
// final retrieval metrics.
std::string summary_markdown(std::span<const RunData> runs, double window);

// Writes report.md, loss.svg, ratio.svg and topk.svg into out_dir.
void write_report(std::span<const RunData> runs, const std::filesystem::path& out_dir);

}  // namespace contaccum

// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-checks behind the `gradcheck` and `equivalence` commands: central
// finite differences against the hand-written gradients, and the lattice of
// strategy pairs that must produce the same parameter gradients.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "contaccum/encoder.hpp"
#include "contaccum/numerics.hpp"
#include "contaccum/strategies.hpp"
#include "contaccum/trainer.hpp"

namespace contaccum {

struct CheckRow {
    std::string name;
    double measured = 0.0;   // worst value seen
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
};

struct FdOptions {
    double h = 1e-6;
    double rel_tol = 1e-6;
    // Blocks whose analytic norm is below this are compared by absolute
    // difference against abs_tol instead.
    double tiny = 1e-10;
    double abs_tol = 1e-8;
};

// ||a - n|| / max(||a||, ||n||), or the absolute norm of the difference when
// ||a|| is below `tiny` (flagged through `absolute`).
double fd_block_error(const Mat& analytic, const Mat& numeric, const FdOptions& opt, bool* absolute = nullptr);

// Central differences of f with respect to every entry of x.
Mat numeric_gradient(Mat& x, const std::function<double()>& f, double h);

// max|a - b| / max|b| over every parameter of one encoder. Normalizing by the
// whole encoder keeps blocks whose exact gradient is zero (the passage output
// bias without a bank) from turning round-off into a relative error.
double max_param_rel_diff(const GradBuffer& a, const GradBuffer& b);
// Max of the query-encoder and passage-encoder values.
double max_param_rel_diff(const StepOutcome& a, const StepOutcome& b);

// Finite-difference suites (loss representations, both encoder kinds,
// full-batch and bank steps end to end). Sizes follow `model`.
std::vector<CheckRow> gradcheck_suites(const ModelConfig& model, std::uint64_t seed, const FdOptions& opt = {});

// Strategy-equivalence lattice, including the negative control that K=4
// accumulation must NOT match the full batch.
std::vector<CheckRow> equivalence_lattice(std::uint64_t seed);

}  // namespace contaccum

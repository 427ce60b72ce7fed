// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// InfoNCE over current and banked representations.
//
// Rows are queries (current, then banked); columns are passages (current
// positives, then banked passages, then this step's hard negatives). The
// loss is the mean over all rows of -log softmax(logits / tau) at the row's
// positive column. Gradients are returned for current rows/columns only.

#pragma once

#include <cstddef>
#include <vector>

#include "contaccum/membank.hpp"
#include "contaccum/numerics.hpp"

namespace contaccum {

struct SimilarityView {
    Mat logits;  // (Q P^T) / tau
    std::size_t n_cur_q = 0;
    std::size_t n_cur_p = 0;
    std::size_t n_bank_q = 0;
    std::size_t n_bank_p = 0;
    std::size_t n_hard = 0;
    std::vector<std::size_t> pos_col;
    double tau = 1.0;

    std::size_t n_rows() const noexcept { return logits.rows(); }
    std::size_t n_cols() const noexcept { return logits.cols(); }
    // Columns other than the row's positive, identical for every row.
    std::size_t negatives_per_query() const noexcept { return n_cols() - 1; }
};

struct LossGrad {
    double loss = 0.0;
    Mat grad_q_cur;  // n_cur_q x d_model
    Mat grad_p_cur;  // n_cur_p x d_model
    Mat grad_hard;   // n_hard x d_model (hard negatives are encoded this step)
};

// Stacked query rows: current, then banked.
Mat stack_queries(const Mat& q_cur, const BankSnapshot& bank);
// Stacked passage columns: current, banked, hard negatives.
Mat stack_passages(const Mat& p_cur, const BankSnapshot& bank, const Mat& hard);

SimilarityView build_similarity(const Mat& q_cur, const Mat& p_cur, const BankSnapshot& bank,
                                 const Mat& hard, double tau);

double info_nce(const SimilarityView& view);

// Closed form: D = (softmax(logits) - Y) / (n_rows * tau); dQ = D P, dP = D^T Q,
// truncated to current rows (stop-gradient on banked entries).
LossGrad rep_gradients(const SimilarityView& view, const Mat& q_all, const Mat& p_all);

struct ContrastiveResult {
    SimilarityView view;
    LossGrad grads;
};

ContrastiveResult contrastive_loss(const Mat& q_cur, const Mat& p_cur, const BankSnapshot& bank,
                                   const Mat& hard, double tau);

}  // namespace contaccum

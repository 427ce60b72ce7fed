// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/loss.hpp"

#include <cmath>
#include <string>

#include "contaccum/error.hpp"

namespace contaccum {

Mat stack_queries(const Mat& q_cur, const BankSnapshot& bank) {
    return vstack(q_cur, bank.queries);
}

Mat stack_passages(const Mat& p_cur, const BankSnapshot& bank, const Mat& hard) {
    const Mat* parts[] = {&p_cur, &bank.passages, &hard};
    return vstack(parts, p_cur.cols());
}

SimilarityView build_similarity(const Mat& q_cur, const Mat& p_cur, const BankSnapshot& bank,
                                const Mat& hard, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("build_similarity: tau must be > 0");
    if (q_cur.rows() != p_cur.rows()) {
        throw ShapeError("build_similarity: " + std::to_string(q_cur.rows()) +
                         " current queries vs " + std::to_string(p_cur.rows()) + " positives");
    }
    const std::size_t d = q_cur.cols();
    auto check_width = [d](const Mat& m, const char* what) {
        if (m.rows() > 0 && m.cols() != d) {
            throw ShapeError(std::string("build_similarity: ") + what + " width " + m.shape_str() +
                             " vs d_model " + std::to_string(d));
        }
    };
    check_width(p_cur, "current passages");
    check_width(bank.queries, "banked queries");
    check_width(bank.passages, "banked passages");
    check_width(hard, "hard negatives");
    if (bank.queries.rows() > 0 && bank.queries.rows() != bank.passages.rows()) {
        throw ShapeError("build_similarity: banked pair counts differ (" +
                         std::to_string(bank.queries.rows()) + " queries vs " +
                         std::to_string(bank.passages.rows()) + " passages)");
    }

    SimilarityView view;
    view.n_cur_q = q_cur.rows();
    view.n_cur_p = p_cur.rows();
    view.n_bank_q = bank.queries.rows();
    view.n_bank_p = bank.passages.rows();
    view.n_hard = hard.rows();
    view.tau = tau;

    view.logits = matmul_nt(stack_queries(q_cur, bank), stack_passages(p_cur, bank, hard));
    scale_inplace(view.logits, 1.0 / tau);

    view.pos_col.resize(view.n_cur_q + view.n_bank_q);
    for (std::size_t i = 0; i < view.n_cur_q; ++i) view.pos_col[i] = i;
    for (std::size_t j = 0; j < view.n_bank_q; ++j) view.pos_col[view.n_cur_q + j] = view.n_cur_p + j;
    return view;
}

namespace {

void check_view(const SimilarityView& view) {
    if (view.n_rows() != view.n_cur_q + view.n_bank_q ||
        view.n_cols() != view.n_cur_p + view.n_bank_p + view.n_hard ||
        view.pos_col.size() != view.n_rows()) {
        throw ShapeError("SimilarityView: inconsistent block counts for logits " +
                         view.logits.shape_str());
    }
}

}  // namespace

double info_nce(const SimilarityView& view) {
    check_view(view);
    if (view.n_rows() == 0) return 0.0;
    // logits already carry 1/tau
    const Mat logp = row_log_softmax(view.logits, 1.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < view.n_rows(); ++i) sum += logp(i, view.pos_col[i]);
    return -sum / double(view.n_rows());
}

LossGrad rep_gradients(const SimilarityView& view, const Mat& q_all, const Mat& p_all) {
    check_view(view);
    if (q_all.rows() != view.n_rows() || p_all.rows() != view.n_cols() ||
        q_all.cols() != p_all.cols()) {
        throw ShapeError("rep_gradients: stacked reps " + q_all.shape_str() + " / " +
                         p_all.shape_str() + " do not match view " + view.logits.shape_str());
    }
    LossGrad out;
    const std::size_t d = q_all.cols();
    if (view.n_rows() == 0) {
        out.grad_q_cur = Mat(0, d);
        out.grad_p_cur = Mat(view.n_cur_p, d);
        out.grad_hard = Mat(view.n_hard, d);
        return out;
    }
    const Mat logp = row_log_softmax(view.logits, 1.0);
    const double inv = 1.0 / (double(view.n_rows()) * view.tau);
    Mat coeff(view.n_rows(), view.n_cols());
    double sum = 0.0;
    for (std::size_t i = 0; i < view.n_rows(); ++i) {
        sum += logp(i, view.pos_col[i]);
        for (std::size_t j = 0; j < view.n_cols(); ++j) coeff(i, j) = std::exp(logp(i, j)) * inv;
        coeff(i, view.pos_col[i]) -= inv;
    }
    out.loss = -sum / double(view.n_rows());

    out.grad_q_cur = matmul(slice_rows(coeff, 0, view.n_cur_q), p_all);
    const Mat grad_p_all = matmul_tn(coeff, q_all);
    out.grad_p_cur = slice_rows(grad_p_all, 0, view.n_cur_p);
    const std::size_t hard_begin = view.n_cur_p + view.n_bank_p;
    out.grad_hard = slice_rows(grad_p_all, hard_begin, hard_begin + view.n_hard);
    return out;
}

ContrastiveResult contrastive_loss(const Mat& q_cur, const Mat& p_cur, const BankSnapshot& bank,
                                   const Mat& hard, double tau) {
    ContrastiveResult r;
    r.view = build_similarity(q_cur, p_cur, bank, hard, tau);
    r.grads = rep_gradients(r.view, stack_queries(q_cur, bank), stack_passages(p_cur, bank, hard));
    return r;
}

}  // namespace contaccum

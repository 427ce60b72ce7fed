// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/membank.hpp"

#include <algorithm>
#include <string>

#include "contaccum/error.hpp"

namespace contaccum {

DualMemoryBank::DualMemoryBank(std::size_t cap_q, std::size_t cap_p, std::size_t d_model)
    : cap_q_(cap_q), cap_p_(cap_p), d_model_(d_model) {
    if (cap_q > 0 && cap_p > 0 && cap_q != cap_p) {
        throw std::invalid_argument("DualMemoryBank: paired banks need equal capacities (" +
                                    std::to_string(cap_q) + " vs " + std::to_string(cap_p) + ")");
    }
    if (cap_q > 0 && cap_p == 0) {
        throw std::invalid_argument("DualMemoryBank: a query bank requires a passage bank");
    }
}

void DualMemoryBank::enqueue_pairs(const Mat& q_reps, const Mat& p_reps, std::size_t step,
                                   const Mat* q_inputs, const Mat* p_inputs) {
    if (q_reps.rows() != p_reps.rows()) {
        throw ShapeError("enqueue_pairs: " + std::to_string(q_reps.rows()) + " queries vs " +
                         std::to_string(p_reps.rows()) + " passages");
    }
    if ((q_reps.rows() > 0 && q_reps.cols() != d_model_) ||
        (p_reps.rows() > 0 && p_reps.cols() != d_model_)) {
        throw ShapeError("enqueue_pairs: representation width " + q_reps.shape_str() + "/" +
                         p_reps.shape_str() + " vs bank d_model " + std::to_string(d_model_));
    }
    const bool keep_inputs = q_inputs != nullptr && p_inputs != nullptr;
    if (keep_inputs && (q_inputs->rows() != q_reps.rows() || p_inputs->rows() != p_reps.rows())) {
        throw ShapeError("enqueue_pairs: inputs do not match representations");
    }
    const bool keep_q = active_cap_q() > 0;
    for (std::size_t i = 0; i < p_reps.rows(); ++i) {
        if (cap_p_ > 0) {
            Entry e{{p_reps.row(i).begin(), p_reps.row(i).end()}, {}, step};
            if (keep_inputs) e.input.assign(p_inputs->row(i).begin(), p_inputs->row(i).end());
            p_.push_back(std::move(e));
        }
        if (keep_q) {
            Entry e{{q_reps.row(i).begin(), q_reps.row(i).end()}, {}, step};
            if (keep_inputs) e.input.assign(q_inputs->row(i).begin(), q_inputs->row(i).end());
            q_.push_back(std::move(e));
        }
    }
    while (p_.size() > cap_p_) p_.pop_front();
    while (q_.size() > active_cap_q()) q_.pop_front();
}

Mat DualMemoryBank::stack(const std::deque<Entry>& entries, std::size_t cols, bool inputs) {
    Mat out(entries.size(), cols);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& src = inputs ? entries[i].input : entries[i].rep;
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

BankSnapshot DualMemoryBank::snapshot(std::size_t read_step) const {
    BankSnapshot s;
    s.queries = stack(q_, d_model_, false);
    s.passages = stack(p_, d_model_, false);
    for (const auto& e : q_) s.query_ages.push_back(read_step - e.born_step);
    for (const auto& e : p_) s.passage_ages.push_back(read_step - e.born_step);
    return s;
}

void DualMemoryBank::set_query_bank_enabled(bool enabled) {
    if (enabled) {
        if (!query_enabled_) throw StateError("query memory bank cannot be re-enabled");
        return;
    }
    if (cap_q_ == 0) return;
    query_enabled_ = false;
    q_.clear();
}

std::uint64_t DualMemoryBank::bytes() const noexcept {
    return static_cast<std::uint64_t>(q_.size() + p_.size()) * d_model_ * 4;
}

bool DualMemoryBank::has_inputs() const noexcept {
    auto stored = [](const std::deque<Entry>& d) {
        return std::all_of(d.begin(), d.end(), [](const Entry& e) { return !e.input.empty(); });
    };
    return stored(q_) && stored(p_);
}

Mat DualMemoryBank::stored_query_inputs() const {
    const std::size_t cols = q_.empty() ? 0 : q_.front().input.size();
    return stack(q_, cols, true);
}

Mat DualMemoryBank::stored_passage_inputs() const {
    const std::size_t cols = p_.empty() ? 0 : p_.front().input.size();
    return stack(p_, cols, true);
}

void DualMemoryBank::replace_representations(const Mat& q_reps, const Mat& p_reps) {
    if (q_reps.rows() != q_.size() || p_reps.rows() != p_.size()) {
        throw ShapeError("replace_representations: row counts do not match bank fill");
    }
    for (std::size_t i = 0; i < q_.size(); ++i) q_[i].rep.assign(q_reps.row(i).begin(), q_reps.row(i).end());
    for (std::size_t i = 0; i < p_.size(); ++i) p_[i].rep.assign(p_reps.row(i).begin(), p_reps.row(i).end());
}

std::uint64_t byte_usage(std::uint64_t n_memory, std::uint64_t d_model) {
    return n_memory * d_model * 2 * 4;
}

double bytes_to_gib(std::uint64_t bytes) { return static_cast<double>(bytes) / 1073741824.0; }

}  // namespace contaccum

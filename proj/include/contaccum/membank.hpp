// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Query/passage FIFO memory banks.
//
// Banked rows are plain values: nothing in the library can route a gradient
// into them. When both banks are active they have equal capacity and stay
// pair-aligned (row i of each was enqueued together), so a banked query's
// positive is the banked passage at the same position.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include "contaccum/numerics.hpp"

namespace contaccum {

struct BankSnapshot {
    Mat queries;   // oldest -> newest, 0 rows when empty or disabled
    Mat passages;  // oldest -> newest
    std::vector<std::size_t> query_ages;    // read_step - born_step
    std::vector<std::size_t> passage_ages;
};

class DualMemoryBank {
public:
    DualMemoryBank() = default;
    DualMemoryBank(std::size_t cap_q, std::size_t cap_p, std::size_t d_model);

    // Appends rows (oldest first) tagged with `step`, then evicts from the front
    // until both capacities hold. Queries are dropped when cap_q == 0 or the
    // query bank is disabled. Inputs are optional and only kept when given
    // for both sides; they let refresh() re-encode the bank.
    void enqueue_pairs(const Mat& q_reps, const Mat& p_reps, std::size_t step,
                       const Mat* q_inputs = nullptr, const Mat* p_inputs = nullptr);

    BankSnapshot snapshot(std::size_t read_step) const;

    // One-way switch: disabling drops the query side for good.
    void set_query_bank_enabled(bool enabled);
    bool query_bank_enabled() const noexcept { return query_enabled_; }

    std::size_t cap_q() const noexcept { return cap_q_; }
    std::size_t cap_p() const noexcept { return cap_p_; }
    std::size_t d_model() const noexcept { return d_model_; }
    std::size_t fill_q() const noexcept { return q_.size(); }
    std::size_t fill_p() const noexcept { return p_.size(); }
    // Effective query capacity (0 once disabled).
    std::size_t active_cap_q() const noexcept { return query_enabled_ ? cap_q_ : 0; }

    // Bytes held by the stored representations at 4 bytes per value.
    std::uint64_t bytes() const noexcept;

    bool has_inputs() const noexcept;
    Mat stored_query_inputs() const;
    Mat stored_passage_inputs() const;
    // Overwrites representations in place (same order and ages).
    void replace_representations(const Mat& q_reps, const Mat& p_reps);

private:
    struct Entry {
        std::vector<double> rep;
        std::vector<double> input;
        std::size_t born_step = 0;
    };

    static Mat stack(const std::deque<Entry>& entries, std::size_t cols, bool inputs);

    std::size_t cap_q_ = 0;
    std::size_t cap_p_ = 0;
    std::size_t d_model_ = 0;
    bool query_enabled_ = true;
    std::deque<Entry> q_;
    std::deque<Entry> p_;
};

// Theoretical bank footprint: n_memory * d_model * 2 banks * 4 bytes.
std::uint64_t byte_usage(std::uint64_t n_memory, std::uint64_t d_model);

// Bytes expressed in GiB (2^30), the unit the reference table uses.
double bytes_to_gib(std::uint64_t bytes);

}  // namespace contaccum

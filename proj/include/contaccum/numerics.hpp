// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices of doubles, the deterministic RNG, and the
// linear-algebra / probability kernels everything else is built from.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace contaccum {

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
    Mat(std::size_t rows, std::size_t cols, std::vector<double> values);
    // Row-literal constructor for tests and small fixtures.
    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Mat identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {values_.data() + r * cols_, cols_};
    }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    bool all_finite() const noexcept;
    std::string shape_str() const;

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

// mt19937_64 (bit-exact by the standard) with hand-rolled uniform/normal
// transforms; std::*_distribution output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    // Uniform integer in [0, n), unbiased; n > 0.
    std::uint64_t below(std::uint64_t n);
    // Standard normal via Box-Muller.
    double normal();

    // Independent stream keyed by (seed, stream) through splitmix64.
    Rng derive(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

// a (n x k) * b (k x m)
Mat matmul(const Mat& a, const Mat& b);
// a (n x k) * b^T, b is (m x k)
Mat matmul_nt(const Mat& a, const Mat& b);
// a^T * b, a is (k x n), b is (k x m)
Mat matmul_tn(const Mat& a, const Mat& b);

// Row-wise log softmax of m / tau, max-subtracted.
Mat row_log_softmax(const Mat& m, double tau);

// sqrt of the sum of squares over every entry of every matrix.
double global_l2_norm(std::span<const Mat> grads);

Mat gaussian(Rng& rng, std::size_t rows, std::size_t cols, double std);

// Row-stacking and slicing helpers used to assemble current+banked blocks.
Mat vstack(std::span<const Mat* const> parts, std::size_t cols);
Mat vstack(const Mat& top, const Mat& bottom);
Mat slice_rows(const Mat& m, std::size_t begin, std::size_t end);
Mat gather_rows(const Mat& m, std::span<const std::size_t> indices);
// Column sums as a 1 x cols matrix.
Mat col_sums(const Mat& m);

void add_inplace(Mat& dst, const Mat& src);
void scale_inplace(Mat& m, double alpha);

// max |a-b| / max(|b|_inf, floor); both shapes must match.
double max_rel_diff(const Mat& a, const Mat& b, double floor = 1e-300);

void require_finite(const Mat& m, const char* what);

}  // namespace contaccum

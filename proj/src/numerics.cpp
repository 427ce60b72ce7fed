// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "contaccum/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "contaccum/error.hpp"
#include "contaccum/kernels.hpp"

namespace contaccum {

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw ShapeError("Mat: " + std::to_string(values_.size()) + " values for shape " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(n * m);
    for (const auto& r : rows) {
        if (r.size() != m) throw ShapeError("Mat::from_rows: ragged rows");
        v.insert(v.end(), r.begin(), r.end());
    }
    return Mat(n, m, std::move(v));
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Mat::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

std::string Mat::shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection on the top of the range keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Rng Rng::derive(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x5bd1e995ULL)));
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ (" + a.shape_str() + " * " +
                         b.shape_str() + ")");
    }
    const auto& k = kernels::active();
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out = c.row(i).data();
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double s = a(i, j);
            if (s != 0.0) k.axpy(s, b.row(j).data(), out, b.cols());
        }
    }
    return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: widths differ (" + a.shape_str() + " * (" + b.shape_str() +
                         ")^T)");
    }
    const auto& k = kernels::active();
    Mat c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = k.dot(ai, b.row(j).data(), a.cols());
    }
    return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: row counts differ ((" + a.shape_str() + ")^T * " +
                         b.shape_str() + ")");
    }
    const auto& k = kernels::active();
    Mat c(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* br = b.row(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double s = a(r, i);
            if (s != 0.0) k.axpy(s, br, c.row(i).data(), b.cols());
        }
    }
    return c;
}

Mat row_log_softmax(const Mat& m, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw std::invalid_argument("row_log_softmax: tau must be positive and finite");
    }
    require_finite(m, "row_log_softmax input");
    Mat out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto in = m.row(r);
        auto dst = out.row(r);
        if (in.empty()) continue;
        double mx = in[0] / tau;
        for (double x : in) mx = std::max(mx, x / tau);
        double sum = 0.0;
        for (double x : in) sum += std::exp(x / tau - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t c = 0; c < in.size(); ++c) dst[c] = in[c] / tau - lse;
    }
    return out;
}

double global_l2_norm(std::span<const Mat> grads) {
    const auto& k = kernels::active();
    double acc = 0.0;
    for (const Mat& g : grads) acc += k.sum_sq(g.data(), g.size());
    return std::sqrt(acc);
}

Mat gaussian(Rng& rng, std::size_t rows, std::size_t cols, double std) {
    if (std < 0.0) throw std::invalid_argument("gaussian: std must be >= 0");
    Mat m(rows, cols);
    // Draw even when std == 0 so the stream position does not depend on std.
    for (double& x : m.values()) x = std * rng.normal();
    return m;
}

Mat vstack(std::span<const Mat* const> parts, std::size_t cols) {
    std::size_t rows = 0;
    for (const Mat* p : parts) {
        if (p->rows() == 0) continue;
        if (p->cols() != cols) {
            throw ShapeError("vstack: block of shape " + p->shape_str() + " in a stack of width " +
                             std::to_string(cols));
        }
        rows += p->rows();
    }
    std::vector<double> v;
    v.reserve(rows * cols);
    for (const Mat* p : parts) {
        if (p->rows() == 0) continue;
        v.insert(v.end(), p->values().begin(), p->values().end());
    }
    return Mat(rows, cols, std::move(v));
}

Mat vstack(const Mat& top, const Mat& bottom) {
    const std::size_t cols = top.rows() > 0 ? top.cols() : bottom.cols();
    const Mat* parts[] = {&top, &bottom};
    return vstack(parts, cols);
}

Mat slice_rows(const Mat& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.rows()) {
        throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + m.shape_str());
    }
    std::vector<double> v(m.data() + begin * m.cols(), m.data() + end * m.cols());
    return Mat(end - begin, m.cols(), std::move(v));
}

Mat gather_rows(const Mat& m, std::span<const std::size_t> indices) {
    Mat out(indices.size(), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= m.rows()) throw ShapeError("gather_rows: index out of range");
        std::copy(m.row(indices[i]).begin(), m.row(indices[i]).end(), out.row(i).begin());
    }
    return out;
}

Mat col_sums(const Mat& m) {
    Mat out(1, m.cols());
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < m.rows(); ++r) k.axpy(1.0, m.row(r).data(), out.data(), m.cols());
    return out;
}

void add_inplace(Mat& dst, const Mat& src) {
    if (dst.rows() != src.rows() || dst.cols() != src.cols()) {
        throw ShapeError("add_inplace: " + dst.shape_str() + " += " + src.shape_str());
    }
    kernels::active().axpy(1.0, src.data(), dst.data(), dst.size());
}

void scale_inplace(Mat& m, double alpha) { kernels::active().scale(alpha, m.data(), m.size()); }

double max_rel_diff(const Mat& a, const Mat& b, double floor) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("max_rel_diff: " + a.shape_str() + " vs " + b.shape_str());
    }
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a.data()[i] - b.data()[i]));
        scale = std::max(scale, std::abs(b.data()[i]));
    }
    return diff / std::max(scale, floor);
}

void require_finite(const Mat& m, const char* what) {
    if (!m.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace contaccum

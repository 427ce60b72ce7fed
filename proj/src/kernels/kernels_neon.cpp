// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// AArch64 NEON variant (float64x2). Only built on aarch64 hosts, where
// Advanced SIMD is architecturally guaranteed.

#include "kernels_variants.hpp"

#include <arm_neon.h>

namespace contaccum::kernels::detail {
namespace {

double neon_dot(const double* x, const double* y, std::size_t n) {
    std::size_t i = 0;
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    }
    double res = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) res += x[i] * y[i];
    return res;
}

void neon_axpy(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t a = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double neon_sum_sq(const double* x, std::size_t n) {
    std::size_t i = 0;
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    for (; i + 4 <= n; i += 4) {
        float64x2_t v0 = vld1q_f64(x + i);
        float64x2_t v1 = vld1q_f64(x + i + 2);
        acc0 = vfmaq_f64(acc0, v0, v0);
        acc1 = vfmaq_f64(acc1, v1, v1);
    }
    double res = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) res += x[i] * x[i];
    return res;
}

void neon_scale(double alpha, double* x, std::size_t n) {
    const float64x2_t a = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(a, vld1q_f64(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

}  // namespace

const KernelTable& neon_variant() {
    static const KernelTable table{Isa::kNeon, "neon", neon_dot, neon_axpy, neon_sum_sq,
                                   neon_scale};
    return table;
}

}  // namespace contaccum::kernels::detail

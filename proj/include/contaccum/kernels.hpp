// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Vector kernels behind every dense operation in the library.
//
// Each instruction set provides the same small table of double-precision
// primitives. The scalar table is the reference; wider variants must agree
// with it to rounding (tests/kernels_test.cpp). The active table is chosen
// once at startup from CPUID, and can be pinned with CONTACCUM_ISA=scalar|avx2|neon
// or from code with ScopedIsa.

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace contaccum::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
    Isa isa;
    const char* name;
    // sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum_i x[i]^2
    double (*sum_sq)(const double* x, std::size_t n);
    // x[i] *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();

const KernelTable* table_for(Isa isa);

// Best table supported by this CPU, honoring CONTACCUM_ISA.
const KernelTable& detect();

// Table used by the library right now.
const KernelTable& active();

// Every table usable on this machine, scalar first.
std::vector<const KernelTable*> available();

Isa parse_isa(std::string_view name);

// Pins the active table for the lifetime of the guard. Not thread-safe with
// concurrent kernel users; meant for tests and the CLI startup path.
class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa);
    ~ScopedIsa();
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    const KernelTable* previous_;
};

void set_active(const KernelTable& table);

}  // namespace contaccum::kernels

// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_variants.hpp"

namespace contaccum::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(CONTACCUM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{&detect()};
    return slot;
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(CONTACCUM_HAVE_AVX2)
    static const bool supported = cpu_has_avx2();
    return supported ? &detail::avx2_variant() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(CONTACCUM_HAVE_NEON)
    return &detail::neon_variant();
#else
    return nullptr;
#endif
}

const KernelTable* table_for(Isa isa) {
    switch (isa) {
        case Isa::kScalar: return &scalar_table();
        case Isa::kAvx2: return avx2_table();
        case Isa::kNeon: return neon_table();
    }
    return nullptr;
}

Isa parse_isa(std::string_view name) {
    if (name == "scalar") return Isa::kScalar;
    if (name == "avx2") return Isa::kAvx2;
    if (name == "neon") return Isa::kNeon;
    throw std::invalid_argument("unknown kernel ISA '" + std::string(name) +
                                "' (expected scalar, avx2 or neon)");
}

const KernelTable& detect() {
    if (const char* forced = std::getenv("CONTACCUM_ISA"); forced != nullptr && *forced != '\0') {
        const KernelTable* t = table_for(parse_isa(forced));
        if (t == nullptr) {
            throw std::runtime_error(std::string("CONTACCUM_ISA=") + forced +
                                     " is not available on this machine");
        }
        return *t;
    }
    if (const KernelTable* t = avx2_table()) return *t;
    if (const KernelTable* t = neon_table()) return *t;
    return scalar_table();
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_active(const KernelTable& table) {
    active_slot().store(&table, std::memory_order_relaxed);
}

std::vector<const KernelTable*> available() {
    std::vector<const KernelTable*> out{&scalar_table()};
    if (const KernelTable* t = avx2_table()) out.push_back(t);
    if (const KernelTable* t = neon_table()) out.push_back(t);
    return out;
}

ScopedIsa::ScopedIsa(Isa isa) : previous_(&active()) {
    const KernelTable* t = table_for(isa);
    if (t == nullptr) throw std::runtime_error("requested kernel ISA is not available");
    set_active(*t);
}

ScopedIsa::~ScopedIsa() { set_active(*previous_); }

}  // namespace contaccum::kernels

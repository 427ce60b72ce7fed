// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "contaccum/kernels.hpp"

namespace contaccum::kernels::detail {

#if defined(CONTACCUM_HAVE_AVX2)
const KernelTable& avx2_variant();
#endif

#if defined(CONTACCUM_HAVE_NEON)
const KernelTable& neon_variant();
#endif

}  // namespace contaccum::kernels::detail

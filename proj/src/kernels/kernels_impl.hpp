#pragma once

#include "dynfilt/kernels.hpp"

namespace dynfilt::kernels::detail {

extern const KernelTable kScalarTable;

#if defined(DYNFILT_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

}  // namespace dynfilt::kernels::detail

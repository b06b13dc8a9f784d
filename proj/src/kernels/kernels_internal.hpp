#pragma once

#include "mbfd/kernels.hpp"

namespace mbfd::kernels {

// exp() below this argument is flushed to zero by every kernel set so that the
// scalar and vector softmax agree on which entries vanish.
inline constexpr double kExpUnderflow = -708.0;
inline constexpr double kExpOverflow = 709.0;

#if defined(MBFD_HAVE_AVX2)
const KernelSet& avx2_kernels_impl();
#endif

}  // namespace mbfd::kernels

#include "kernels_internal.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace mbfd::kernels {
namespace {

const KernelSet* detect() {
    if (const char* env = std::getenv("MBFD_KERNELS")) {
        const std::string want(env);
        if (want == "scalar") return &scalar_kernels();
        if (want == "avx2" && avx2_kernels() != nullptr) return avx2_kernels();
    }
    if (const KernelSet* k = avx2_kernels()) return k;
    return &scalar_kernels();
}

std::atomic<const KernelSet*>& slot() {
    static std::atomic<const KernelSet*> current{detect()};
    return current;
}

}  // namespace

const KernelSet* avx2_kernels() {
#if defined(MBFD_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &avx2_kernels_impl() : nullptr;
#else
    return nullptr;
#endif
}

const KernelSet& active() { return *slot().load(std::memory_order_acquire); }

bool select(std::string_view name) {
    if (name == "scalar") {
        slot().store(&scalar_kernels(), std::memory_order_release);
        return true;
    }
    if (name == "avx2") {
        if (const KernelSet* k = avx2_kernels()) {
            slot().store(k, std::memory_order_release);
            return true;
        }
    }
    return false;
}

}  // namespace mbfd::kernels

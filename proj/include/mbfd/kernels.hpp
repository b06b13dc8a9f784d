#pragma once

// Data-parallel inner loops used by the feature extractor, the network layers
// and the distance-based classifiers. Every kernel has a portable scalar
// reference and (on x86-64) an AVX2+FMA variant; the active set is chosen once
// at startup from CPUID and can be pinned with MBFD_KERNELS=scalar|avx2.

#include <cstddef>
#include <string_view>

namespace mbfd::kernels {

enum class Trans { No, Yes };

struct KernelSet {
    const char* name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
    // x[i] = exp(x[i]); inputs below -708 flush to 0.
    void (*exp_inplace)(double* x, std::size_t n);
    // Row-major C = alpha * op(A) * op(B) + beta * C, op(A) is m x k, op(B) is k x n.
    void (*gemm)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                 double* c, std::size_t ldc);
};

const KernelSet& scalar_kernels();
// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelSet* avx2_kernels();

// The dispatched set. Selected on first use.
const KernelSet& active();
// Force a specific set ("scalar" or "avx2"); returns false if unavailable.
bool select(std::string_view name);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline double squared_distance(const double* a, const double* b, std::size_t n) {
    return active().squared_distance(a, b, n);
}
inline void exp_inplace(double* x, std::size_t n) { active().exp_inplace(x, n); }
inline void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                 double* c, std::size_t ldc) {
    active().gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace mbfd::kernels

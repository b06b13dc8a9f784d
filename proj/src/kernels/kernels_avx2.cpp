// Compiled with -mavx2 -mfma; only reached after a CPUID check in dispatch.cpp.
#include "kernels_internal.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace mbfd::kernels {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
        s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
        s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
    }
    for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4,
                         _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double sqdist_avx2(const double* a, const double* b, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
        s0 = _mm256_fmadd_pd(d0, d0, s0);
        s1 = _mm256_fmadd_pd(d1, d1, s1);
    }
    for (; i + 4 <= n; i += 4) {
        const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        s0 = _mm256_fmadd_pd(d0, d0, s0);
    }
    double s = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// exp(x) = 2^k * exp(r), r = x - k ln2, |r| <= ln2/2; exp(r) by a degree-13
// Taylor polynomial (truncation error < 1e-17 on that interval).
inline __m256d exp4(__m256d x) {
    const __m256d lo = _mm256_set1_pd(kExpUnderflow);
    const __m256d under = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
    x = _mm256_min_pd(_mm256_max_pd(x, lo), _mm256_set1_pd(kExpOverflow));

    const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(6.93147180369123816490e-01), x);
    r = _mm256_fnmadd_pd(k, _mm256_set1_pd(1.90821492927058770002e-10), r);

    static constexpr double c[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                                   1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                                   1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                                   1.0 / 24.0,         1.0 / 6.0,         0.5,
                                   1.0,                1.0};
    __m256d p = _mm256_set1_pd(c[0]);
    for (int i = 1; i < 14; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));

    // 2^k via the exponent field; k is integral and within [-1022, 1023].
    const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51
    const __m256i ki = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(k, magic)),
                                        _mm256_castpd_si256(magic));
    const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ki, _mm256_set1_epi64x(1023)), 52);
    const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
    return _mm256_andnot_pd(under, result);
}

void exp_avx2(double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, exp4(_mm256_loadu_pd(x + i)));
    if (i < n) {
        double tail[4] = {0.0, 0.0, 0.0, 0.0};
        std::copy(x + i, x + n, tail);
        _mm256_storeu_pd(tail, exp4(_mm256_loadu_pd(tail)));
        std::copy(tail, tail + (n - i), x + i);
    }
}

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 128;
constexpr std::size_t kNc = 2048;

// acc(4x8) = Ap(kc x 4)^T-panel * Bp(kc x 8)-panel, added into C.
inline void micro_4x8(std::size_t kc, const double* ap, const double* bp, double* c, std::size_t ldc,
                      std::size_t mr, std::size_t nr) {
    __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
    __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
    __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
    __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
    for (std::size_t p = 0; p < kc; ++p) {
        const __m256d b0 = _mm256_loadu_pd(bp + p * kNr);
        const __m256d b1 = _mm256_loadu_pd(bp + p * kNr + 4);
        const double* a = ap + p * kMr;
        __m256d av = _mm256_broadcast_sd(a);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a + 1);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a + 2);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a + 3);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
    }
    if (mr == kMr && nr == kNr) {
        auto add = [&](double* dst, __m256d lo, __m256d hi) {
            _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), lo));
            _mm256_storeu_pd(dst + 4, _mm256_add_pd(_mm256_loadu_pd(dst + 4), hi));
        };
        add(c, c00, c01);
        add(c + ldc, c10, c11);
        add(c + 2 * ldc, c20, c21);
        add(c + 3 * ldc, c30, c31);
        return;
    }
    alignas(32) double tmp[kMr * kNr];
    _mm256_store_pd(tmp, c00);
    _mm256_store_pd(tmp + 4, c01);
    _mm256_store_pd(tmp + 8, c10);
    _mm256_store_pd(tmp + 12, c11);
    _mm256_store_pd(tmp + 16, c20);
    _mm256_store_pd(tmp + 20, c21);
    _mm256_store_pd(tmp + 24, c30);
    _mm256_store_pd(tmp + 28, c31);
    for (std::size_t i = 0; i < mr; ++i)
        for (std::size_t j = 0; j < nr; ++j) c[i * ldc + j] += tmp[i * kNr + j];
}

void gemm_avx2(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
               const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
               double* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        double* row = c + i * ldc;
        if (beta == 0.0)
            std::fill(row, row + n, 0.0);
        else if (beta != 1.0)
            for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
    if (m == 0 || n == 0 || k == 0) return;

    thread_local std::vector<double> apack, bpack;
    auto a_at = [&](std::size_t i, std::size_t p) { return ta == Trans::No ? a[i * lda + p] : a[p * lda + i]; };

    for (std::size_t jc = 0; jc < n; jc += kNc) {
        const std::size_t nc = std::min(kNc, n - jc);
        const std::size_t npanels = (nc + kNr - 1) / kNr;
        for (std::size_t pc = 0; pc < k; pc += kKc) {
            const std::size_t kc = std::min(kKc, k - pc);
            bpack.assign(npanels * kc * kNr, 0.0);
            for (std::size_t jp = 0; jp < npanels; ++jp) {
                double* dst = bpack.data() + jp * kc * kNr;
                const std::size_t j0 = jc + jp * kNr;
                const std::size_t nr = std::min(kNr, n - j0);
                if (tb == Trans::No) {
                    for (std::size_t p = 0; p < kc; ++p) {
                        const double* src = b + (pc + p) * ldb + j0;
                        for (std::size_t j = 0; j < nr; ++j) dst[p * kNr + j] = src[j];
                    }
                } else {
                    for (std::size_t j = 0; j < nr; ++j) {
                        const double* src = b + (j0 + j) * ldb + pc;
                        for (std::size_t p = 0; p < kc; ++p) dst[p * kNr + j] = src[p];
                    }
                }
            }
            for (std::size_t ic = 0; ic < m; ic += kMc) {
                const std::size_t mc = std::min(kMc, m - ic);
                const std::size_t mpanels = (mc + kMr - 1) / kMr;
                apack.assign(mpanels * kc * kMr, 0.0);
                for (std::size_t ip = 0; ip < mpanels; ++ip) {
                    double* dst = apack.data() + ip * kc * kMr;
                    const std::size_t i0 = ic + ip * kMr;
                    const std::size_t mr = std::min(kMr, m - i0);
                    for (std::size_t i = 0; i < mr; ++i)
                        for (std::size_t p = 0; p < kc; ++p) dst[p * kMr + i] = alpha * a_at(i0 + i, pc + p);
                }
                for (std::size_t jp = 0; jp < npanels; ++jp) {
                    const std::size_t j0 = jc + jp * kNr;
                    const std::size_t nr = std::min(kNr, n - j0);
                    for (std::size_t ip = 0; ip < mpanels; ++ip) {
                        const std::size_t i0 = ic + ip * kMr;
                        const std::size_t mr = std::min(kMr, m - i0);
                        micro_4x8(kc, apack.data() + ip * kc * kMr, bpack.data() + jp * kc * kNr,
                                  c + i0 * ldc + j0, ldc, mr, nr);
                    }
                }
            }
        }
    }
}

const KernelSet kAvx2{"avx2", dot_avx2, axpy_avx2, sqdist_avx2, exp_avx2, gemm_avx2};

}  // namespace

const KernelSet& avx2_kernels_impl() { return kAvx2; }

}  // namespace mbfd::kernels

// Compiled with -mavx2 -mfma; only reached through the runtime dispatch in simd_scalar.cpp.
#include <immintrin.h>

#include <cmath>

#include "hsboltz/simd.hpp"

namespace hsboltz::simd {

namespace {

void gain_avx2(double* acc, const double* A, const double* B, std::size_t ld, const Stencil8& a,
               const Stencil8& b, double c, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t x = 0;
    for (; x + 4 <= n; x += 4) {
        __m256d fa = _mm256_mul_pd(_mm256_set1_pd(a.w[0]), _mm256_loadu_pd(A + a.idx[0] * ld + x));
        __m256d fb = _mm256_mul_pd(_mm256_set1_pd(b.w[0]), _mm256_loadu_pd(B + b.idx[0] * ld + x));
        for (int q = 1; q < 8; ++q) {
            fa = _mm256_fmadd_pd(_mm256_set1_pd(a.w[q]), _mm256_loadu_pd(A + a.idx[q] * ld + x), fa);
            fb = _mm256_fmadd_pd(_mm256_set1_pd(b.w[q]), _mm256_loadu_pd(B + b.idx[q] * ld + x), fb);
        }
        __m256d prod = _mm256_mul_pd(_mm256_mul_pd(vc, fa), fb);
        _mm256_storeu_pd(acc + x, _mm256_add_pd(_mm256_loadu_pd(acc + x), prod));
    }
    // Tail mirrors the lane arithmetic exactly so results do not depend on where a chunk starts.
    for (; x < n; ++x) {
        double fa = a.w[0] * A[a.idx[0] * ld + x];
        double fb = b.w[0] * B[b.idx[0] * ld + x];
        for (int q = 1; q < 8; ++q) {
            fa = std::fma(a.w[q], A[a.idx[q] * ld + x], fa);
            fb = std::fma(b.w[q], B[b.idx[q] * ld + x], fb);
        }
        acc[x] += (c * fa) * fb;
    }
}

void pair_avx2(double* outA, double* outB, const double* F, std::size_t ld, const Stencil8& a, const Stencil8& b,
               double cA, double cB, std::size_t n) {
    const __m256d va = _mm256_set1_pd(cA), vb = _mm256_set1_pd(cB);
    std::size_t x = 0;
    for (; x + 4 <= n; x += 4) {
        __m256d fa = _mm256_mul_pd(_mm256_set1_pd(a.w[0]), _mm256_loadu_pd(F + a.idx[0] * ld + x));
        __m256d fb = _mm256_mul_pd(_mm256_set1_pd(b.w[0]), _mm256_loadu_pd(F + b.idx[0] * ld + x));
        for (int q = 1; q < 8; ++q) {
            fa = _mm256_fmadd_pd(_mm256_set1_pd(a.w[q]), _mm256_loadu_pd(F + a.idx[q] * ld + x), fa);
            fb = _mm256_fmadd_pd(_mm256_set1_pd(b.w[q]), _mm256_loadu_pd(F + b.idx[q] * ld + x), fb);
        }
        __m256d p = _mm256_mul_pd(fa, fb);
        _mm256_storeu_pd(outA + x, _mm256_add_pd(_mm256_loadu_pd(outA + x), _mm256_mul_pd(va, p)));
        _mm256_storeu_pd(outB + x, _mm256_add_pd(_mm256_loadu_pd(outB + x), _mm256_mul_pd(vb, p)));
    }
    for (; x < n; ++x) {
        double fa = a.w[0] * F[a.idx[0] * ld + x];
        double fb = b.w[0] * F[b.idx[0] * ld + x];
        for (int q = 1; q < 8; ++q) {
            fa = std::fma(a.w[q], F[a.idx[q] * ld + x], fa);
            fb = std::fma(b.w[q], F[b.idx[q] * ld + x], fb);
        }
        double p = fa * fb;
        outA[x] += cA * p;
        outB[x] += cB * p;
    }
}

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

// Two complex numbers per register: (re0, im0, re1, im1).
double weighted_norm2_avx2(const double* w, const std::complex<double>* z, std::size_t n) {
    const double* p = reinterpret_cast<const double*>(z);
    __m256d s = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 2 <= n; k += 2) {
        __m256d v = _mm256_loadu_pd(p + 2 * k);
        __m256d ww = _mm256_set_pd(w[k + 1], w[k + 1], w[k], w[k]);
        s = _mm256_fmadd_pd(_mm256_mul_pd(ww, v), v, s);
    }
    double r = hsum(s);
    for (; k < n; ++k) r += w[k] * std::norm(z[k]);
    return r;
}

double norm2_avx2(const std::complex<double>* z, std::size_t n) {
    const double* p = reinterpret_cast<const double*>(z);
    __m256d s = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 2 <= n; k += 2) {
        __m256d v = _mm256_loadu_pd(p + 2 * k);
        s = _mm256_fmadd_pd(v, v, s);
    }
    double r = hsum(s);
    for (; k < n; ++k) r += std::norm(z[k]);
    return r;
}

}  // namespace

const Kernels& avx2_kernels() {
    static const Kernels k{gain_avx2, pair_avx2, weighted_norm2_avx2, norm2_avx2, "avx2"};
    return k;
}

}  // namespace hsboltz::simd

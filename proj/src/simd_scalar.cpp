#include <cstdlib>
#include <cstring>

#include "hsboltz/simd.hpp"

namespace hsboltz::simd {

namespace {

void gain_scalar(double* acc, const double* A, const double* B, std::size_t ld, const Stencil8& a,
                 const Stencil8& b, double c, std::size_t n) {
    for (std::size_t x = 0; x < n; ++x) {
        double fa = 0.0, fb = 0.0;
        for (int q = 0; q < 8; ++q) {
            fa += a.w[q] * A[a.idx[q] * ld + x];
            fb += b.w[q] * B[b.idx[q] * ld + x];
        }
        acc[x] += c * fa * fb;
    }
}

void pair_scalar(double* outA, double* outB, const double* F, std::size_t ld, const Stencil8& a, const Stencil8& b,
                 double cA, double cB, std::size_t n) {
    for (std::size_t x = 0; x < n; ++x) {
        double fa = 0.0, fb = 0.0;
        for (int q = 0; q < 8; ++q) {
            fa += a.w[q] * F[a.idx[q] * ld + x];
            fb += b.w[q] * F[b.idx[q] * ld + x];
        }
        double p = fa * fb;
        outA[x] += cA * p;
        outB[x] += cB * p;
    }
}

double weighted_norm2_scalar(const double* w, const std::complex<double>* z, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += w[k] * std::norm(z[k]);
    return s;
}

double norm2_scalar(const std::complex<double>* z, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += std::norm(z[k]);
    return s;
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels k{gain_scalar, pair_scalar, weighted_norm2_scalar, norm2_scalar, "scalar"};
    return k;
}

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Kernels& active() {
    static const Kernels& chosen = [] () -> const Kernels& {
        const char* env = std::getenv("HSBOLTZ_SIMD");
        if (env && std::strcmp(env, "scalar") == 0) return scalar_kernels();
        if (avx2_available()) return avx2_kernels();
        return scalar_kernels();
    }();
    return chosen;
}

}  // namespace hsboltz::simd

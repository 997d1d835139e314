#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>

namespace hsboltz::simd {

/// Trilinear interpolation stencil: eight node rows and their weights.
struct Stencil8 {
    std::uint32_t idx[8];
    double w[8];
};

/// acc[x] += c * (sum_a a.w * A[a.idx * ld + x]) * (sum_b b.w * B[b.idx * ld + x]) for x < n.
using GainFn = void (*)(double* acc, const double* A, const double* B, std::size_t ld,
                        const Stencil8& a, const Stencil8& b, double c, std::size_t n);

/// p[x] = (sum_a a.w * F[a.idx * ld + x]) * (sum_b b.w * F[b.idx * ld + x]);
/// outA[x] += cA * p[x]; outB[x] += cB * p[x] for x < n.
using PairFn = void (*)(double* outA, double* outB, const double* F, std::size_t ld, const Stencil8& a,
                        const Stencil8& b, double cA, double cB, std::size_t n);

/// Returns sum_k w[k] * |z[k]|^2.
using WeightedNormFn = double (*)(const double* w, const std::complex<double>* z, std::size_t n);

/// Returns sum_k |z[k]|^2.
using Norm2Fn = double (*)(const std::complex<double>* z, std::size_t n);

struct Kernels {
    GainFn gain_accumulate;
    PairFn pair_accumulate;
    WeightedNormFn weighted_norm2;
    Norm2Fn norm2;
    const char* name;
};

const Kernels& scalar_kernels();
/// AVX2+FMA kernels; only call when avx2_available() is true.
const Kernels& avx2_kernels();
bool avx2_available();

/// Kernel table picked once at startup: AVX2 when the CPU has it, unless
/// HSBOLTZ_SIMD=scalar is set in the environment.
const Kernels& active();

}  // namespace hsboltz::simd

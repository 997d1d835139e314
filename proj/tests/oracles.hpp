#pragma once

#include <algorithm>
#include <cmath>

#include "hsboltz/fourier_lp.hpp"
#include "hsboltz/rng.hpp"
#include "hsboltz/velocity_space.hpp"

namespace hsboltz::testing {

/// Naive hard-sphere quadrature written from the definition, node by node:
/// Q(F,G)(v) = sum_{v*} h^3 sum_w W_w B(u,w) [F~(v') G~(v*') - F(v) G(v*)], B = |u.w| * 2 pi / sum_w W_w |u^.w|,
/// with F~(p) = M(p) I[F/sqrt M](p) / I[sqrt M](p) and I the trilinear interpolant (clamped to the hull).
struct NaiveQuadrature {
    const VelocityGrid& g;

    double interp(const VelocityFunction& f, const Vec3& p) const {
        const int n = g.nodes_per_axis();
        const double h = g.spacing(), R = g.extent();
        int i0[3];
        double t[3];
        for (int a = 0; a < 3; ++a) {
            double x = (p[a] + R) / h - 0.5;
            int i = std::min(std::max(static_cast<int>(std::floor(x)), 0), n - 2);
            i0[a] = i;
            t[a] = std::min(std::max(x - i, 0.0), 1.0);
        }
        double s = 0;
        for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj)
                for (int dk = 0; dk < 2; ++dk) {
                    const double w = (di ? t[0] : 1 - t[0]) * (dj ? t[1] : 1 - t[1]) * (dk ? t[2] : 1 - t[2]);
                    s += w * f[static_cast<Eigen::Index>(g.index(i0[0] + di, i0[1] + dj, i0[2] + dk))];
                }
        return s;
    }

    VelocityFunction Q(const VelocityFunction& F, const VelocityFunction& G) const {
        const std::size_t n = g.size();
        VelocityFunction sM(n), Fs(n), Gs(n);
        for (std::size_t k = 0; k < n; ++k) {
            sM[k] = std::sqrt(maxwellian(g.node(k)));
            Fs[k] = F[k] / sM[k];
            Gs[k] = G[k] / sM[k];
        }
        auto tilde = [&](const VelocityFunction& fs, const Vec3& p) {
            return maxwellian(p) * interp(fs, p) / interp(sM, p);
        };
        const AngularRule& half = g.half_sphere();
        VelocityFunction out = VelocityFunction::Zero(n);
        for (std::size_t a = 0; a < n; ++a) {
            const Vec3 v = g.node(a);
            for (std::size_t b = 0; b < n; ++b) {
                if (a == b) continue;
                const Vec3 w = g.node(b);
                const Vec3 u{v[0] - w[0], v[1] - w[1], v[2] - w[2]};
                const double un = norm(u);
                double denom = 0;
                for (std::size_t m = 0; m < half.dirs.size(); ++m)
                    denom += half.weights[m] * std::abs(dot(u, half.dirs[m])) / un;
                for (std::size_t m = 0; m < half.dirs.size(); ++m) {
                    const Vec3& om = half.dirs[m];
                    const double uw = dot(u, om);
                    const double B = std::abs(uw) * 2 * M_PI / denom;
                    const Vec3 vp{v[0] - uw * om[0], v[1] - uw * om[1], v[2] - uw * om[2]};
                    const Vec3 wp{w[0] + uw * om[0], w[1] + uw * om[1], w[2] + uw * om[2]};
                    out[a] += g.weight() * half.weights[m] * B * (tilde(Fs, vp) * tilde(Gs, wp) - F[a] * G[b]);
                }
            }
        }
        return out;
    }
};

/// Real random field with coefficients supported on |k_i| <= k_max.
inline SpatialSpectrum random_field(const SpectralGrid& g, std::uint64_t seed, int k_max = 1 << 20) {
    CounterRng rng(seed, 3);
    Eigen::VectorXcd x(static_cast<Eigen::Index>(g.size()));
    for (Eigen::Index p = 0; p < x.size(); ++p) x[p] = rng.normal();
    SpatialSpectrum s = SpatialSpectrum::from_physical(g, x);
    for (std::size_t m = 0; m < g.size(); ++m) {
        auto k = g.wavenumbers(m);
        if (std::abs(k[0]) > k_max || std::abs(k[1]) > k_max || std::abs(k[2]) > k_max) s.coeffs[static_cast<Eigen::Index>(m)] = 0;
    }
    s.coeffs[0] = 0;
    return s;
}

inline double l2(const SpatialSpectrum& s) { return std::sqrt(s.grid.volume() * s.coeffs.squaredNorm()); }

/// Slow-path block norm ||Delta_j g||: explicit multiplier loop.
inline double block_l2(const SpectralGrid& g, const Eigen::VectorXcd& c, int j) {
    double acc = 0;
    for (std::size_t m = 0; m < g.size(); ++m) {
        const double r = g.xi_abs(m);
        if (r == 0) continue;
        const double p = DyadicFilter::phi(std::ldexp(r, -j));
        acc += p * p * std::norm(c[static_cast<Eigen::Index>(m)]);
    }
    return std::sqrt(g.volume() * acc);
}

}  // namespace hsboltz::testing

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hsboltz/simd.hpp"

namespace hsboltz {

using Vec3 = std::array<double, 3>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
/// Japanese bracket <v> = sqrt(1+|v|^2).
inline double bracket(const Vec3& v) { return std::sqrt(1.0 + dot(v, v)); }

/// Values over velocity nodes (one spatial point or one Fourier mode).
using VelocityFunction = Eigen::VectorXd;

/// Symmetric quadrature rule on S^2; weights sum to 4*pi.
struct AngularRule {
    std::vector<Vec3> dirs;
    std::vector<double> weights;
    int degree = 0;
};

/// Lebedev rule with 6, 14, 26, 38 or 50 points.
AngularRule lebedev_rule(int n_points);

/// Truncated uniform lattice on [-R,R]^3 with cell-centred nodes.
class VelocityGrid {
public:
    static VelocityGrid build(double R, int n_v, int n_angular);

    double extent() const { return R_; }
    int nodes_per_axis() const { return n_v_; }
    double spacing() const { return h_; }
    std::size_t size() const { return nodes_.size(); }
    /// Quadrature weight of every node (uniform).
    double weight() const { return h_ * h_ * h_; }
    const Vec3& node(std::size_t k) const { return nodes_[k]; }
    const std::vector<Vec3>& nodes() const { return nodes_; }
    double axis_coord(int i) const { return -R_ + (i + 0.5) * h_; }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * n_v_ + j) * n_v_ + k;
    }
    /// Index of the node at -v.
    std::size_t mirror(std::size_t k) const;
    const AngularRule& sphere() const { return sphere_; }
    /// Half of the centrally symmetric angular rule with doubled weights.
    const AngularRule& half_sphere() const { return half_; }
    int n_angular() const { return static_cast<int>(sphere_.dirs.size()); }

    /// Trilinear stencil at an arbitrary point, clamped to the node hull.
    simd::Stencil8 stencil(const Vec3& p) const;

    /// Angular normalisation 2*pi / sum_m W_m |uhat . w_m| (see collision kernel).
    double angular_normalisation(const Vec3& u_hat) const;

    /// Inner product <g,h> under the grid quadrature.
    double inner(const VelocityFunction& g, const VelocityFunction& h) const { return weight() * g.dot(h); }

private:
    double R_ = 0, h_ = 0;
    int n_v_ = 0;
    std::vector<Vec3> nodes_;
    AngularRule sphere_, half_;
};

/// Normalised global Maxwellian (2 pi)^{-3/2} exp(-|v|^2/2).
double maxwellian(const Vec3& v);

/// Hard-sphere collision frequency at an arbitrary velocity by grid quadrature.
double collision_frequency(const Vec3& v, const VelocityGrid& grid);

/// Gaussian mass outside the cube [-R,R]^3.
double gaussian_tail_mass(double R);

struct MaxwellianTable {
    VelocityFunction M, sqrtM, nu;
    double mass = 0;      ///< sum_k w M_k
    double tail_mass = 0; ///< eps_R
    double c1 = 0, c2 = 0;  ///< min / max of nu / <v>

    static MaxwellianTable build(const VelocityGrid& grid);
};

/// Orthonormal basis of span{1, v1, v2, v3, |v|^2} sqrt(M) under grid quadrature.
struct NullBasis {
    std::array<VelocityFunction, 5> e;
    double gram_condition = 0;

    /// Coefficients <e_i, g>.
    Eigen::Matrix<double, 5, 1> coefficients(const VelocityGrid& grid, const VelocityFunction& g) const;
    VelocityFunction project(const VelocityGrid& grid, const VelocityFunction& g) const;
};

NullBasis build_null_basis(const VelocityGrid& grid, const MaxwellianTable& mt);

/// Grid, Maxwellian tables and null basis bundled; immutable and shared between operators.
struct VelocitySpace {
    VelocityGrid grid;
    MaxwellianTable mt;
    NullBasis nb;

    /// Builds (or loads the Maxwellian tables from cache_dir when non-empty).
    static std::shared_ptr<const VelocitySpace> make(double R, int n_v, int n_angular,
                                                     const std::string& cache_dir = "");
    std::size_t size() const { return grid.size(); }
};

/// First derivative along one velocity axis: 4th-order centred differences in the interior,
/// 2nd-order centred one node in from the boundary and 2nd-order one-sided on the boundary.
/// Acts on every column of a (n_vel x n_cols) column-major array.
class VelocityDerivative {
public:
    explicit VelocityDerivative(const VelocityGrid& grid) : n_v_(grid.nodes_per_axis()), h_(grid.spacing()) {}

    template <class T>
    void apply(int axis, const T* in, T* out, std::size_t n_cols) const;

    int nodes_per_axis() const { return n_v_; }

private:
    int n_v_;
    double h_;
};

template <class T>
void VelocityDerivative::apply(int axis, const T* in, T* out, std::size_t n_cols) const {
    const std::size_t n = n_v_;
    const std::size_t nvel = n * n * n;
    const std::size_t stride = axis == 0 ? n * n : (axis == 1 ? n : 1);
    const double c1 = 8.0 / (12.0 * h_), c2 = 1.0 / (12.0 * h_), e1 = 1.0 / (2.0 * h_);
    for (std::size_t col = 0; col < n_cols; ++col) {
        const T* g = in + col * nvel;
        T* o = out + col * nvel;
        for (std::size_t k = 0; k < nvel; ++k) {
            std::size_t i = (k / stride) % n;
            if (i >= 2 && i + 2 < n) {
                o[k] = c1 * (g[k + stride] - g[k - stride]) - c2 * (g[k + 2 * stride] - g[k - 2 * stride]);
            } else if (i == 0) {
                o[k] = e1 * (-3.0 * g[k] + 4.0 * g[k + stride] - g[k + 2 * stride]);
            } else if (i + 1 == n) {
                o[k] = e1 * (3.0 * g[k] - 4.0 * g[k - stride] + g[k - 2 * stride]);
            } else {
                o[k] = e1 * (g[k + stride] - g[k - stride]);
            }
        }
    }
}

/// Binary cache for velocity tables keyed by (R, n_v, n_angular).
void save_velocity_cache(const std::string& path, const VelocityGrid& grid, const MaxwellianTable& mt);
/// Loads the table if the header matches, otherwise returns false.
bool load_velocity_cache(const std::string& path, const VelocityGrid& grid, MaxwellianTable& mt);
std::string velocity_cache_name(double R, int n_v, int n_angular);

}  // namespace hsboltz

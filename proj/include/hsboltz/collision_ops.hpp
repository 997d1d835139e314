#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "hsboltz/errors.hpp"
#include "hsboltz/velocity_space.hpp"

namespace hsboltz {

/// Five moment coefficients of Pg in the orthonormal null basis (a, b1..b3, c).
struct MacroState {
    double a = 0;
    Vec3 b{0, 0, 0};
    double c = 0;
};

/// Discrete hard-sphere collision quadrature on a velocity lattice.
///
/// Gain terms use Maxwell-renormalised trilinear interpolation J[g](p) = s(p) sum_q w_q g_q
/// with s(p) = sqrt(M(p)) / sum_q w_q sqrt(M_q), which is exact for g = sqrt(M), together
/// with the identity M(v')M(v*') = M(v)M(v*); Q(M,M) then vanishes to roundoff. The angular
/// rule is renormalised per relative velocity so sum_w B(u,w) = 2 pi |u|.
class CollisionOperator {
public:
    explicit CollisionOperator(std::shared_ptr<const VelocitySpace> vs, Budget budget = {});

    const VelocitySpace& space() const { return *vs_; }
    std::shared_ptr<const VelocitySpace> space_ptr() const { return vs_; }

    /// Unprojected quadrature of Q(F,G).
    VelocityFunction q_raw(const VelocityFunction& F, const VelocityFunction& G) const;
    /// Conservative Q: sqrt(M) (I-P) (Q_raw / sqrt(M)).
    VelocityFunction q_bilinear(const VelocityFunction& F, const VelocityFunction& G) const;

    /// Unprojected Gamma(g1,g2) = M^{-1/2} Q_raw(sqrt(M) g1, sqrt(M) g2).
    VelocityFunction gamma_raw(const VelocityFunction& g1, const VelocityFunction& g2) const;
    /// (I-P) Gamma_raw, so P Gamma = 0.
    VelocityFunction gamma(const VelocityFunction& g1, const VelocityFunction& g2) const;

    /// Gamma_raw at n_pts independent points. Inputs/outputs are node-major: value of node k
    /// at point x sits at [k * n_pts + x]. Parallel over points; each output value is
    /// computed by one worker in a fixed order, so results do not depend on the worker count.
    void gamma_raw_batch(const double* g1, const double* g2, double* out, std::size_t n_pts,
                         std::size_t workers) const;
    /// Gamma_raw(f,f) at n_pts points; with the collision table this evaluates each
    /// post-collision product once for the (v,v*) and (v*,v) collisions.
    void gamma_raw_sym_batch(const double* f, double* out, std::size_t n_pts, std::size_t workers) const;

    /// Dense K2 (gain part of the linearisation), unsymmetrised.
    Eigen::MatrixXd assemble_k2_raw(std::size_t workers) const;
    /// Dense K1 (symmetric loss kernel sqrt(M) sqrt(M*) 2 pi |v - v*| h^3).
    Eigen::MatrixXd assemble_k1() const;

    /// Precomputes collision geometry for repeated batched Gamma evaluation when it fits in
    /// max_bytes; returns whether the table is active.
    bool build_collision_table(double max_bytes);
    bool has_collision_table() const { return !table_.empty(); }

    /// Matrix-free L_raw g = nu g + K1 g - K2 g.
    VelocityFunction apply_l_raw(const VelocityFunction& g) const;
    /// Matrix-free L_raw^T g.
    VelocityFunction apply_l_raw_transpose(const VelocityFunction& g) const;
    /// Matrix-free symmetrised, projected L.
    VelocityFunction apply_l(const VelocityFunction& g) const;

    /// Enumerates the collisions of row a: fn(b, coef, J-stencil(v'), J-stencil(v*'),
    /// sqrt(M(v')), sqrt(M(v*'))) with coef = h^3 W_w B(u,w) (no Maxwellian factors).
    template <class Fn>
    void for_each_collision(std::size_t a, Fn&& fn) const;

private:
    std::shared_ptr<const VelocitySpace> vs_;
    VelocityFunction inv_sqrtM_;
    Budget budget_;

    /// Unordered collision pair a < b with one angular node; row b uses the swapped points.
    struct TableEntry {
        std::uint32_t b, base1, base2;
        double f1[3], f2[3];
        double cA;  ///< h^3 W B sqrt(M(v_b)) s(v') s(v*') for row a
        double cB;  ///< same with sqrt(M(v_a)) for row b
    };
    void batch_chunk(const double* g1, const double* g2, double* out, std::size_t n_pts, std::size_t x0,
                     std::size_t x1, bool symmetric) const;
    void batch_chunk_direct(const double* g1, const double* g2, double* out, std::size_t n_pts, std::size_t x0,
                            std::size_t x1) const;
    std::vector<TableEntry> table_;
    std::vector<std::size_t> row_start_;
    Eigen::MatrixXd loss_kernel_;  ///< h^3 2 pi |v - v*| sqrt(M(v*)), built with the table

    /// Maxwell-renormalised stencil at p; returns sqrt(M(p)).
    double j_stencil(const Vec3& p, simd::Stencil8& s) const;
};

/// Linearised collision operator L = nu - K with projector P.
struct LinearizedOperator {
    std::shared_ptr<const VelocitySpace> vs;
    Eigen::MatrixXd L;  ///< symmetrised, (I-P) L_raw_sym (I-P)
    Eigen::MatrixXd K;  ///< diag(nu) - L
    Eigen::MatrixXd P;  ///< rank-5 orthogonal projector onto the null space
    VelocityFunction nu;
    double raw_asymmetry = 0;  ///< ||L_raw - L_raw^T||_F / ||L_raw||_F before symmetrisation

    std::size_t size() const { return static_cast<std::size_t>(L.rows()); }
    VelocityFunction apply(const VelocityFunction& g) const { return L * g; }
    /// All eigenvalues, ascending.
    Eigen::VectorXd eigenvalues() const;
};

LinearizedOperator assemble_L(const CollisionOperator& op, std::size_t workers = 1);

/// Macro coefficients and micro remainder; g = Pg + (I-P)g.
std::pair<MacroState, VelocityFunction> project_P(const VelocitySpace& vs, const VelocityFunction& g);
VelocityFunction macro_part(const VelocitySpace& vs, const VelocityFunction& g);

/// kappa0 = min over micro h of <Lh,h>/|h|_nu^2 (generalised eigenproblem restricted to (I-P)).
double estimate_kappa0(const LinearizedOperator& L);

/// Same quantity from the matrix-free operator via Lanczos with full reorthogonalisation.
double estimate_kappa0_iterative(const CollisionOperator& op, int max_iter = 120, double tol = 1e-8);

/// Symmetric eigenvalues (ascending) of a dense matrix via LAPACK.
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& A);
/// Eigenvalues il..iu (1-based, ascending) of a dense symmetric matrix.
Eigen::VectorXd symmetric_eigenvalues_range(const Eigen::MatrixXd& A, int il, int iu);

template <class Fn>
void CollisionOperator::for_each_collision(std::size_t a, Fn&& fn) const {
    const VelocityGrid& grid = vs_->grid;
    const AngularRule& half = grid.half_sphere();
    const std::size_t n = grid.size();
    const double h3 = grid.weight();
    const Vec3& v = grid.node(a);
    for (std::size_t b = 0; b < n; ++b) {
        if (b == a) continue;
        const Vec3& vs = grid.node(b);
        Vec3 u{v[0] - vs[0], v[1] - vs[1], v[2] - vs[2]};
        double un = norm(u);
        Vec3 uh{u[0] / un, u[1] / un, u[2] / un};
        double eta = grid.angular_normalisation(uh);
        for (std::size_t m = 0; m < half.dirs.size(); ++m) {
            const Vec3& w = half.dirs[m];
            double uw = dot(u, w);
            double B = std::abs(uw) * eta;
            if (B == 0.0) continue;
            Vec3 vp{v[0] - uw * w[0], v[1] - uw * w[1], v[2] - uw * w[2]};
            Vec3 vsp{vs[0] + uw * w[0], vs[1] + uw * w[1], vs[2] + uw * w[2]};
            simd::Stencil8 s1, s2;
            double m1 = j_stencil(vp, s1);
            double m2 = j_stencil(vsp, s2);
            fn(b, h3 * half.weights[m] * B, s1, s2, m1, m2);
        }
    }
}

}  // namespace hsboltz

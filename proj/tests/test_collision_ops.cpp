#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hsboltz/simd.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace hsboltz;

namespace {

double nu_norm2(const VelocitySpace& vs, const VelocityFunction& h) {
    return vs.grid.weight() * h.cwiseAbs2().cwiseProduct(vs.mt.nu).sum();
}

}  // namespace

TEST_CASE("Q(M,M) vanishes and collision invariants are conserved") {
    auto vs = testing::space(8);
    auto op = testing::collision(8);
    const VelocityFunction& M = vs->mt.M;
    const VelocityFunction q = op->q_raw(M, M);
    CHECK(std::sqrt(vs->grid.weight()) * q.norm() < 1e-6);
    for (int trial = 0; trial < 3; ++trial) {
        VelocityFunction F = M.cwiseProduct((Eigen::VectorXd::Ones(M.size()) +
                                             0.3 * testing::random_vector(M.size(), 40 + trial).cwiseMin(2).cwiseMax(-2)));
        const VelocityFunction Q = op->q_bilinear(F, F);
        CHECK(F.minCoeff() > 0);
        for (int i = 0; i < 5; ++i) {
            // psi in {1, v, |v|^2}: projections on the null basis divided by sqrt(M).
            VelocityFunction psi = vs->nb.e[i].cwiseQuotient(vs->mt.sqrtM);
            CHECK(std::abs(vs->grid.inner(psi, Q)) < 1e-6);
        }
    }
}

TEST_CASE("collision quadrature matches the naive double loop on 8^3") {
    auto vs = testing::space(8);
    auto op = testing::collision(8);
    testing::NaiveQuadrature naive{vs->grid};
    const std::size_t n = vs->size();
    const VelocityFunction& M = vs->mt.M;
    // Single-node impulse on top of M.
    VelocityFunction F = M;
    F[static_cast<Eigen::Index>(vs->grid.index(3, 4, 5))] += 0.05;
    const VelocityFunction a = op->q_raw(F, F), b = naive.Q(F, F);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, b.cwiseAbs().maxCoeff()));
    // Linearised operator: L g = -(Gamma(sqrt M, g) + Gamma(g, sqrt M)), Gamma = M^{-1/2} Q(sqrt M ., sqrt M .).
    VelocityFunction g = testing::random_perturbation(*vs, 5);
    VelocityFunction sg = g.cwiseProduct(vs->mt.sqrtM);
    VelocityFunction Lg = -(naive.Q(M, sg) + naive.Q(sg, M)).cwiseQuotient(vs->mt.sqrtM);
    VelocityFunction Lg_op = op->apply_l_raw(g);
    CHECK((Lg - Lg_op).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, Lg.cwiseAbs().maxCoeff()));
    // K_raw = nu - L_raw through the assembled kernels.
    Eigen::MatrixXd Kraw = op->assemble_k2_raw(1) - op->assemble_k1();
    VelocityFunction Kg = vs->mt.nu.cwiseProduct(g) - Lg;
    CHECK((Kraw * g - Kg).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, Kg.cwiseAbs().maxCoeff()));
    (void)n;
}

TEST_CASE("Gamma structure") {
    auto vs = testing::space(8);
    auto op = testing::collision(8);
    const VelocityFunction zero = VelocityFunction::Zero(static_cast<Eigen::Index>(vs->size()));
    const VelocityFunction g = testing::random_perturbation(*vs, 9);
    CHECK(op->gamma(zero, g).norm() == 0.0);
    const VelocityFunction G = op->gamma(g, g);
    CHECK(vs->nb.project(vs->grid, G).norm() < 1e-6 * G.norm());

    // Trilinear bound |nu^{-1/2} Gamma(g,h)| <= C (|nu^{1/2} g| |h| + |nu^{1/2} h| |g|): C stable across grids.
    auto measure = [](int n_v) {
        auto s = testing::space(n_v);
        auto o = testing::collision(n_v);
        double C = 0;
        for (int t = 0; t < 100; ++t) {
            VelocityFunction a = testing::random_perturbation(*s, 100 + t), b = testing::random_perturbation(*s, 300 + t);
            VelocityFunction q = o->gamma(a, b);
            const double lhs = std::sqrt(s->grid.weight() * q.cwiseAbs2().cwiseQuotient(s->mt.nu).sum());
            const double na = std::sqrt(s->grid.weight() * a.squaredNorm()), nb = std::sqrt(s->grid.weight() * b.squaredNorm());
            const double rhs = std::sqrt(nu_norm2(*s, a)) * nb + std::sqrt(nu_norm2(*s, b)) * na;
            C = std::max(C, lhs / rhs);
        }
        return C;
    };
    const double C6 = measure(6), C8 = measure(8);
    CHECK(std::isfinite(C8));
    CHECK(C8 > 0);
    CHECK(C8 / C6 < 2.0);
    CHECK(C6 / C8 < 2.0);
}

TEST_CASE("linearised operator spectrum, symmetry and coercivity") {
    auto vs = testing::space(8);
    auto L = testing::linearized(8);
    const Eigen::VectorXd ev = L->eigenvalues();
    for (int i = 0; i < 5; ++i) CHECK(std::abs(ev[i]) < 1e-6);
    CHECK(ev[5] > 1e-3);
    CHECK((L->L - L->L.transpose()).norm() < 1e-12 * L->L.norm());
    CHECK(ev.minCoeff() > -1e-9);

    const double kappa0 = estimate_kappa0(*L);
    CHECK(kappa0 > 0);
    const double w = vs->grid.weight();
    double min_ratio = 1e300, C_weighted = 0;
    for (int t = 0; t < 1000; ++t) {
        VelocityFunction h = testing::random_perturbation(*vs, 1000 + t);
        VelocityFunction micro = h - vs->nb.project(vs->grid, h);
        const double lhs = w * h.dot(L->L * h);
        min_ratio = std::min(min_ratio, lhs / nu_norm2(*vs, micro));
        // <nu^2 L h, h> >= 1/2 |nu h|_nu^2 - C |h|_nu^2, with C measured.
        VelocityFunction nh = vs->mt.nu.cwiseProduct(h);
        const double lw = w * nh.dot(L->L * h);
        C_weighted = std::max(C_weighted, (0.5 * nu_norm2(*vs, nh) - lw) / nu_norm2(*vs, h));
    }
    CHECK(min_ratio >= kappa0 * (1 - 1e-9));
    CHECK(std::isfinite(C_weighted));

    VelocityFunction g = testing::random_perturbation(*vs, 1), h = testing::random_perturbation(*vs, 2);
    CHECK(std::abs(g.dot(L->L * h) - h.dot(L->L * g)) < 1e-9 * std::abs(g.dot(L->L * h)) + 1e-15);
    VelocityFunction v1(vs->size());
    for (std::size_t k = 0; k < vs->size(); ++k) v1[k] = vs->grid.node(k)[0] * vs->mt.sqrtM[k];
    CHECK((L->L * v1).norm() < 1e-10 * L->L.norm() * v1.norm());
}

TEST_CASE("kappa0: dense, iterative and random-search estimates agree") {
    auto vs = testing::space(8);
    auto L = testing::linearized(8);
    const double dense = estimate_kappa0(*L);
    const double iter = estimate_kappa0_iterative(*testing::collision(8));
    CHECK(std::abs(iter / dense - 1) < 0.05);
    // Random search over 10^4 micro vectors only ever gives upper bounds.
    double best = 1e300;
    const double w = vs->grid.weight();
    for (int t = 0; t < 10000; ++t) {
        VelocityFunction h = testing::random_perturbation(*vs, 50000 + t);
        h -= vs->nb.project(vs->grid, h);
        best = std::min(best, w * h.dot(L->L * h) / nu_norm2(*vs, h));
    }
    CHECK(best >= dense * (1 - 1e-9));
}

TEST_CASE("kappa0 is stable under velocity refinement") {
    const double k6 = estimate_kappa0(*testing::linearized(6));
    const double k8 = estimate_kappa0(*testing::linearized(8));
    CHECK(k6 > 0);
    CHECK(std::abs(k8 / k6 - 1) < 0.25);
}

TEST_CASE("macro-micro projection") {
    auto vs = testing::space(8);
    auto [m, micro] = project_P(*vs, vs->mt.sqrtM);
    CHECK(m.a > 0);
    CHECK(std::abs(m.b[0]) + std::abs(m.b[1]) + std::abs(m.b[2]) + std::abs(m.c) < 1e-12);
    CHECK(micro.norm() < 1e-12);
    VelocityFunction g = testing::random_vector(vs->size(), 77);
    VelocityFunction Pg = macro_part(*vs, g), Qg = g - Pg;
    CHECK(macro_part(*vs, Qg).norm() < 1e-12 * g.norm());
    const double w = vs->grid.weight();
    CHECK(std::abs(w * g.squaredNorm() - w * Pg.squaredNorm() - w * Qg.squaredNorm()) < 1e-10 * w * g.squaredNorm());
}

TEST_CASE("batched Gamma: table, direct path and worker count agree") {
    auto vs = testing::space(6);
    auto direct = std::make_shared<CollisionOperator>(vs);
    auto tabled = testing::collision(6);
    REQUIRE(tabled->has_collision_table());
    const std::size_t n = vs->size(), pts = 7;
    Eigen::MatrixXd f(static_cast<Eigen::Index>(pts), static_cast<Eigen::Index>(n));  // row x: point, col k: node
    for (std::size_t x = 0; x < pts; ++x) f.row(static_cast<Eigen::Index>(x)) = testing::random_perturbation(*vs, 500 + x).transpose();
    // Node-major layout: value of node k at point x sits at [k * pts + x], i.e. column-major (pts x n).
    Eigen::MatrixXd out_d(f.rows(), f.cols()), out_t(f.rows(), f.cols()), out_w(f.rows(), f.cols()), out_s(f.rows(), f.cols());
    direct->gamma_raw_batch(f.data(), f.data(), out_d.data(), pts, 1);
    tabled->gamma_raw_batch(f.data(), f.data(), out_t.data(), pts, 1);
    tabled->gamma_raw_sym_batch(f.data(), out_s.data(), pts, 1);
    tabled->gamma_raw_sym_batch(f.data(), out_w.data(), pts, 3);
    CHECK(testing::rel_diff(out_d, out_t) < 1e-13);
    CHECK(testing::rel_diff(out_d, out_s) < 1e-13);
    CHECK(out_s == out_w);
    for (std::size_t x = 0; x < pts; ++x) {
        VelocityFunction g = f.row(static_cast<Eigen::Index>(x)).transpose();
        VelocityFunction single = direct->gamma_raw(g, g);
        CHECK(testing::rel_diff(single, out_d.row(static_cast<Eigen::Index>(x)).transpose()) < 1e-13);
    }
}

TEST_CASE("SIMD kernels match the scalar kernels") {
    if (!simd::avx2_available()) return;
    const auto& s = simd::scalar_kernels();
    const auto& v = simd::avx2_kernels();
    const std::size_t rows = 64, ld = 37;
    Eigen::VectorXd A = testing::random_vector(rows * ld, 1), B = testing::random_vector(rows * ld, 2);
    simd::Stencil8 sa, sb;
    for (int q = 0; q < 8; ++q) {
        sa.idx[q] = static_cast<std::uint32_t>(3 * q + 1);
        sb.idx[q] = static_cast<std::uint32_t>(5 * q + 2);
        sa.w[q] = 0.1 * (q + 1);
        sb.w[q] = 0.05 * (8 - q);
    }
    for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{4}, std::size_t{17}, ld}) {
        std::vector<double> a1(ld, 0.5), a2(ld, 0.5), b1(ld, -1), b2(ld, -1), c1(ld, 2), c2(ld, 2);
        s.gain_accumulate(a1.data(), A.data(), B.data(), ld, sa, sb, 0.7, n);
        v.gain_accumulate(a2.data(), A.data(), B.data(), ld, sa, sb, 0.7, n);
        s.pair_accumulate(b1.data(), c1.data(), A.data(), ld, sa, sb, 0.3, -0.9, n);
        v.pair_accumulate(b2.data(), c2.data(), A.data(), ld, sa, sb, 0.3, -0.9, n);
        for (std::size_t x = 0; x < ld; ++x) {
            CHECK(a1[x] == doctest::Approx(a2[x]).epsilon(1e-13));
            CHECK(b1[x] == doctest::Approx(b2[x]).epsilon(1e-13));
            CHECK(c1[x] == doctest::Approx(c2[x]).epsilon(1e-13));
        }
        std::vector<std::complex<double>> z(n);
        for (std::size_t k = 0; k < n; ++k) z[k] = {A[static_cast<Eigen::Index>(k)], B[static_cast<Eigen::Index>(k)]};
        std::vector<double> w(n);
        for (std::size_t k = 0; k < n; ++k) w[k] = 1.0 + 0.1 * static_cast<double>(k);
        CHECK(s.weighted_norm2(w.data(), z.data(), n) == doctest::Approx(v.weighted_norm2(w.data(), z.data(), n)).epsilon(1e-13));
        CHECK(s.norm2(z.data(), n) == doctest::Approx(v.norm2(z.data(), n)).epsilon(1e-13));
    }
}

TEST_CASE("collision budget guard") {
    Budget b;
    b.max_collision_work = 100;
    CHECK_THROWS_AS(CollisionOperator(testing::space(6), b), BudgetError);
}

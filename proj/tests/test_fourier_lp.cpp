#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hsboltz/fourier_lp.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace hsboltz;
using testing::block_l2;
using testing::l2;
using testing::random_field;

namespace {

DistributionField random_distribution(const SpectralGrid& g, std::shared_ptr<const VelocitySpace> vs, std::uint64_t seed) {
    DistributionField f(g, vs);
    for (std::size_t k = 0; k < vs->size(); ++k) {
        SpatialSpectrum s = random_field(g, seed * 1000 + k);
        f.data.row(static_cast<Eigen::Index>(k)) = vs->mt.sqrtM[k] * s.coeffs.transpose();
    }
    return f;
}

}  // namespace

TEST_CASE("dyadic partition of unity on resolvable modes") {
    for (int d : {1, 3}) {
        SpectralGrid g(d, 16, 2 * M_PI * 4);
        auto [j0, j1] = DyadicFilter::resolvable_range(g);
        double worst = 0;
        for (std::size_t m = 1; m < g.size(); ++m) {
            double s = 0;
            for (int j = j0; j <= j1; ++j) s += DyadicFilter::block(j, g.xi_abs(m));
            worst = std::max(worst, std::abs(s - 1));
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("Littlewood-Paley blocks: locality, orthogonality and Parseval") {
    SpectralGrid g(1, 64, 2 * M_PI * 8);
    // Single mode at |xi| = 2^j lives in blocks j-1..j+1 only.
    for (int j = -2; j <= 1; ++j) {
        SpatialSpectrum s(g);
        const int k = static_cast<int>(std::ldexp(8.0, j));
        s.coeffs[static_cast<Eigen::Index>(g.mode_index(k))] = 1.0;
        s.coeffs[static_cast<Eigen::Index>(g.mode_index(-k))] = 1.0;
        auto [j0, j1] = DyadicFilter::resolvable_range(g);
        Eigen::VectorXcd sum = Eigen::VectorXcd::Zero(s.coeffs.size());
        for (int jj = j0; jj <= j1; ++jj) {
            const SpatialSpectrum b = lp_block(s, jj);
            if (std::abs(jj - j) >= 2) CHECK(b.coeffs.norm() == 0.0);
            else sum += b.coeffs;
        }
        CHECK((sum - s.coeffs).norm() < 1e-12);
    }
    SpatialSpectrum w = random_field(g, 1);
    w.coeffs[0] = 0.7;
    auto [j0, j1] = DyadicFilter::resolvable_range(g);
    for (int j = j0; j <= j1; ++j)
        for (int k = j0; k <= j1; ++k)
            if (std::abs(j - k) >= 2) CHECK(lp_block(lp_block(w, j), k).coeffs.norm() == 0.0);
    // Parseval oracle: sum_j ||Delta_j g||^2 against ||g||^2 - |mean|^2 with the explicit multipliers
    // phi_j^2 + 2 phi_j phi_{j+1} summing to one.
    double blocks = 0, cross = 0;
    for (int j = j0; j <= j1; ++j) {
        const SpatialSpectrum b = lp_block(w, j);
        blocks += std::pow(l2(b), 2);
        if (j < j1) cross += 2 * g.volume() * (b.coeffs.conjugate().cwiseProduct(lp_block(w, j + 1).coeffs)).sum().real();
    }
    const double total = std::pow(l2(w), 2) - g.volume() * std::norm(w.coeffs[0]);
    CHECK(std::abs(blocks + cross - total) < 1e-8 * total);
}

TEST_CASE("Besov norms: single shell, Bernstein, equivalence and embeddings") {
    SpectralGrid g(3, 16, 2 * M_PI * 2);
    NormEvaluator ev(g);
    auto [j0, j1] = ev.block_range();
    // Field concentrated on one dyadic shell.
    SpatialSpectrum shell(g);
    for (std::size_t m = 0; m < g.size(); ++m)
        if (std::abs(g.xi_abs(m) - 2.0) < 0.1) shell.coeffs[static_cast<Eigen::Index>(m)] = 1.0;
    const double s = 0.7;
    const double b = ev.besov(shell, s, BesovQ::Inf);
    CHECK(b >= std::pow(2.0, s) * l2(shell) * 0.5 * std::pow(2.0, -std::abs(s)));
    CHECK(b <= std::pow(2.0, s) * l2(shell) * std::pow(2.0, std::abs(s)));

    double bern_lo = 1e300, bern_hi = 0, eq_lo = 1e300, eq_hi = 0;
    for (int t = 0; t < 200; ++t) {
        SpatialSpectrum w = random_field(g, 10 + t);
        for (int j = j0; j <= j1; ++j) {
            const SpatialSpectrum bj = lp_block(w, j);
            const double n0 = l2(bj);
            if (n0 < 1e-12) continue;
            double grad = 0;
            for (std::size_t m = 0; m < g.size(); ++m) grad += std::pow(g.xi_abs(m), 2) * std::norm(bj.coeffs[static_cast<Eigen::Index>(m)]);
            const double r = std::sqrt(g.volume() * grad) / n0 / std::ldexp(1.0, j);
            bern_lo = std::min(bern_lo, r);
            bern_hi = std::max(bern_hi, r);
        }
        SpatialSpectrum grad_w = w;
        for (std::size_t m = 0; m < g.size(); ++m) grad_w.coeffs[static_cast<Eigen::Index>(m)] *= g.xi_abs(m);
        const double r = ev.besov(grad_w, 0.25, BesovQ::Inf) / ev.besov(w, 1.25, BesovQ::Inf);
        eq_lo = std::min(eq_lo, r);
        eq_hi = std::max(eq_hi, r);
        const double b1 = ev.besov(w, 0, BesovQ::One), binf = ev.besov(w, 0, BesovQ::Inf), n2 = l2(w);
        CHECK(b1 >= n2 * (1 - 1e-12));
        CHECK(n2 >= binf * (1 - 1e-12));
    }
    CHECK(bern_lo >= 0.75);
    CHECK(bern_hi <= 8.0 / 3.0);
    CHECK(eq_lo >= 0.75);
    CHECK(eq_hi <= 8.0 / 3.0);
    CHECK_THROWS_AS(ev.besov(shell, 20.0, BesovQ::Inf), ValidationError);
}

TEST_CASE("interpolation and product inequalities hold with stable constants") {
    SpectralGrid g(3, 16, 2 * M_PI * 2);
    NormEvaluator ev(g);
    auto interp_constant = [&](int from, int to) {
        double C = 0;
        for (int t = from; t < to; ++t) {
            SpatialSpectrum w = random_field(g, 5000 + t);
            const double lhs = ev.besov(w, 0.5, BesovQ::One);
            const double rhs = std::sqrt(ev.besov(w, 0.0, BesovQ::Inf) * ev.besov(w, 1.0, BesovQ::Inf));
            C = std::max(C, lhs / rhs);
        }
        return C;
    };
    const double Ca = interp_constant(0, 500), Cb = interp_constant(500, 1000);
    auto [j0, j1] = ev.block_range();
    CHECK(Ca <= j1 - j0 + 1);
    CHECK(std::abs(Ca / Cb - 1) < 0.25);

    // Product estimate with band-limited factors (|k_i| <= 4), so the product is exact on the grid.
    auto product_constant = [&](int from, int to) {
        double C = 0;
        for (int t = from; t < to; ++t) {
            SpatialSpectrum a = random_field(g, 7000 + t, 4), b = random_field(g, 9000 + t, 4);
            Eigen::VectorXcd pa = a.to_physical(), pb = b.to_physical();
            SpatialSpectrum ab = SpatialSpectrum::from_physical(g, pa.cwiseProduct(pb));
            ab.coeffs[0] = 0;
            const double lhs = ev.besov(ab, 0.5 + 0.5 - 1.5, BesovQ::Inf);
            C = std::max(C, lhs / (ev.besov(a, 0.5, BesovQ::One) * ev.besov(b, 0.5, BesovQ::Inf)));
        }
        return C;
    };
    const double Pa = product_constant(0, 40), Pb = product_constant(40, 80);
    CHECK(std::isfinite(Pa));
    CHECK(std::abs(Pa / Pb - 1) < 0.5);
}

TEST_CASE("energy norm report against a slow-path evaluation") {
    auto vs = testing::space(6);
    SpectralGrid g(1, 8, 2 * M_PI);
    NormEvaluator ev(g);
    DistributionField zero(g, vs);
    for (const auto& [k, v] : ev.energy(zero, 0.5, 3).values) CHECK(v == 0.0);

    // Purely macro field: micro entries vanish.
    DistributionField macro(g, vs);
    for (int i = 0; i < 5; ++i)
        for (std::size_t m = 1; m < 3; ++m) {
            macro.data.col(static_cast<Eigen::Index>(m)) += (0.1 * (i + 1)) * vs->nb.e[i].cast<cplx>();
            macro.data.col(static_cast<Eigen::Index>(g.conjugate(m))) += (0.1 * (i + 1)) * vs->nb.e[i].cast<cplx>();
        }
    NormReport rm = ev.energy(macro, 0.5, 3);
    CHECK(rm.at("micro_l2") < 1e-12);
    CHECK(rm.at("mixed_micro") < 1e-10);

    DistributionField f = random_distribution(g, vs, 3);
    NormReport r = ev.energy(f, 0.5, 3);
    const double dv = vs->grid.weight(), vol = g.volume();
    auto [j0, j1] = ev.block_range();
    double besov = 0, hN = 0, w1 = 0, wN = 0;
    for (std::size_t k = 0; k < vs->size(); ++k) {
        Eigen::VectorXcd c = f.data.row(static_cast<Eigen::Index>(k)).transpose();
        double sup = 0;
        for (int j = j0; j <= j1; ++j) sup = std::max(sup, std::ldexp(1.0, j) > 0 ? std::pow(2.0, 0.5 * j) * block_l2(g, c, j) : 0);
        besov += dv * sup * sup;
        const double br = bracket(vs->grid.node(k));
        for (std::size_t m = 1; m < g.size(); ++m) {
            const double x = g.xi_abs(m), a2 = std::norm(c[static_cast<Eigen::Index>(m)]);
            hN += vol * dv * std::pow(x, 6) * a2;
            w1 += vol * dv * br * br * x * x * a2;
            wN += vol * dv * br * br * std::pow(x, 4) * a2;
        }
    }
    CHECK(r.at("besov_s_inf") == doctest::Approx(std::sqrt(besov)).epsilon(1e-10));
    CHECK(r.at("hdot_N") == doctest::Approx(std::sqrt(hN)).epsilon(1e-10));
    CHECK(r.at("weighted_hdot_1") == doctest::Approx(std::sqrt(w1)).epsilon(1e-10));
    CHECK(r.at("weighted_hdot_Nm1") == doctest::Approx(std::sqrt(wN)).epsilon(1e-10));
    Eigen::MatrixXcd micro = f.data;
    for (Eigen::Index m = 0; m < micro.cols(); ++m) {
        Eigen::VectorXd re = micro.col(m).real(), im = micro.col(m).imag();
        micro.col(m) -= (vs->nb.project(vs->grid, re) + cplx(0, 1) * vs->nb.project(vs->grid, im)).cast<cplx>();
    }
    CHECK(r.at("micro_l2") == doctest::Approx(std::sqrt(vol * dv * micro.squaredNorm())).epsilon(1e-10));
    // First-order velocity derivatives with no spatial derivative: with d = 1 and N = 3 each
    // beta of order one contributes three entries (|alpha| = 0, 1, 2), alpha = 0 first.
    VelocityDerivative D(vs->grid);
    const auto mixed = mixed_derivative_norms(g, *vs, micro, 3);
    std::vector<double> lib{mixed[0], mixed[3], mixed[6]}, oracle;
    for (int axis = 0; axis < 3; ++axis) {
        Eigen::MatrixXcd d(micro.rows(), micro.cols());
        D.apply(axis, micro.data(), d.data(), static_cast<std::size_t>(micro.cols()));
        oracle.push_back(std::sqrt(vol * dv * d.squaredNorm()));
    }
    std::sort(lib.begin(), lib.end());
    std::sort(oracle.begin(), oracle.end());
    for (int i = 0; i < 3; ++i) CHECK(lib[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
    CHECK(r.all_finite_nonnegative());
}

TEST_CASE("low-high split and weighted Sobolev") {
    auto vs = testing::space(6);
    SpectralGrid g(1, 16, 2 * M_PI * 4);
    DistributionField f = random_distribution(g, vs, 8);
    auto [fL, fH] = low_high_split(f, 0);
    CHECK((fL.data + fH.data - f.data).norm() < 1e-12 * f.data.norm());
    // Cross term bounded by the overlap of at most two blocks.
    const double total = std::pow(f.l2_norm(), 2), parts = std::pow(fL.l2_norm(), 2) + std::pow(fH.l2_norm(), 2);
    const double cross = total - parts;
    const double overlap = std::pow(lp_block(f, -1).l2_norm(), 2) + std::pow(lp_block(f, 0).l2_norm(), 2);
    CHECK(std::abs(cross) <= 2 * overlap + 1e-12);

    DistributionField low(g, vs);
    low.data.col(static_cast<Eigen::Index>(g.mode_index(1))) = vs->mt.sqrtM.cast<cplx>();
    low.data.col(static_cast<Eigen::Index>(g.mode_index(-1))) = vs->mt.sqrtM.cast<cplx>();
    auto [l2, h2] = low_high_split(low, 6);
    CHECK(h2.data.norm() == 0.0);

    Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(vs->size()), 2.0);
    const double ws = weighted_sobolev_sq(g, *vs, f.data, w, 1.0);
    NormEvaluator ev(g);
    CHECK(ws == doctest::Approx(2.0 * std::pow(ev.sobolev(f, 1.0), 2)).epsilon(1e-12));
}

TEST_CASE("FFT round trip and snapshot I/O") {
    auto vs = testing::space(6);
    SpectralGrid g(2, 8, 3.0);
    DistributionField f = random_distribution(g, vs, 21);
    FftPlan plan(g, vs->size());
    // FFT layout is (n_batch x n_modes) column-major, matching DistributionField::data.
    Eigen::MatrixXcd x = f.data;
    plan.inverse(x.data());
    plan.forward(x.data());
    CHECK((x - f.data).norm() < 1e-12 * f.data.norm());
    CHECK(f.hermitian_defect() < 1e-12);

    const auto path = (std::filesystem::temp_directory_path() / "hsboltz_snapshot_test.hsnap").string();
    f.time = 2.5;
    f.step = 5;
    save_snapshot(path, f, 0xabcdefULL);
    const SnapshotHeader h = read_snapshot_header(path);
    CHECK(h.d == 2);
    CHECK(h.n_x == 8);
    CHECK(h.n_v == 6);
    CHECK(h.config_hash == 0xabcdefULL);
    DistributionField back(g, vs);
    load_snapshot(path, back);
    CHECK(back.data == f.data);
    CHECK(back.time == 2.5);
    std::filesystem::remove(path);
}

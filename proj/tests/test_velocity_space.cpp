#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "test_support.hpp"

using namespace hsboltz;

namespace {

/// Composite Simpson rule on [a, b] with n (even) intervals.
template <class F>
double simpson(F&& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

/// 2 pi int |v - w| M(w) dw for |v| = a, reduced to one radial integral: the angular average
/// of |v - r omega| over the sphere is ((a + r)^3 - |a - r|^3) / (6 a r), and |v| for a = 0.
double radial_nu(double a, double R) {
    auto integrand = [&](double r) {
        const double avg = a == 0 ? r : r == 0 ? a : (std::pow(a + r, 3) - std::pow(std::abs(a - r), 3)) / (6 * a * r);
        return 4 * M_PI * r * r * std::pow(2 * M_PI, -1.5) * std::exp(-0.5 * r * r) * avg;
    };
    return 2 * M_PI * simpson(integrand, 0.0, R, 400);
}

}  // namespace

TEST_CASE("velocity grid sizes and weights") {
    const VelocityGrid g = VelocityGrid::build(6.0, 16, 14);
    CHECK(g.size() == 4096);
    CHECK(g.weight() * static_cast<double>(g.size()) == doctest::Approx(1728.0).epsilon(1e-14));
    CHECK_THROWS_AS(VelocityGrid::build(6.0, 3, 26), ValidationError);
    CHECK_THROWS_AS(VelocitySpace::make(6.0, 7, 26), ValidationError);
}

TEST_CASE("grid Maxwellian mass against the one-dimensional Gaussian oracle") {
    // Midpoint lattice sum at h = 2/3 on R = 8: aliasing error ~ exp(-2 pi^2 / h^2), far below 1e-10.
    const VelocityGrid g = VelocityGrid::build(8.0, 24, 26);
    double mass = 0;
    for (const auto& v : g.nodes()) mass += g.weight() * maxwellian(v);
    const double line = simpson([](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI); }, -8.0, 8.0, 4000);
    CHECK(mass >= 0.9999);
    CHECK(std::abs(mass - line * line * line) < 1e-10);
    CHECK(std::abs(gaussian_tail_mass(8.0) - (1 - line * line * line)) < 1e-10);
}

TEST_CASE("Maxwellian point values") {
    CHECK(maxwellian({0, 0, 0}) == doctest::Approx(0.0634936359342410).epsilon(1e-12));
    CHECK(maxwellian({1, 1, 0}) == doctest::Approx(std::exp(-1.0) * std::pow(2 * M_PI, -1.5)).epsilon(1e-14));
}

TEST_CASE("collision frequency symmetry, growth and radial oracle") {
    auto vs = testing::space(8);
    const auto& nu = vs->mt.nu;
    for (std::size_t k = 0; k < vs->size(); ++k) CHECK(nu[k] == doctest::Approx(nu[vs->grid.mirror(k)]).epsilon(1e-13));
    CHECK(vs->mt.c1 > 0);
    CHECK(vs->mt.c2 / vs->mt.c1 < 10);
    double lo = 1e300, hi = 0;
    for (std::size_t k = 0; k < vs->size(); ++k) {
        const double r = nu[k] / bracket(vs->grid.node(k));
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    CHECK(lo == doctest::Approx(vs->mt.c1));
    CHECK(hi == doctest::Approx(vs->mt.c2));

    const VelocityGrid fine = VelocityGrid::build(6.0, 16, 26);
    const double ratio = collision_frequency({4, 0, 0}, fine) / collision_frequency({0, 0, 0}, fine);
    const double oracle = radial_nu(4.0, 6.0 * std::sqrt(3.0)) / radial_nu(0.0, 6.0 * std::sqrt(3.0));
    CHECK(std::abs(ratio / oracle - 1) < 0.01);
}

TEST_CASE("null basis orthonormality and projections") {
    auto vs = testing::space(8);
    const auto& g = vs->grid;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(std::abs(g.inner(vs->nb.e[i], vs->nb.e[j]) - (i == j)) < 1e-12);
    const VelocityFunction& sM = vs->mt.sqrtM;
    CHECK((vs->nb.project(g, sM) - sM).norm() < 1e-10 * sM.norm());
    VelocityFunction v1sq(vs->size());
    for (std::size_t k = 0; k < vs->size(); ++k) v1sq[k] = g.node(k)[0] * g.node(k)[0] * sM[k];
    const auto c = vs->nb.coefficients(g, v1sq);
    // Oracle: v1^2 sqrt(M) is even in every component, so it has no overlap with the odd v_i sqrt(M).
    for (int i = 1; i <= 3; ++i) CHECK(std::abs(c[i]) < 1e-12);
    CHECK(std::abs(c[0]) > 1e-3);
    CHECK(std::abs(c[4]) > 1e-3);
}

TEST_CASE("velocity derivative stencil is exact on quadratics") {
    const VelocityGrid g = VelocityGrid::build(6.0, 8, 26);
    VelocityDerivative D(g);
    Eigen::VectorXd f(static_cast<Eigen::Index>(g.size())), d(f.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Vec3& v = g.node(k);
        f[static_cast<Eigen::Index>(k)] = 0.3 * v[0] * v[0] - v[0] * v[1] + 2 * v[2] + 1;
    }
    for (int a = 0; a < 3; ++a) {
        D.apply(a, f.data(), d.data(), 1);
        double err = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const Vec3& v = g.node(k);
            const double exact = a == 0 ? 0.6 * v[0] - v[1] : (a == 1 ? -v[0] : 2.0);
            err = std::max(err, std::abs(d[static_cast<Eigen::Index>(k)] - exact));
        }
        CHECK(err < 1e-12);
    }
}

TEST_CASE("velocity cache round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "hsboltz_cache_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto a = VelocitySpace::make(6.0, 6, 14, dir.string());
    CHECK(std::filesystem::exists(dir / velocity_cache_name(6.0, 6, 14)));
    auto b = VelocitySpace::make(6.0, 6, 14, dir.string());
    CHECK(a->mt.nu == b->mt.nu);
    CHECK(a->mt.M == b->mt.M);
    std::filesystem::remove_all(dir);
}

#include <cmath>

#include "doctest.h"
#include "hsboltz/period_map.hpp"
#include "test_support.hpp"

using namespace hsboltz;

namespace {

constexpr int kNv = 6;

std::shared_ptr<const CauchySolver> make_solver(const SpectralGrid& g, ForceField E, double dt = 0.5) {
    SolverConfig c;
    c.scheme = Scheme::Strang;
    c.dt = dt;
    c.monitor_every = 0;
    c.full_monitor = false;
    return std::make_shared<CauchySolver>(testing::linearized(kNv), testing::collision(kNv), g, std::move(E), c);
}

PeriodMapOptions options(double period, double tol = 1e-9, int n_max = 80) {
    PeriodMapOptions o;
    o.period = period;
    o.tol = tol;
    o.n_max = n_max;
    return o;
}

/// Periodised one-dimensional Gaussian potential at x.
double gaussian_phi(double x, double A, double sigma, double L) {
    double s = 0;
    for (int n = -4; n <= 4; ++n) s += std::exp(-std::pow(x - n * L, 2) / (2 * sigma * sigma));
    return A * s;
}

}  // namespace

TEST_CASE("period map options validation") {
    PeriodMapOptions o = options(1.0);
    CHECK_NOTHROW(o.validate());
    o.eps = 0.5;
    CHECK_THROWS_AS(o.validate(), ValidationError);
    o = options(1.0);
    o.n_max = 0;
    CHECK_THROWS_AS(o.validate(), ValidationError);
    o = options(1.0, 0.0);
    CHECK_THROWS_AS(o.validate(), ValidationError);
    SpectralGrid g(1, 8, 2 * M_PI);
    CHECK_THROWS_AS(PeriodMap(make_solver(g, ForceField::zero(g)), options(0.0)), ValidationError);
    CHECK_THROWS_AS(PeriodMap(make_solver(g, ForceField::zero(g)), options(1.25)), ValidationError);
}

TEST_CASE("zero force: the iteration converges at the first period") {
    SpectralGrid g(1, 8, 2 * M_PI);
    PeriodMap map(make_solver(g, ForceField::zero(g)), options(2.0));
    CHECK(map.steps_per_map() == 4);
    auto [fT, rep] = map.serrin_iterate();
    CHECK(rep.converged);
    REQUIRE(rep.iterates.size() == 1);
    CHECK(rep.iterates[0].d == 0.0);
    CHECK(fT.data.norm() == 0.0);
    CHECK(map.verify_periodicity(fT) == 0.0);
    CHECK(stationary_oracle(map).error == 0.0);
}

TEST_CASE("advance composes solver steps bit-exactly") {
    SpectralGrid g(1, 8, 2 * M_PI);
    TimeProfile sine;
    sine.kind = Modulation::Sine;
    auto solver = make_solver(g, ForceField::gaussian(g, 0.01, 0.8).modulated(1.0, sine), 0.25);
    PeriodMap map(solver, options(0.0));
    CHECK(map.period() == 1.0);
    DistributionField a = admissible_random_start(*solver, 0.01, 4), b = a;
    map.advance(a);
    map.advance(a);
    for (int i = 0; i < 8; ++i) solver->step(b);
    CHECK(a.step == 8);
    CHECK((a.data - b.data).norm() == 0.0);

    // The first d_n is the distance travelled by zero in one period, which is also its residual.
    DistributionField z = solver->zero_field();
    const double r0 = map.verify_periodicity(z);
    DistributionField one = solver->zero_field();
    map.advance(one);
    CHECK(r0 == doctest::Approx(map.distance(one, z)).epsilon(1e-14));
    CHECK(map.distance(z, z) == 0.0);
    CHECK(map.norm(one) == doctest::Approx(r0).epsilon(1e-14));

    PeriodMapOptions o = options(0.0, 1e-14, 2);
    CHECK_THROWS_AS(PeriodMap(solver, o).serrin_iterate(), NumericalError);
}

TEST_CASE("closed-form stationary reference against a test-side evaluation") {
    const double L = 2 * M_PI, A = 0.05, sigma = 0.8;
    SpectralGrid g(1, 16, L);
    auto solver = make_solver(g, ForceField::gaussian(g, A, sigma));
    const SpatialSpectrum phi = ForceField::gaussian_potential(g, A, sigma);

    // Mass constant C = L / int exp(-phi), by composite Simpson.
    const int n = 2000;
    double integral = 0;
    for (int i = 0; i <= n; ++i) {
        const double x = L * i / n, w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
        integral += w * std::exp(-gaussian_phi(x, A, sigma, L));
    }
    integral *= L / n / 3;
    const double C_oracle = L / integral;

    double C = 0, T = 0;
    const DistributionField ref = stationary_reference(*solver, phi, false, &C);
    CHECK(C == doctest::Approx(C_oracle).epsilon(1e-10));
    auto vs = solver->space();
    double err = 0, scale = 0;
    for (std::size_t k = 0; k < vs->size(); k += 5) {
        SpatialSpectrum row(g);
        row.coeffs = ref.data.row(static_cast<Eigen::Index>(k)).transpose();
        const Eigen::VectorXcd phys = row.to_physical();
        const double sM = vs->mt.sqrtM[static_cast<Eigen::Index>(k)];
        for (std::size_t p = 0; p < g.size(); ++p) {
            const double expect = (C_oracle * std::exp(-gaussian_phi(g.point(p)[0], A, sigma, L)) - 1) * sM;
            err = std::max(err, std::abs(phys[static_cast<Eigen::Index>(p)] - expect));
            scale = std::max(scale, std::abs(expect));
        }
    }
    // The potential is represented by |k| <= 8 modes: truncation ~ exp(-sigma^2 8^2 / 2) ~ 1e-9.
    CHECK(err < 1e-8 * scale);

    // Energy-consistent reference: mass |box| and total energy (3/2)|box| + int phi.
    stationary_reference(*solver, phi, true, &C, &T);
    double mass = 0, energy = 0, energy0 = 0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double ph = gaussian_phi(g.point(p)[0], A, sigma, L), rho = C * std::exp(-ph / T);
        mass += rho;
        energy += 1.5 * T * rho + ph * rho;
        energy0 += 1.5 + ph;
    }
    CHECK(mass / static_cast<double>(g.size()) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(energy == doctest::Approx(energy0).epsilon(1e-10));
    CHECK(T > 1.0);

    // phi = 0 gives the zero perturbation.
    const DistributionField z = stationary_reference(*solver, SpatialSpectrum(g), false, &C);
    CHECK(z.data.norm() == 0.0);
    CHECK(C == 1.0);
    CHECK(relative_distribution_error(ref, ref) == 0.0);
}

TEST_CASE("admissible random starts") {
    SpectralGrid g(1, 8, 2 * M_PI);
    auto solver = make_solver(g, ForceField::zero(g));
    const DistributionField a = admissible_random_start(*solver, 0.1, 7), b = admissible_random_start(*solver, 0.1, 7),
                            c = admissible_random_start(*solver, 0.1, 8);
    CHECK(zero_mode_moments(a).norm() < 1e-14);
    CHECK((a.data - b.data).norm() == 0.0);
    CHECK((a.data - c.data).norm() > 0.0);
    CHECK(a.hermitian_defect() < 1e-15);
}

TEST_CASE("small stationary run approaches the closed-form state") {
    SpectralGrid g(1, 8, 2 * M_PI);
    PeriodMap map(make_solver(g, ForceField::gaussian(g, 0.01, 0.8)), options(5.0, 1e-8));
    const StationaryOracleResult res = stationary_oracle(map);
    CHECK(res.report.converged);
    // Eight modes resolve the Gaussian peak to within exp(-sigma^2 4^2 / 2) ~ 1%.
    CHECK(res.max_phi == doctest::Approx(0.01).epsilon(1e-2));
    CHECK(res.error < 1e-3);
    CHECK(res.report.contraction < 1.0);
    const auto& it = res.report.iterates;
    for (std::size_t i = 2; i < it.size(); ++i) CHECK(it[i].d <= it[i - 1].d * (1 + 1e-12));
    CHECK(res.report.csv().find("envelope") != std::string::npos);
    CHECK(res.report.json().find("converged") != std::string::npos);
}

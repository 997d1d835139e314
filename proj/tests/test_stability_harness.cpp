#include <cmath>

#include "doctest.h"
#include "hsboltz/period_map.hpp"
#include "hsboltz/stability_harness.hpp"
#include "test_support.hpp"

using namespace hsboltz;

namespace {

constexpr int kNv = 6;

CauchySolver make_solver(const SpectralGrid& g, ForceField E, double dt) {
    SolverConfig c;
    c.scheme = Scheme::Strang;
    c.dt = dt;
    c.monitor_every = 0;
    c.full_monitor = false;
    return CauchySolver(testing::linearized(kNv), testing::collision(kNv), g, std::move(E), c);
}

StabilityScenario scenario(const DistributionField& f1, const DistributionField& f2, double s0, double horizon) {
    StabilityScenario sc{f1, f2, s0, {0.5}};
    sc.horizon = horizon;
    sc.n_samples = 6;
    return sc;
}

}  // namespace

TEST_CASE("scenario validation") {
    SpectralGrid g(1, 8, 2 * M_PI);
    DistributionField z(g, testing::space(kNv));
    CHECK_NOTHROW(scenario(z, z, -1.4, 10).validate());
    CHECK_THROWS_AS(scenario(z, z, -1.5, 10).validate(), ValidationError);
    CHECK_THROWS_AS(scenario(z, z, 0.6, 10).validate(), ValidationError);
    StabilityScenario sc = scenario(z, z, 0.0, 10);
    sc.targets = {-0.2};
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    sc.targets = {0.95};
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    sc.targets.clear();
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    sc = scenario(z, z, 0.0, 10);
    sc.n_samples = 3;
    CHECK_THROWS_AS(sc.validate(), ValidationError);
    sc = scenario(z, DistributionField(SpectralGrid(1, 16, 2 * M_PI), testing::space(kNv)), 0.0, 10);
    CHECK_THROWS_AS(sc.validate(), ValidationError);
}

TEST_CASE("synthesized initial differences") {
    SpectralGrid g(1, 64, 2 * M_PI * 16);
    auto vs = testing::space(kNv);
    for (double s0 : {-1.4, -0.5, 0.0}) {
        const DistributionField a = synthesize_initial_difference(g, vs, s0, 1e-3, 5);
        CAPTURE(s0);
        CHECK(shell_flatness(a, s0) < 0.1);
        CHECK(a.hermitian_defect() < 1e-15);
        const DistributionField b = synthesize_initial_difference(g, vs, s0, 2e-3, 5);
        CHECK((b.data - 2.0 * a.data).norm() < 1e-14 * b.data.norm());
        const DistributionField c = synthesize_initial_difference(g, vs, s0, 1e-3, 5);
        CHECK((c.data - a.data).norm() == 0.0);
        const DistributionField d = synthesize_initial_difference(g, vs, s0, 1e-3, 6);
        CHECK((d.data - a.data).norm() > 0.0);
    }
    CHECK_THROWS_AS(synthesize_initial_difference(g, vs, -1.5, 1.0, 1), ValidationError);
}

TEST_CASE("identical pair gives an identically zero difference series") {
    SpectralGrid g(1, 16, 2 * M_PI * 4);
    CauchySolver solver = make_solver(g, ForceField::gaussian(g, 0.01, 2.0), 0.5);
    const DistributionField f = admissible_random_start(solver, 0.01, 3);
    DifferenceSeries ds;
    // Nothing positive to fit.
    CHECK_THROWS_AS(run_difference_decay(solver, scenario(f, f, -0.5, 5), &ds), NumericalError);
    REQUIRE(ds.t.size() >= 4);
    for (std::size_t i = 0; i < ds.t.size(); ++i) {
        CHECK(ds.besov[0][i] == 0.0);
        CHECK(ds.micro_l2[i] == 0.0);
        CHECK(ds.weighted[i] == 0.0);
        CHECK(ds.mixed[i] == 0.0);
    }
}

TEST_CASE("difference decay run reports one fit per family") {
    SpectralGrid g(1, 16, 2 * M_PI * 4);
    CauchySolver solver = make_solver(g, ForceField::gaussian(g, 0.01, 2.0), 0.5);
    DistributionField f2 = solver.zero_field();
    DistributionField f1 = f2;
    f1.data += synthesize_initial_difference(g, solver.space(), -0.5, 1e-3, 2).data;
    DifferenceSeries ds;
    const auto fits = run_difference_decay(solver, scenario(f1, f2, -0.5, 20), &ds);
    REQUIRE(fits.size() == 4);
    CHECK(fits[0].label == "besov_s");
    CHECK(fits[0].expected_rate == doctest::Approx(0.5));
    CHECK(fits[1].expected_rate == doctest::Approx(0.5 * (1 - 0.1 + 0.5)));
    CHECK(ds.t.back() == doctest::Approx(20.0));
    for (double v : ds.besov[0]) CHECK(v > 0);
    for (std::size_t i = 1; i < ds.t.size(); ++i) CHECK(ds.t[i] > ds.t[i - 1]);
}

TEST_CASE("difference equation residual shrinks at second order") {
    SpectralGrid g(1, 16, 2 * M_PI * 4);
    for (bool forced : {false, true}) {
        std::vector<double> res;
        // The trapezoidal comparison is only meaningful for dt max(nu) < 1.
        for (double dt : {0.01, 0.005}) {
            const ForceField E = forced ? ForceField::gaussian(g, 0.05, 2.0) : ForceField::zero(g);
            CauchySolver solver = make_solver(g, E, dt);
            const DistributionField f2 = admissible_random_start(solver, 0.05, 1);
            DistributionField f1 = f2;
            f1.data += synthesize_initial_difference(g, solver.space(), -0.5, 1e-2, 2).data;
            res.push_back(error_equation_residual(solver, f1, f2));
        }
        CAPTURE(forced);
        CAPTURE(res[0]);
        CAPTURE(res[1]);
        CHECK(res[0] < 0.01);
        CHECK(res[1] < res[0] / 3);
    }
}

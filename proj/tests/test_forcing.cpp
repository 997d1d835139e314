#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hsboltz/forcing.hpp"
#include "test_support.hpp"

using namespace hsboltz;

namespace {

double sobolev_vec_norm(const ForceField& E, double s) {
    NormEvaluator ev(E.grid());
    return vector_besov_inf(ev, E.base_spectrum(), -1.5) + vector_sobolev(ev, E.base_spectrum(), s);
}

}  // namespace

TEST_CASE("rotational field: divergence free, curl at the origin, linear in eps") {
    SpectralGrid g(3, 64, 2 * M_PI * 2);
    for (double eps : {1e-3, 1e-2, 1e-1}) {
        const ForceField E = ForceField::rotational(g, eps, 3);
        const SpatialSpectrum div = E.divergence();
        double emax = 0;
        for (int a = 0; a < 3; ++a) emax = std::max(emax, E.base_spectrum()[a].cwiseAbs().maxCoeff());
        CHECK(div.coeffs.cwiseAbs().maxCoeff() < 1e-12 * emax);
        const Vec3 c = E.curl_at_origin();
        CHECK(std::abs(c[0]) < 1e-6 * eps);
        CHECK(std::abs(c[1]) < 1e-6 * eps);
        CHECK(c[2] == doctest::Approx(2 * eps).epsilon(1e-3));
    }
    const double n1 = sobolev_vec_norm(ForceField::rotational(g, 1e-3, 3), 4);
    const double n2 = sobolev_vec_norm(ForceField::rotational(g, 1e-2, 3), 4);
    const double n3 = sobolev_vec_norm(ForceField::rotational(g, 1e-1, 3), 4);
    CHECK(n2 / n1 == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(n3 / n2 == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("Gaussian potential field") {
    SpectralGrid g(2, 32, 2 * M_PI);
    const ForceField z = ForceField::gaussian(g, 0.0, 0.8);
    for (int a = 0; a < 3; ++a) CHECK(z.base_spectrum()[a].norm() == 0.0);
    const ForceField E = ForceField::gaussian(g, 1e-2, 0.8);
    const auto curl = E.curl();
    for (int a = 0; a < 3; ++a) CHECK(curl[a].coeffs.cwiseAbs().maxCoeff() < 1e-10);
    for (int a = 0; a < 3; ++a) CHECK(std::abs(E.base_spectrum()[a][0]) < 1e-15);
    // Spectral samples against the closed-form periodised gradient.
    const Eigen::MatrixXd phys = E.base_physical();
    double err = 0, mx = 0;
    for (std::size_t p = 0; p < g.size(); p += 7) {
        const Vec3 e = E.evaluate(g.point(p));
        for (int a = 0; a < 2; ++a) {
            err = std::max(err, std::abs(phys(static_cast<Eigen::Index>(p), a) - e[a]));
            mx = std::max(mx, std::abs(e[a]));
        }
    }
    CHECK(err < 1e-8 * mx);
    REQUIRE(E.potential_spectrum() != nullptr);
    const double max_phi = E.potential_spectrum()->to_physical().real().maxCoeff();
    CHECK(max_phi == doctest::Approx(1e-2).epsilon(1e-6));
    CHECK(E.stationary());
}

TEST_CASE("time modulation") {
    SpectralGrid g(1, 16, 2 * M_PI);
    const ForceField base = ForceField::gaussian(g, 1e-2, 0.8);
    TimeProfile sine;
    sine.kind = Modulation::Sine;
    const ForceField E = base.modulated(4.0, sine);
    CHECK_FALSE(E.stationary());
    for (double t : {0.1, 0.7, 1.3})
        CHECK(E.theta(2.0 + t) == doctest::Approx(-E.theta(t)).epsilon(1e-12));
    CHECK(E.theta_at_phase(0.25) == doctest::Approx(1.0));
    CHECK(base.theta(123.4) == 1.0);

    const NormReport r64 = force_norm_report(E, 4, 64), r128 = force_norm_report(E, 4, 128);
    CHECK(std::abs(r128.at("total") / r64.at("total") - 1) < 0.01);
    const NormReport rb = force_norm_report(base, 4, 8);
    CHECK(r64.at("total") == doctest::Approx(rb.at("total") * r64.at("sup_theta")).epsilon(1e-12));
    CHECK(force_norm_report(ForceField::zero(g), 4).at("total") == 0.0);
}

TEST_CASE("custom spectral force parsing") {
    SpectralGrid g(1, 16, 2 * M_PI);
    const auto dir = std::filesystem::temp_directory_path();
    const auto good = (dir / "hsboltz_force_ok.json").string(), bad = (dir / "hsboltz_force_bad.json").string();
    std::ofstream(good) << R"({"modes": [{"k": [1,0,0], "E": [[0,0],[0,-0.5],[0,0]]}]})";
    std::ofstream(bad) << R"({"modes": [{"k": [9,0,0], "E": [[0,0],[1,0],[0,0]]}]})";
    const ForceField E = ForceField::custom_spectral(g, good);
    const auto& c = E.base_spectrum()[1];
    CHECK(c[static_cast<Eigen::Index>(g.mode_index(1))] == cplx(0, -0.5));
    CHECK(c[static_cast<Eigen::Index>(g.mode_index(-1))] == cplx(0, 0.5));
    CHECK(E.divergence().coeffs.norm() == 0.0);
    CHECK_THROWS_AS(ForceField::custom_spectral(g, bad), ValidationError);
    CHECK_THROWS_AS(ForceField::custom_spectral(g, (dir / "missing.json").string()), ValidationError);
    std::filesystem::remove(good);
    std::filesystem::remove(bad);
}

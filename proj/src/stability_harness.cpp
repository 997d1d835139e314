#include "hsboltz/stability_harness.hpp"

#include <algorithm>
#include <cmath>

#include "hsboltz/errors.hpp"

namespace hsboltz {

void StabilityScenario::validate() const {
    if (!(s0 > -1.5 && s0 <= 0.5)) throw ValidationError("stability s0 must lie in (-3/2, 1/2]");
    if (!(eps > 0 && eps < 0.5)) throw ValidationError("stability eps must lie in (0, 1/2)");
    if (targets.empty()) throw ValidationError("stability scenario needs at least one target s");
    for (double s : targets) {
        if (s < s0) throw ValidationError("stability target s must be >= s0");
        if (s < -1.5 + eps - 1e-12 || s > 1.0 - eps + 1e-12)
            throw ValidationError("stability target s must lie in [-3/2 + eps, 1 - eps]");
    }
    if (!(horizon > 0)) throw ValidationError("stability horizon must be positive");
    if (!(fit_lo_fraction > 0 && fit_lo_fraction < 1)) throw ValidationError("fit window fraction must lie in (0, 1)");
    if (n_samples < 4) throw ValidationError("stability scenario needs at least 4 samples");
    if (f1.data.rows() != f2.data.rows() || f1.data.cols() != f2.data.cols())
        throw ValidationError("stability pair has mismatched shapes");
}

std::vector<DecayFit> run_difference_decay(const CauchySolver& solver, const StabilityScenario& sc,
                                           DifferenceSeries* series) {
    sc.validate();
    const long n_hi = std::lround(sc.horizon / solver.config().dt);
    if (n_hi < 1) throw ValidationError("stability horizon shorter than one step");
    const SpectralGrid& grid = solver.grid();
    const VelocitySpace& vs = *solver.space();
    const int N = solver.config().N;
    NormEvaluator ev(grid);
    Eigen::VectorXd vw(static_cast<Eigen::Index>(vs.size()));
    for (std::size_t k = 0; k < vs.size(); ++k) {
        const Vec3& v = vs.grid.node(k);
        vw[static_cast<Eigen::Index>(k)] = 1.0 + dot(v, v);
    }
    DifferenceSeries ds;
    ds.besov.resize(sc.targets.size());
    DistributionField a = sc.f1, b = sc.f2;
    a.time = b.time = 0;
    a.step = b.step = 0;
    evolve_pair(solver, a, b, log_spaced_steps(n_hi, sc.n_samples),
                [&](std::size_t, const DistributionField& x, const DistributionField& y) {
                    DistributionField d = x;
                    d.data -= y.data;
                    ds.t.push_back(x.time);
                    const double hN = ev.sobolev(d, N - 1);
                    for (std::size_t i = 0; i < sc.targets.size(); ++i)
                        ds.besov[i].push_back(ev.besov(d, sc.targets[i], BesovQ::Inf) + hN);
                    const Eigen::MatrixXcd micro = micro_part(vs, d.data);
                    ds.micro_l2.push_back(std::sqrt(grid.volume() * vs.grid.weight()) * micro.norm());
                    ds.weighted.push_back(std::sqrt(weighted_sobolev_sq(grid, vs, d.data, vw, 1)) +
                                          std::sqrt(weighted_sobolev_sq(grid, vs, d.data, vw, N - 2)));
                    double m = 0;
                    for (double v : mixed_derivative_norms(grid, vs, micro, N)) m += v;
                    ds.mixed.push_back(m);
                });
    if (series) *series = ds;
    const double lo = sc.fit_lo_fraction * sc.horizon, hi = sc.horizon;
    auto fit = [&](const std::string& label, double x, double expected, const std::vector<double>& v) {
        std::vector<std::pair<double, double>> s;
        for (std::size_t i = 0; i < ds.t.size(); ++i) s.emplace_back(ds.t[i], v[i]);
        DecayFit f = fit_algebraic(s, lo, hi);
        f.label = label;
        f.x = x;
        f.expected_rate = expected;
        return f;
    };
    std::vector<DecayFit> out;
    for (std::size_t i = 0; i < sc.targets.size(); ++i) {
        const double s = sc.targets[i];
        out.push_back(fit("besov_s", s, 0.5 * (s - sc.s0), ds.besov[i]));
    }
    const double micro_rate = 0.5 * (1.0 - sc.eps - sc.s0);
    out.push_back(fit("micro_l2", 1.0 - sc.eps, micro_rate, ds.micro_l2));
    out.push_back(fit("weighted_h1_hNm2", 1.0 - sc.eps, micro_rate, ds.weighted));
    out.push_back(fit("mixed_micro", 1.0 - sc.eps, micro_rate, ds.mixed));
    return out;
}

DistributionField synthesize_initial_difference(const SpectralGrid& grid, std::shared_ptr<const VelocitySpace> vs,
                                                double s0, double amplitude, std::uint64_t seed, int k_max) {
    if (!(s0 > -1.5 && s0 <= 0.5)) throw ValidationError("initial difference s0 must lie in (-3/2, 1/2]");
    if (k_max <= 0) k_max = (grid.n_x() - 1) / 3;
    k_max = std::min(k_max, grid.n_x() / 2 - 1);
    while (k_max > 1 && !grid.retained(grid.mode_index(k_max))) --k_max;
    ModeSet ms = synthesize_axis_field(grid, *vs, s0, k_max, seed, false, amplitude);
    DistributionField f(grid, std::move(vs));
    for (std::size_t i = 0; i < ms.modes.size(); ++i)
        f.data.col(static_cast<Eigen::Index>(ms.modes[i])) = ms.data.col(static_cast<Eigen::Index>(i));
    return f;
}

double shell_flatness(const DistributionField& f, double s0) {
    const SpectralGrid& grid = f.grid;
    NormEvaluator ev(grid);
    const auto [jmin, jmax] = ev.block_range();
    const auto b = ev.block_norms(f);
    double r_max = 0;
    for (std::size_t m = 0; m < grid.size(); ++m)
        if (f.data.col(static_cast<Eigen::Index>(m)).squaredNorm() > 0) r_max = std::max(r_max, grid.xi_abs(m));
    // A shell counts when its whole annulus support [3/4, 8/3] 2^j lies below the largest excited |xi|.
    std::vector<double> lv;
    for (int j = jmin; j <= jmax; ++j) {
        const double v = b[static_cast<std::size_t>(j - jmin)];
        if (v <= 0 || std::ldexp(8.0 / 3.0, j) > r_max) continue;
        lv.push_back(std::exp2(j * s0) * v);
    }
    if (lv.empty()) return 0;
    const auto [mn, mx] = std::minmax_element(lv.begin(), lv.end());
    double mean = 0;
    for (double v : lv) mean += v;
    mean /= static_cast<double>(lv.size());
    return (*mx - *mn) / mean;
}

namespace {

// -(v.xi i + L) f~ + sym Gamma(S, f~) - E.grad_v f~ + E.v f~ / 2 at modulation factor theta.
Eigen::MatrixXcd error_rhs(const CauchySolver& solver, const Eigen::MatrixXcd& S, const Eigen::MatrixXcd& D,
                           double theta) {
    const SpectralGrid& grid = solver.grid();
    const VelocitySpace& vs = *solver.space();
    const LinearizedOperator& L = solver.linearized();
    const auto n_vel = static_cast<Eigen::Index>(vs.size());
    const auto n_pts = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXcd out(n_vel, n_pts);
    for (Eigen::Index m = 0; m < n_pts; ++m) {
        const Vec3 xi = grid.xi(static_cast<std::size_t>(m));
        out.col(m) = -(L.L * D.col(m));
        for (Eigen::Index k = 0; k < n_vel; ++k)
            out(k, m) -= cplx(0, dot(vs.grid.node(static_cast<std::size_t>(k)), xi)) * D(k, m);
    }
    auto dealiased = [&](Eigen::MatrixXcd X) {
        for (std::size_t m = 0; m < grid.size(); ++m)
            if (!grid.retained(m)) X.col(static_cast<Eigen::Index>(m)).setZero();
        return X;
    };
    FftPlan plan(grid, vs.size());
    Eigen::MatrixXcd Sp = dealiased(S), Dp = dealiased(D);
    plan.inverse(Sp.data());
    plan.inverse(Dp.data());
    // Point-major copies for the bilinear kernel.
    const Eigen::MatrixXd s_pm = Sp.real().transpose(), d_pm = Dp.real().transpose();
    Eigen::MatrixXd g1(n_pts, n_vel), g2(n_pts, n_vel);
    solver.collision().gamma_raw_batch(s_pm.data(), d_pm.data(), g1.data(), static_cast<std::size_t>(n_pts), 1);
    solver.collision().gamma_raw_batch(d_pm.data(), s_pm.data(), g2.data(), static_cast<std::size_t>(n_pts), 1);
    Eigen::MatrixXd phys = 0.5 * (g1 + g2).transpose();
    for (Eigen::Index x = 0; x < n_pts; ++x) {
        const Eigen::VectorXd col = phys.col(x);
        phys.col(x) = col - vs.nb.project(vs.grid, col);
    }
    const ForceField& E = solver.force();
    if (!E.is_zero() && theta != 0.0 && solver.config().force_terms) {
        Eigen::MatrixXd ex(n_pts, 3);
        std::array<Eigen::VectorXcd, 3> Eb = E.base_spectrum();
        for (int a = 0; a < 3; ++a) {
            SpatialSpectrum e(grid);
            e.coeffs = Eb[a];
            for (std::size_t m = 0; m < grid.size(); ++m)
                if (!grid.retained(m)) e.coeffs[static_cast<Eigen::Index>(m)] = 0;
            ex.col(a) = e.to_physical().real();
        }
        ForceTerm(solver.space()).accumulate(ex, theta, Dp.real(), phys);
    }
    Eigen::MatrixXcd Y = phys.cast<cplx>();
    plan.forward(Y.data());
    out += dealiased(Y);
    if (solver.config().pin_zero_macro) {
        // The pinned stepper holds the macro moments of the zero mode fixed.
        auto z = out.col(static_cast<Eigen::Index>(grid.mode_index(0, 0, 0)));
        const Eigen::VectorXd re = z.real(), im = z.imag();
        z -= (vs.nb.project(vs.grid, re) + cplx(0, 1) * vs.nb.project(vs.grid, im)).cast<cplx>();
    }
    return out;
}

}  // namespace

double error_equation_residual(const CauchySolver& solver, const DistributionField& f1, const DistributionField& f2) {
    DistributionField a = f1, b = f2;
    const double dt = solver.config().dt;
    const ForceField& E = solver.force();
    auto theta = [&](long step) { return E.is_zero() ? 0.0 : E.theta_at_phase(solver.phase(step, 0.0)); };
    const Eigen::MatrixXcd r0 = error_rhs(solver, a.data + b.data, a.data - b.data, theta(a.step));
    const Eigen::MatrixXcd d0 = a.data - b.data;
    const long n0 = a.step;
    solver.step(a);
    solver.step(b);
    const Eigen::MatrixXcd r1 = error_rhs(solver, a.data + b.data, a.data - b.data, theta(n0 + 1));
    const Eigen::MatrixXcd rate = (a.data - b.data - d0) / dt;
    const double den = rate.norm();
    if (den == 0) return 0;
    return (rate - 0.5 * (r0 + r1)).norm() / den;
}

}  // namespace hsboltz

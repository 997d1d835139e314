#include "hsboltz/period_map.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "hsboltz/errors.hpp"
#include "hsboltz/rng.hpp"

namespace hsboltz {

void PeriodMapOptions::validate() const {
    if (!(eps > 0 && eps < 0.5)) throw ValidationError("period map eps must lie in (0, 1/2)");
    if (n_max < 1) throw ValidationError("period map n_max must be >= 1");
    if (!(tol > 0)) throw ValidationError("period map tol must be positive");
    if (period < 0) throw ValidationError("period map period must be nonnegative");
}

std::string PeriodMapReport::json() const {
    nlohmann::ordered_json j;
    j["converged"] = converged;
    j["eps"] = eps;
    j["tol"] = tol;
    j["period"] = period;
    j["contraction"] = contraction;
    j["envelope_constant"] = envelope_constant;
    j["envelope_exponent"] = envelope_exponent;
    j["fitted_exponent"] = fitted_exponent;
    if (residual >= 0) j["periodicity_residual"] = residual;
    auto& it = j["iterates"] = nlohmann::ordered_json::array();
    for (const auto& p : iterates) it.push_back({{"n", p.n}, {"t", p.t}, {"norm", p.norm}, {"d", p.d}, {"envelope", p.envelope}});
    return j.dump(2);
}

std::string PeriodMapReport::csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "n,t,norm,d_n,envelope\n";
    for (const auto& p : iterates) os << p.n << ',' << p.t << ',' << p.norm << ',' << p.d << ',' << p.envelope << '\n';
    return os.str();
}

PeriodMap::PeriodMap(std::shared_ptr<const CauchySolver> solver, PeriodMapOptions opts)
    : solver_(std::move(solver)), opts_(opts), ev_(solver_->grid()) {
    opts_.validate();
    const double dt = solver_->config().dt;
    if (solver_->force().stationary()) {
        if (!(opts_.period > 0)) throw ValidationError("a stationary force needs an explicit map period");
        period_ = opts_.period;
        steps_ = std::lround(period_ / dt);
        if (steps_ < 1 || std::abs(steps_ * dt - period_) > 1e-9 * period_)
            throw ValidationError("map period must be an integer multiple of dt");
    } else {
        period_ = solver_->force().period();
        steps_ = solver_->steps_per_period();
    }
}

void PeriodMap::advance(DistributionField& f) const {
    for (long i = 0; i < steps_; ++i) solver_->step(f);
}

double PeriodMap::norm(const DistributionField& g) const {
    const SpectralGrid& grid = g.grid;
    const std::size_t z = grid.mode_index(0, 0, 0);
    const double zero = std::sqrt(grid.volume() * g.vs->grid.weight()) * g.data.col(static_cast<Eigen::Index>(z)).norm();
    return ev_.besov(g, 1.0 - opts_.eps, BesovQ::Inf) + ev_.sobolev(g, solver_->config().N - 1) + zero;
}

double PeriodMap::distance(const DistributionField& a, const DistributionField& b) const {
    DistributionField d = a;
    d.data -= b.data;
    return norm(d);
}

std::pair<DistributionField, PeriodMapReport> PeriodMap::serrin_iterate(const DistributionField* f0) const {
    PeriodMapReport rep;
    rep.eps = opts_.eps;
    rep.tol = opts_.tol;
    rep.period = period_;
    rep.envelope_exponent = 0.25 - 0.5 * opts_.eps;
    DistributionField prev = f0 ? *f0 : solver_->zero_field();
    prev.time = 0;
    prev.step = 0;
    DistributionField cur = prev;
    advance(cur);  // f(T)
    double norm_prev = norm(cur);
    for (long n = 1; n <= opts_.n_max; ++n) {
        prev = cur;
        advance(cur);  // f((n+1)T)
        PeriodIterate it;
        it.n = n;
        it.t = static_cast<double>(n) * period_;
        it.norm = norm_prev;
        it.d = distance(cur, prev);
        rep.iterates.push_back(it);
        if (progress_) progress_(it);
        norm_prev = norm(cur);
        if (it.d < opts_.tol) {
            rep.converged = true;
            break;
        }
    }
    std::vector<double> ratios;
    std::vector<std::pair<double, double>> series;
    for (std::size_t i = 0; i < rep.iterates.size(); ++i) {
        const auto& p = rep.iterates[i];
        rep.envelope_constant = std::max(rep.envelope_constant, p.d * std::pow(1.0 + p.t, rep.envelope_exponent));
        if (i > 0 && rep.iterates[i - 1].d > 0) ratios.push_back(p.d / rep.iterates[i - 1].d);
        if (p.d > 0) series.emplace_back(p.t, p.d);
    }
    for (auto& p : rep.iterates) p.envelope = rep.envelope_constant * std::pow(1.0 + p.t, -rep.envelope_exponent);
    if (!ratios.empty()) {
        std::nth_element(ratios.begin(), ratios.begin() + static_cast<long>(ratios.size() / 2), ratios.end());
        rep.contraction = ratios[ratios.size() / 2];
    }
    if (series.size() >= 3) rep.fitted_exponent = fit_algebraic(series, series.front().first, series.back().first).fitted_rate;
    if (!rep.converged) {
        std::ostringstream os;
        os << "period map did not converge in " << opts_.n_max << " periods; d_n =";
        for (const auto& p : rep.iterates) os << ' ' << p.d;
        throw NumericalError(os.str());
    }
    DistributionField out = cur;
    if (opts_.extrapolate && rep.contraction > 0 && rep.contraction < 1) {
        const double r = rep.contraction / (1.0 - rep.contraction);
        out.data += r * (cur.data - prev.data);
    }
    out.time = 0;
    out.step = 0;
    return {std::move(out), std::move(rep)};
}

double PeriodMap::verify_periodicity(const DistributionField& fT0) const {
    DistributionField f = fT0;
    f.time = 0;
    f.step = 0;
    advance(f);
    return distance(f, fT0);
}

DistributionField stationary_reference(const CauchySolver& solver, const SpatialSpectrum& phi, bool energy_consistent,
                                       double* mass_constant, double* temperature) {
    const SpectralGrid& grid = solver.grid();
    const auto vs = solver.space();
    const Eigen::VectorXd p = phi.to_physical().real();
    const double n_pts = static_cast<double>(p.size());
    auto mass_const = [&](double T) { return n_pts / (-p.array() / T).exp().sum(); };
    // Energy balance per unit volume: (3/2) T + <phi C e^{-phi/T}> - (3/2) - <phi>.
    auto balance = [&](double T) {
        const double C = mass_const(T);
        return 1.5 * T + (p.array() * C * (-p.array() / T).exp()).sum() / n_pts - 1.5 - p.mean();
    };
    double T = 1.0;
    if (energy_consistent) {
        double lo = 0.5, hi = 1.5;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (balance(mid) > 0 ? hi : lo) = mid;
        }
        T = 0.5 * (lo + hi);
    }
    const double C = mass_const(T);
    if (mass_constant) *mass_constant = C;
    if (temperature) *temperature = T;
    const auto n = static_cast<Eigen::Index>(vs->size());
    Eigen::VectorXd MT(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Vec3& v = vs->grid.node(static_cast<std::size_t>(k));
        MT[k] = std::pow(2.0 * 3.14159265358979323846 * T, -1.5) * std::exp(-0.5 * dot(v, v) / T);
    }
    Eigen::MatrixXcd phys(n, static_cast<Eigen::Index>(grid.size()));
    for (Eigen::Index x = 0; x < phys.cols(); ++x) {
        const double rho = C * std::exp(-p[x] / T);
        phys.col(x) = ((rho * MT - vs->mt.M).cwiseQuotient(vs->mt.sqrtM)).cast<cplx>();
    }
    FftPlan plan(grid, vs->size());
    plan.forward(phys.data());
    DistributionField f(grid, vs);
    f.data = phys;
    f.symmetrize();
    return f;
}

double relative_distribution_error(const DistributionField& f, const DistributionField& f_ref) {
    const auto& vs = *f.vs;
    FftPlan plan(f.grid, vs.size());
    Eigen::MatrixXcd a = f.data, b = f_ref.data;
    plan.inverse(a.data());
    plan.inverse(b.data());
    double num = 0, den = 0;
    for (Eigen::Index x = 0; x < a.cols(); ++x)
        for (Eigen::Index k = 0; k < a.rows(); ++k) {
            const double s = vs.mt.sqrtM[k];
            const double diff = s * (a(k, x).real() - b(k, x).real());
            const double F = vs.mt.M[k] + s * b(k, x).real();
            num += diff * diff;
            den += F * F;
        }
    return std::sqrt(num / den);
}

StationaryOracleResult stationary_oracle(const PeriodMap& map) {
    const CauchySolver& solver = map.solver();
    const ForceField& E = solver.force();
    StationaryOracleResult res;
    if (E.is_zero()) {
        auto [fT, rep] = map.serrin_iterate();
        res.error = relative_distribution_error(fT, solver.zero_field());
        res.report = rep;
        return res;
    }
    const SpatialSpectrum* phi = E.potential_spectrum();
    if (!phi || !E.stationary()) throw ValidationError("stationary oracle needs a stationary potential force");
    res.max_phi = phi->to_physical().real().cwiseAbs().maxCoeff();
    DistributionField ref = stationary_reference(solver, *phi, false, &res.mass_constant);
    DistributionField ref_e = stationary_reference(solver, *phi, true, nullptr, &res.temperature);
    auto [fT, rep] = map.serrin_iterate();
    res.error = relative_distribution_error(fT, ref);
    res.error_energy = relative_distribution_error(fT, ref_e);
    res.report = std::move(rep);
    return res;
}

DecayFit perturbation_return(const PeriodMap& map, const DistributionField& fT0, const DistributionField& g0, double s,
                             double expected_rate, double horizon, int n_samples) {
    const CauchySolver& solver = map.solver();
    const long n_hi = std::lround(horizon / solver.config().dt);
    if (n_hi < 1) throw ValidationError("perturbation horizon shorter than one step");
    NormEvaluator ev(solver.grid());
    DistributionField a = fT0, b = fT0;
    a.time = b.time = 0;
    a.step = b.step = 0;
    b.data += g0.data;
    std::vector<std::pair<double, double>> samples;
    evolve_pair(solver, b, a, log_spaced_steps(n_hi, n_samples),
                [&](std::size_t, const DistributionField& x, const DistributionField& y) {
                    DistributionField d = x;
                    d.data -= y.data;
                    samples.emplace_back(x.time, ev.sobolev(d, s));
                });
    DecayFit fit = fit_algebraic(samples, horizon / 4, horizon);
    fit.label = "perturbation_return";
    fit.x = s;
    fit.expected_rate = expected_rate;
    return fit;
}

DistributionField admissible_random_start(const CauchySolver& solver, double amplitude, std::uint64_t seed) {
    const SpectralGrid& grid = solver.grid();
    const auto vs = solver.space();
    DistributionField f(grid, vs);
    CounterRng rng(seed, 0x5e77);
    for (std::size_t m = 0; m < grid.size(); ++m) {
        if (!grid.retained(m) || grid.conjugate(m) < m) continue;
        const double r = grid.xi_abs(m);
        const Eigen::VectorXcd p = random_velocity_profile(*vs, rng.bits_at(m), false);
        const cplx phase = std::polar(1.0, 2.0 * 3.14159265358979323846 * rng.uniform_at(m + 0x100000));
        f.data.col(static_cast<Eigen::Index>(m)) = amplitude * phase * p / (1.0 + r * r);
    }
    const std::size_t z = grid.mode_index(0, 0, 0);
    auto col = f.data.col(static_cast<Eigen::Index>(z));
    col = col.real().cast<cplx>();
    col -= vs->nb.project(vs->grid, Eigen::VectorXd(col.real())).cast<cplx>();
    f.symmetrize();
    return f;
}

}  // namespace hsboltz

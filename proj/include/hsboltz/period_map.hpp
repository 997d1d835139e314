#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hsboltz/cauchy_solver.hpp"
#include "hsboltz/linear_semigroup.hpp"

namespace hsboltz {

struct PeriodMapOptions {
    double eps = 0.1;        ///< convergence norm L^2_v(B^{1-eps}_{2,inf} cap H^{N-1})
    int n_max = 200;         ///< maximum number of periods
    double tol = 1e-9;       ///< stop when d_n < tol
    double period = 0;       ///< map length for a stationary force (ignored for periodic forces)
    bool extrapolate = false;  ///< geometric extrapolation of the candidate from the last two iterates

    void validate() const;
};

struct PeriodIterate {
    long n = 0;
    double t = 0;
    double norm = 0;      ///< ||f(nT)|| in the convergence norm
    double d = 0;         ///< ||f((n+1)T) - f(nT)||
    double envelope = 0;  ///< C (1 + nT)^{-1/4 + eps/2} with the measured constant C
};

struct PeriodMapReport {
    std::vector<PeriodIterate> iterates;
    bool converged = false;
    double eps = 0.1;
    double tol = 0;
    double period = 0;
    double contraction = 0;        ///< median of d_{n+1} / d_n
    double envelope_constant = 0;  ///< max_n d_n (1 + nT)^{1/4 - eps/2}
    double envelope_exponent = 0;  ///< 1/4 - eps/2
    double fitted_exponent = 0;    ///< algebraic decay exponent fitted to d_n (0 with fewer than 3 iterates)
    double residual = -1;          ///< periodicity residual when computed (-1 otherwise)

    std::string json() const;
    /// Columns n, t, norm, d_n, envelope.
    std::string csv() const;
};

/// Time-T map of the Cauchy solver and Serrin's iteration from f = 0.
class PeriodMap {
public:
    PeriodMap(std::shared_ptr<const CauchySolver> solver, PeriodMapOptions opts);

    const CauchySolver& solver() const { return *solver_; }
    const PeriodMapOptions& options() const { return opts_; }
    double period() const { return period_; }
    long steps_per_map() const { return steps_; }

    /// One period: steps_per_map() solver steps from the current step index.
    void advance(DistributionField& f) const;
    /// L^2_v(B^{1-eps}_{2,inf}) + L^2_v(H^{N-1}) + L^2_v norm of the zero mode.
    double norm(const DistributionField& g) const;
    double distance(const DistributionField& a, const DistributionField& b) const;

    /// Iterates from f0 (zero when null); returns the candidate f_T(0) at step 0 and the report.
    /// Throws NumericalError carrying the d_n sequence when n_max is reached without convergence.
    std::pair<DistributionField, PeriodMapReport> serrin_iterate(const DistributionField* f0 = nullptr) const;
    /// ||f(T) - f_T0|| after one period from f_T0.
    double verify_periodicity(const DistributionField& fT0) const;

    /// Called after every completed iterate (progress logging).
    void set_progress(std::function<void(const PeriodIterate&)> fn) { progress_ = std::move(fn); }

private:
    std::function<void(const PeriodIterate&)> progress_;
    std::shared_ptr<const CauchySolver> solver_;
    PeriodMapOptions opts_;
    double period_ = 0;
    long steps_ = 0;
    NormEvaluator ev_;
};

struct StationaryOracleResult {
    double error = 0;          ///< ||F - C e^{-phi} M|| / ||C e^{-phi} M|| in L^2_{x,v}
    double error_energy = 0;   ///< diagnostic: same against C' e^{-phi/T'} M_{T'} (mass and total energy of the start)
    double max_phi = 0;
    double mass_constant = 1;  ///< C = |box| / int e^{-phi}
    double temperature = 1;    ///< T'
    PeriodMapReport report;
};

/// Reference perturbation (F_ref - M) / sqrt(M) for a potential force, with
/// F_ref = C e^{-phi} M (temperature 1), or with energy_consistent
/// F_ref = C' e^{-phi/T'} M_{T'}, where C' fixes the mass |box| and T' solves
/// (3/2) T' |box| + int phi C' e^{-phi/T'} = (3/2) |box| + int phi (the total energy of F = M).
DistributionField stationary_reference(const CauchySolver& solver, const SpatialSpectrum& phi, bool energy_consistent,
                                       double* mass_constant, double* temperature = nullptr);
/// Relative L^2_{x,v} distance between F = M + sqrt(M) f and F_ref = M + sqrt(M) f_ref, relative to F_ref.
double relative_distribution_error(const DistributionField& f, const DistributionField& f_ref);
/// Serrin iteration under a stationary potential force compared with the closed-form state.
StationaryOracleResult stationary_oracle(const PeriodMap& map);

/// Decay of ||f - f_T||_{L^2_v(H^s)} between the solutions started from f_T0 + g0 and f_T0, fitted
/// algebraically over [horizon / 4, horizon].
DecayFit perturbation_return(const PeriodMap& map, const DistributionField& fT0, const DistributionField& g0, double s,
                             double expected_rate, double horizon, int n_samples = 24);

/// Random admissible start: micro profile per retained mode with the zero-mode moments removed.
DistributionField admissible_random_start(const CauchySolver& solver, double amplitude, std::uint64_t seed);

}  // namespace hsboltz

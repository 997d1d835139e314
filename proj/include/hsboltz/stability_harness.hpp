#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hsboltz/cauchy_solver.hpp"
#include "hsboltz/linear_semigroup.hpp"

namespace hsboltz {

/// Two solutions under the same force whose initial difference lies in L^2_v(B^{s0}_{2,inf}).
struct StabilityScenario {
    DistributionField f1, f2;    ///< initial pair
    double s0 = -1.4;            ///< regularity of the initial difference, in (-3/2, 1/2]
    std::vector<double> targets;  ///< regularity indices s >= s0 of the monitored difference norms
    double eps = 0.1;
    double horizon = 100;
    double fit_lo_fraction = 0.25;  ///< fit window [fraction * horizon, horizon]
    int n_samples = 24;

    /// Throws ValidationError naming the violated constraint.
    void validate() const;
};

/// Time series of the difference norms at shared sample times.
struct DifferenceSeries {
    std::vector<double> t;
    std::vector<std::vector<double>> besov;  ///< per target: L^2_v(B^s_{2,inf}) + L^2_v(H^{N-1})
    std::vector<double> micro_l2;            ///< ||(I - P) f~||
    std::vector<double> weighted;            ///< ||<v> f~||_{H^1} + ||<v> f~||_{H^{N-2}}
    std::vector<double> mixed;               ///< sum of mixed d_x^alpha d_v^beta micro norms
};

/// Evolves the pair, records the difference series and fits every family algebraically.
/// Targets are fitted against (s - s0)/2; the micro, weighted and mixed families against (1 - eps - s0)/2.
/// The series is stored before fitting, so it is available even when a fit throws (e.g. an identical pair).
std::vector<DecayFit> run_difference_decay(const CauchySolver& solver, const StabilityScenario& sc,
                                           DifferenceSeries* series = nullptr);

/// Random field on the axis modes 1..k_max (k_max = 0: every retained axis mode) with
/// 2^{j s0} ||Delta_j f|| flat across shells, randomized macro part, deterministic per seed.
DistributionField synthesize_initial_difference(const SpectralGrid& grid, std::shared_ptr<const VelocitySpace> vs,
                                                double s0, double amplitude, std::uint64_t seed, int k_max = 0);

/// (max - min) / mean of 2^{j s0} ||Delta_j f|| over the shells fully inside the retained band.
double shell_flatness(const DistributionField& f, double s0);

/// Residual of the difference equation
///   d_t f~ + v.grad_x f~ + L f~ - Gamma(f1 + f2, f~) + E.grad_v f~ - E.v f~ / 2 = 0
/// over one step: ||(f~(t+dt) - f~(t))/dt - (R(t) + R(t+dt))/2|| / ||(f~(t+dt) - f~(t))/dt||, with R evaluated
/// through the bilinear collision kernel and the velocity stencil independently of the stepper.
double error_equation_residual(const CauchySolver& solver, const DistributionField& f1, const DistributionField& f2);

}  // namespace hsboltz

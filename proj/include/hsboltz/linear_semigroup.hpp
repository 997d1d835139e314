#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hsboltz/collision_ops.hpp"
#include "hsboltz/fourier_lp.hpp"

namespace hsboltz {

/// Dense matrix exponential by Pade(13) scaling and squaring (products through BLAS zgemm).
Eigen::MatrixXcd expm(const Eigen::MatrixXcd& A);

/// Complex matrix product through BLAS.
Eigen::MatrixXcd zgemm(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B);

/// B(xi) = -i diag(v.xi) - L on the velocity nodes.
struct ModeOperator {
    Vec3 xi{0, 0, 0};
    Eigen::MatrixXcd B;

    static ModeOperator build(const LinearizedOperator& L, const Vec3& xi);
    std::size_t size() const { return static_cast<std::size_t>(B.rows()); }
};

/// exp(tau B) together with its repeated squares, so exp(m tau B) f can be applied for any
/// integer m < 2^{levels} by matrix-vector products only.
class ModePropagator {
public:
    ModePropagator(const ModeOperator& op, double tau, int levels);

    double tau() const { return tau_; }
    long max_steps() const { return (1L << powers_.size()) - 1; }
    /// exp(m tau B) f.
    Eigen::VectorXcd apply(const Eigen::VectorXcd& f, long m) const;
    /// exp(m tau B^*) f, the adjoint semigroup (B^* = B^H since L is symmetric).
    Eigen::VectorXcd apply_adjoint(const Eigen::VectorXcd& f, long m) const;
    const Eigen::MatrixXcd& power(int k) const { return powers_[static_cast<std::size_t>(k)]; }

private:
    double tau_;
    std::vector<Eigen::MatrixXcd> powers_;  ///< exp(2^k tau B)
};

/// exp(t B) f0 by one dense exponential.
Eigen::VectorXcd propagate_mode(const ModeOperator& op, const Eigen::VectorXcd& f0, double t);

/// Matrix-free exp(t A) v by restarted Arnoldi with a posteriori step control.
/// Throws NumericalError when a substep cannot meet tol.
struct KrylovStats {
    int substeps = 0;
    int rejected = 0;
    double error_estimate = 0;
};
Eigen::VectorXcd krylov_expv(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply_A,
                             const Eigen::VectorXcd& v, double t, double tol = 1e-10, int m = 30,
                             KrylovStats* stats = nullptr);

/// Fitted decay of one observable.
struct DecayFit {
    std::string label;
    std::string model;     ///< "exponential": a ~ C e^{-rate t}; "algebraic": a ~ C (1+t)^{-rate}
    double x = 0;          ///< |xi| or regularity index
    double fitted_rate = 0;
    double expected_rate = 0;
    double prefactor = 0;
    double residual = 0;   ///< RMS of log-amplitude residuals
    std::vector<std::pair<double, double>> samples;
};

DecayFit fit_exponential(const std::vector<std::pair<double, double>>& samples, double t_lo, double t_hi);
DecayFit fit_algebraic(const std::vector<std::pair<double, double>>& samples, double t_lo, double t_hi);

/// CSV columns: label, x, fitted_rate, expected_rate, residual.
std::string decay_fits_csv(const std::vector<DecayFit>& fits);
std::string decay_fits_json(const std::vector<DecayFit>& fits, bool with_samples = true);

struct PointwiseDecayOptions {
    double window_lo = 2.0, window_hi = 20.0;  ///< in units of 1/min(1,|xi|^2)
    int n_samples = 19;
    double heat_threshold = 1.0;               ///< |xi| below which the heat branch is expected
    std::uint64_t seed = 1;
};

struct PointwiseDecayReport {
    std::vector<DecayFit> fits;       ///< exponential fits per |xi|, x = |xi|
    double kappa1 = 0;                ///< least-squares slope of rate against min(1,|xi|^2)
    double low_band_spread = 0;       ///< (max-min)/mean of rate/|xi|^2 over |xi| < heat_threshold
    double high_band_spread = 0;      ///< (max-min)/mean of rate over |xi| >= heat_threshold
};

/// Generic random initial velocity profile (deterministic per seed), unit L^2_v norm.
Eigen::VectorXcd random_velocity_profile(const VelocitySpace& vs, std::uint64_t seed, bool micro_only);

/// Exponential decay rates of ||exp(t B(xi)) f0||_{L^2_v} along xi = |xi| e_1.
PointwiseDecayReport verify_pointwise_decay(const LinearizedOperator& L, const std::vector<double>& xi_abs,
                                            const PointwiseDecayOptions& opt = {});

/// Amplitude ||exp(t B(xi)) f0|| at fixed t for micro data f0 and its log-log slope in |xi|.
struct MicroScalingReport {
    std::vector<std::pair<double, double>> amplitude;  ///< (|xi|, amplitude)
    double slope = 0;
};
MicroScalingReport micro_amplitude_scaling(const LinearizedOperator& L, const std::vector<double>& xi_abs, double t,
                                           std::uint64_t seed = 7);

/// Largest |xi| on the list where rate / |xi|^2 stays within rel_tol of its small-|xi| value.
double heat_branch_threshold(const PointwiseDecayReport& rep, double rel_tol = 0.1);

struct BesovDecayOptions {
    double s = 0.5, s0 = -1.4;
    int j0 = -1;             ///< low-pass index for S_{j0}
    double tau = 0.5;        ///< propagator step; samples at integer multiples
    double t_hi = 1000;      ///< horizon
    double fit_lo = 2.0;     ///< algebraic fit window [fit_lo, t_hi]
    double exp_fit_hi = 0;   ///< exponential fit window end for the high part (0: automatic)
    int n_samples = 40;
    std::uint64_t seed = 11;
    bool micro_only = false;
    bool adjoint = false;
};

struct BesovDecayReport {
    DecayFit low;   ///< ||S_{j0} e^{tB} f0||_{L^2_v(B^s_{2,inf})}, algebraic
    DecayFit high;  ///< ||(1-S_{j0}) e^{tB} f0||, exponential
    std::vector<double> initial_profile;  ///< 2^{j s0} ||Delta_j f0|| over the populated shells
};

/// Axis-mode initial field with ||Delta_j f0|| proportional to 2^{-j s0} on every populated shell.
ModeSet synthesize_axis_field(const SpectralGrid& grid, const VelocitySpace& vs, double s0, int k_max,
                              std::uint64_t seed, bool micro_only, double amplitude = 1.0);

/// Evolves one or more variants of an axis-mode field with a shared set of propagators:
/// variants are (f0, adjoint flag); returns per variant the sampled ModeSets at `times`.
std::vector<std::vector<ModeSet>> evolve_axis_fields(const LinearizedOperator& L, const std::vector<ModeSet>& f0,
                                                     const std::vector<bool>& adjoint, double tau,
                                                     const std::vector<long>& steps);

/// Log-spaced integer step counts in [1, m_hi] (unique, ascending, starting at 0).
std::vector<long> log_spaced_steps(long m_hi, int n);

/// Besov decay of the semigroup on axis-mode data for several variants at once.
std::vector<BesovDecayReport> verify_besov_decay(const LinearizedOperator& L, const SpectralGrid& grid,
                                                 const std::vector<BesovDecayOptions>& variants);

}  // namespace hsboltz

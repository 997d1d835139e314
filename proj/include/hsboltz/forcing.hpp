#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "hsboltz/fourier_lp.hpp"

namespace hsboltz {

enum class ForceKind { Zero, Potential, Rotational, CustomSpectral };
enum class Modulation { Constant, Sine, SmoothedSquare };

/// Periodic scalar profile theta(phase), phase in [0, 1) as a fraction of the period.
struct TimeProfile {
    Modulation kind = Modulation::Constant;
    double sharpness = 4.0;  ///< tanh steepness of the smoothed square

    double theta(double phase) const;
    /// max |theta| over a period.
    double max_abs() const { return 1.0; }
};

/// Smooth radial window: 1 for r <= r_in, 0 for r >= r_out, with its r-derivative.
struct RadialWindow {
    double r_in = 0, r_out = 0;
    double value(double r) const;
    double derivative(double r) const;
};

/// External force E(t, x) = theta(t) E_base(x) on a periodic box, stored as the Fourier
/// coefficients of its three components.
class ForceField {
public:
    ForceField() = default;

    static ForceField zero(const SpectralGrid& grid);
    /// E = -grad phi computed spectrally from the coefficients of phi; stationary.
    static ForceField potential(const SpatialSpectrum& phi);
    /// Potential field of the periodised Gaussian below (closed-form evaluate available).
    static ForceField gaussian(const SpectralGrid& grid, double amplitude, double sigma);
    /// Rotational field eps (-x2, x1, 0) <x>^{-2m}, periodised through a windowed stream function.
    static ForceField rotational(const SpectralGrid& grid, double eps, double m);
    /// Coefficients from JSON: {"modes": [{"k": [k1,k2,k3], "E": [[re,im],[re,im],[re,im]]}, ...]};
    /// the conjugate partner of each listed mode is filled in.
    static ForceField custom_spectral(const SpectralGrid& grid, const std::string& json_path);

    /// theta(t) E_base with period T.
    ForceField modulated(double T, TimeProfile profile) const;

    ForceKind kind() const { return kind_; }
    const SpectralGrid& grid() const { return grid_; }
    bool is_zero() const { return kind_ == ForceKind::Zero; }
    bool stationary() const { return !std::isfinite(period_) || profile_.kind == Modulation::Constant; }
    double period() const { return period_; }
    const TimeProfile& profile() const { return profile_; }
    double eps() const { return eps_; }
    double decay_exponent() const { return m_; }

    /// Modulation at a phase fraction in [0, 1).
    double theta_at_phase(double phase) const { return stationary() ? 1.0 : profile_.theta(phase); }
    /// Modulation at time t (phase reduced with fmod; use theta_at_phase for bit-exact periodicity).
    double theta(double t) const;

    /// Base coefficients per component (n_modes each).
    const std::array<Eigen::VectorXcd, 3>& base_spectrum() const { return base_; }
    /// theta(t) * base coefficients.
    std::array<Eigen::VectorXcd, 3> spectrum(double t) const;
    /// Base field at physical samples (n_modes x 3, real), from the coefficients.
    Eigen::MatrixXd base_physical() const;
    /// Closed-form base value at x (potential Gaussian and rotational kinds).
    Vec3 evaluate(const Vec3& x) const;

    /// Spectral divergence and curl of the base field.
    SpatialSpectrum divergence() const;
    std::array<SpatialSpectrum, 3> curl() const;
    /// Curl of the base field evaluated at the origin from its Fourier series.
    Vec3 curl_at_origin() const;

    /// Gaussian potential phi = A sum_n exp(-|x - nL|^2 / (2 sigma^2)) with exact coefficients.
    static SpatialSpectrum gaussian_potential(const SpectralGrid& grid, double amplitude, double sigma);
    double gaussian_amplitude() const { return phi_amp_; }
    double gaussian_sigma() const { return phi_sigma_; }
    const SpatialSpectrum* potential_spectrum() const { return phi_ ? &*phi_ : nullptr; }

private:
    static ForceField potential_impl(const SpatialSpectrum& phi, double amp, double sigma);
    ForceKind kind_ = ForceKind::Zero;
    SpectralGrid grid_;
    std::array<Eigen::VectorXcd, 3> base_;
    double period_ = std::numeric_limits<double>::infinity();
    TimeProfile profile_;
    double eps_ = 0, m_ = 0;
    RadialWindow window_;
    double phi_amp_ = 0, phi_sigma_ = 0;
    std::optional<SpatialSpectrum> phi_;
};

/// Vector-field block norms sqrt(sum_a ||Delta_j E_a||^2).
std::vector<double> vector_block_norms(const NormEvaluator& ev, const std::array<Eigen::VectorXcd, 3>& E);
/// ||E||_{B^s_{2,inf}} and ||E||_{H^N} of a vector field.
double vector_besov_inf(const NormEvaluator& ev, const std::array<Eigen::VectorXcd, 3>& E, double s);
double vector_sobolev(const NormEvaluator& ev, const std::array<Eigen::VectorXcd, 3>& E, double s);
/// Inhomogeneous H^N norm (zero mode included), as used on the right of the energy inequality.
double vector_inhomogeneous_sobolev(const SpectralGrid& grid, const std::array<Eigen::VectorXcd, 3>& E, int N);

/// Sup over n_samples phases of ||E(t)||_{B^{-3/2}_{2,inf}} + ||E(t)||_{H^N}; warns above delta.
NormReport force_norm_report(const ForceField& E, int N, int n_samples = 64,
                             double delta = std::numeric_limits<double>::infinity());

}  // namespace hsboltz

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hsboltz/velocity_space.hpp"

namespace hsboltz {

using cplx = std::complex<double>;

/// Periodic box [-L/2, L/2)^d sampled at n_x points per axis; modes in FFT order.
class SpectralGrid {
public:
    SpectralGrid() = default;
    SpectralGrid(int d, int n_x, double L_box);

    int dim() const { return d_; }
    int n_x() const { return n_x_; }
    double box() const { return L_; }
    std::size_t size() const { return n_modes_; }
    double volume() const;
    double dx() const { return L_ / n_x_; }

    /// Integer wavenumbers of mode m (unused axes are 0).
    std::array<int, 3> wavenumbers(std::size_t m) const;
    Vec3 xi(std::size_t m) const;
    double xi_abs(std::size_t m) const { return norm(xi(m)); }
    /// Physical coordinates of sample p (same multi-index layout as the modes).
    Vec3 point(std::size_t p) const;
    /// Mode index of integer wavenumbers (negative values wrap).
    std::size_t mode_index(int k1, int k2 = 0, int k3 = 0) const;
    /// Index of -k.
    std::size_t conjugate(std::size_t m) const;
    /// 2/3-rule mask: every |k_i| <= n_x/3.
    bool retained(std::size_t m) const;
    double xi_min() const { return 2.0 * 3.14159265358979323846 / L_; }

private:
    int d_ = 1, n_x_ = 0;
    double L_ = 0;
    std::size_t n_modes_ = 0;
};

/// FFTW wrapper for batches of fields laid out as (n_batch x n_modes) column-major,
/// i.e. element (b, m) at b + m * n_batch. Plans use FFTW_ESTIMATE so they are reproducible.
class FftPlan {
public:
    FftPlan(const SpectralGrid& grid, std::size_t n_batch);
    ~FftPlan();
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    /// Physical samples -> Fourier-series coefficients (scaled by 1/N).
    void forward(cplx* data) const;
    /// Coefficients -> physical samples.
    void inverse(cplx* data) const;

private:
    void* fwd_ = nullptr;
    void* inv_ = nullptr;
    std::size_t n_total_ = 0;
    std::size_t n_modes_ = 0;
};

/// Scalar field g(x) = sum_k c_k exp(i k.x).
struct SpatialSpectrum {
    SpectralGrid grid;
    Eigen::VectorXcd coeffs;

    explicit SpatialSpectrum(const SpectralGrid& g) : grid(g), coeffs(Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(g.size()))) {}
    /// L^2(box) norm from the coefficients (Parseval).
    double l2_norm() const;
    /// Physical samples (inverse transform).
    Eigen::VectorXcd to_physical() const;
    static SpatialSpectrum from_physical(const SpectralGrid& g, const Eigen::VectorXcd& samples);
    bool is_hermitian(double tol) const;
};

/// Distribution perturbation f(t, xi, v): (n_vel x n_modes) complex coefficients.
struct DistributionField {
    SpectralGrid grid;
    std::shared_ptr<const VelocitySpace> vs;
    Eigen::MatrixXcd data;
    double time = 0;
    long step = 0;

    DistributionField(const SpectralGrid& g, std::shared_ptr<const VelocitySpace> v);
    std::size_t n_vel() const { return static_cast<std::size_t>(data.rows()); }
    std::size_t n_modes() const { return static_cast<std::size_t>(data.cols()); }
    /// Physical-space L^2_{x,v} norm.
    double l2_norm() const;
    /// Enforces c(-k) = conj(c(k)) by averaging each pair.
    void symmetrize();
    double hermitian_defect() const;
};

/// Sparse collection of modes (n_vel x n_sel), used where a full field would not fit.
struct ModeSet {
    SpectralGrid grid;
    std::vector<std::size_t> modes;
    Eigen::MatrixXcd data;
};

/// Dyadic partition of unity built from a C-infinity radial cutoff.
class DyadicFilter {
public:
    /// chi(r) = 1 for r <= 3/4, 0 for r >= 4/3, smooth and non-increasing in between.
    static double chi(double r);
    /// phi(r) = chi(r/2) - chi(r).
    static double phi(double r);
    /// Block multiplier phi(2^{-j} r).
    static double block(int j, double r) { return phi(std::ldexp(r, -j)); }
    /// Low-pass multiplier of S_j = sum_{j' < j} Delta_{j'}, i.e. chi(2^{-j} r).
    static double low_pass(int j, double r) { return chi(std::ldexp(r, -j)); }

    /// Blocks that touch at least one nonzero mode of the grid.
    static std::pair<int, int> resolvable_range(const SpectralGrid& grid);
};

SpatialSpectrum lp_block(const SpatialSpectrum& g, int j);
DistributionField lp_block(const DistributionField& f, int j);
/// Multiplies every mode by m(|xi|).
DistributionField apply_radial_multiplier(const DistributionField& f, const std::function<double(double)>& m);

/// Summability index of a Besov norm.
enum class BesovQ { One, Two, Inf };

/// Per-norm label -> value; ordered so serialisation is deterministic.
struct NormReport {
    std::map<std::string, double> values;
    double& operator[](const std::string& k) { return values[k]; }
    double at(const std::string& k) const { return values.at(k); }
    bool all_finite_nonnegative() const;
};

/// Admissible regularity window for norm evaluation on a grid.
struct RegularityRange {
    double s_min = -4.0, s_max = 8.0;
};

/// Norms on a fixed grid; block ranges and mode orderings are cached.
class NormEvaluator {
public:
    NormEvaluator(const SpectralGrid& grid, RegularityRange range = {});

    const SpectralGrid& grid() const { return grid_; }
    std::pair<int, int> block_range() const { return {j_min_, j_max_}; }

    /// ||g||_{B^s_{2,q}} for a scalar field.
    double besov(const SpatialSpectrum& g, double s, BesovQ q) const;
    /// ||g||_{H^s} (homogeneous) for a scalar field.
    double sobolev(const SpatialSpectrum& g, double s) const;
    /// Per-block L^2 norms ||Delta_j g|| for j in block_range.
    std::vector<double> block_norms(const SpatialSpectrum& g) const;

    /// L^2_v(B^s_{2,q}): Besov norm in x per velocity node, then L^2_v.
    double besov(const DistributionField& f, double s, BesovQ q) const;
    /// L^2_v(H^s).
    double sobolev(const DistributionField& f, double s) const;
    /// Per-block ||Delta_j f||_{L^2_{x,v}}.
    std::vector<double> block_norms(const DistributionField& f) const;
    /// L^2_{x,v}.
    double l2(const DistributionField& f) const;

    /// Same norms on a sparse mode set (absent modes are zero).
    double besov(const ModeSet& f, double dv, double s, BesovQ q) const;
    double sobolev(const ModeSet& f, double dv, double s) const;
    std::vector<double> block_norms(const ModeSet& f, double dv) const;

    /// Energy norm with its four groups and the total.
    NormReport energy(const DistributionField& f, double s, int N) const;

    void check_regularity(double s) const;

private:
    SpectralGrid grid_;
    RegularityRange range_;
    int j_min_ = 0, j_max_ = -1;
    std::vector<std::size_t> all_modes_;
    /// Per-node shell energies vol * sum_m phi_j^2 |c_{k,m}|^2 (n_vel x n_blocks).
    Eigen::MatrixXd node_block_energy(const std::vector<std::size_t>& modes, const Eigen::MatrixXcd& data) const;
    double besov_impl(const std::vector<std::size_t>& modes, const Eigen::MatrixXcd& data, double dv, double s,
                      BesovQ q) const;
    double sobolev_impl(const std::vector<std::size_t>& modes, const Eigen::MatrixXcd& data, double dv,
                        double s) const;
    std::vector<double> block_norms_impl(const std::vector<std::size_t>& modes, const Eigen::MatrixXcd& data,
                                         double dv) const;
};

/// Besov reduction of per-block L^2 norms: (sum_j (2^{js} b_j)^q)^{1/q}, blocks start at j_min.
double besov_reduce(const std::vector<double>& block_l2, int j_min, double s, BesovQ q);

/// Micro part (I-P) applied to every mode column.
Eigen::MatrixXcd micro_part(const VelocitySpace& vs, const Eigen::MatrixXcd& data);

/// ||d^alpha_x d^beta_v g|| for 1 <= |beta| <= N, |alpha| + |beta| <= N (beta outer, alpha inner,
/// both lexicographic). With a weight w the velocity norm is sum_k w_k |.|^2.
std::vector<double> mixed_derivative_norms(const SpectralGrid& grid, const VelocitySpace& vs,
                                           const Eigen::MatrixXcd& g, int N, const Eigen::VectorXd* weight = nullptr);

/// f = f_L + f_H with f_L = S_{j0} f. The zero mode has no dyadic block and is kept in f_L.
std::pair<DistributionField, DistributionField> low_high_split(const DistributionField& f, int j0);

/// Field snapshot I/O (header d, n_x, L_box, n_v, R, time, config hash; interleaved complex LE f64).
void save_snapshot(const std::string& path, const DistributionField& f, std::uint64_t config_hash = 0);
struct SnapshotHeader {
    int d = 0, n_x = 0, n_v = 0, n_angular = 0;
    double L_box = 0, R = 0, time = 0;
    long step = 0;
    std::uint64_t config_hash = 0;
};
SnapshotHeader read_snapshot_header(const std::string& path);
/// Loads into f, whose grid and velocity space must match the header.
void load_snapshot(const std::string& path, DistributionField& f);

/// |box| dv sum_xi |xi|^{2s} sum_k w_k |g_{k,xi}|^2; the zero mode counts only when s == 0.
double weighted_sobolev_sq(const SpectralGrid& grid, const VelocitySpace& vs, const Eigen::MatrixXcd& g,
                           const Eigen::VectorXd& w, double s);

}  // namespace hsboltz

#include "hsboltz/fourier_lp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numbers>

#include "hsboltz/binary_io.hpp"
#include "hsboltz/errors.hpp"
#include "hsboltz/simd.hpp"

namespace hsboltz {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

int wrap(int k, int n) { return k < n / 2 ? k : k - n; }

}  // namespace

SpectralGrid::SpectralGrid(int d, int n_x, double L_box) : d_(d), n_x_(n_x), L_(L_box) {
    if (d < 1 || d > 3) throw ValidationError("spatial dimension must be 1, 2 or 3");
    if (n_x < 2 || n_x % 2 != 0) throw ValidationError("spatial grid must be even");
    if (!(L_box > 0)) throw ValidationError("box length must be positive");
    n_modes_ = 1;
    for (int a = 0; a < d; ++a) n_modes_ *= static_cast<std::size_t>(n_x);
}

double SpectralGrid::volume() const { return std::pow(L_, d_); }

std::array<int, 3> SpectralGrid::wavenumbers(std::size_t m) const {
    std::array<int, 3> k{0, 0, 0};
    for (int a = d_ - 1; a >= 0; --a) {
        k[a] = wrap(static_cast<int>(m % n_x_), n_x_);
        m /= n_x_;
    }
    return k;
}

Vec3 SpectralGrid::xi(std::size_t m) const {
    auto k = wavenumbers(m);
    const double c = 2.0 * std::numbers::pi / L_;
    return {c * k[0], c * k[1], c * k[2]};
}

Vec3 SpectralGrid::point(std::size_t p) const {
    auto k = wavenumbers(p);
    const double h = dx();
    Vec3 x{0, 0, 0};
    for (int a = 0; a < d_; ++a) x[a] = k[a] * h;
    return x;
}

std::size_t SpectralGrid::mode_index(int k1, int k2, int k3) const {
    int ks[3] = {k1, k2, k3};
    std::size_t m = 0;
    for (int a = 0; a < d_; ++a) {
        int k = ((ks[a] % n_x_) + n_x_) % n_x_;
        m = m * n_x_ + static_cast<std::size_t>(k);
    }
    return m;
}

std::size_t SpectralGrid::conjugate(std::size_t m) const {
    auto k = wavenumbers(m);
    return mode_index(-k[0], -k[1], -k[2]);
}

bool SpectralGrid::retained(std::size_t m) const {
    auto k = wavenumbers(m);
    for (int a = 0; a < d_; ++a)
        if (3 * std::abs(k[a]) > n_x_) return false;
    return true;
}

FftPlan::FftPlan(const SpectralGrid& grid, std::size_t n_batch) : n_modes_(grid.size()) {
    n_total_ = n_batch * n_modes_;
    std::lock_guard<std::mutex> lock(planner_mutex());
    int n[3] = {grid.n_x(), grid.n_x(), grid.n_x()};
    auto* tmp = fftw_alloc_complex(n_total_);
    const int b = static_cast<int>(n_batch);
    fwd_ = fftw_plan_many_dft(grid.dim(), n, b, tmp, nullptr, b, 1, tmp, nullptr, b, 1, FFTW_FORWARD,
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
    inv_ = fftw_plan_many_dft(grid.dim(), n, b, tmp, nullptr, b, 1, tmp, nullptr, b, 1, FFTW_BACKWARD,
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(tmp);
    if (!fwd_ || !inv_) throw NumericalError("FFTW planning failed");
}

FftPlan::~FftPlan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
    if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

void FftPlan::forward(cplx* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(static_cast<fftw_plan>(fwd_), p, p);
    const double s = 1.0 / static_cast<double>(n_modes_);
    for (std::size_t i = 0; i < n_total_; ++i) data[i] *= s;
}

void FftPlan::inverse(cplx* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(static_cast<fftw_plan>(inv_), p, p);
}

double SpatialSpectrum::l2_norm() const { return std::sqrt(grid.volume() * coeffs.squaredNorm()); }

Eigen::VectorXcd SpatialSpectrum::to_physical() const {
    Eigen::VectorXcd x = coeffs;
    FftPlan(grid, 1).inverse(x.data());
    return x;
}

SpatialSpectrum SpatialSpectrum::from_physical(const SpectralGrid& g, const Eigen::VectorXcd& samples) {
    SpatialSpectrum s(g);
    s.coeffs = samples;
    FftPlan(g, 1).forward(s.coeffs.data());
    return s;
}

bool SpatialSpectrum::is_hermitian(double tol) const {
    double scale = std::max(1e-300, coeffs.cwiseAbs().maxCoeff());
    for (std::size_t m = 0; m < grid.size(); ++m) {
        auto c = grid.conjugate(m);
        if (std::abs(coeffs[static_cast<Eigen::Index>(m)] - std::conj(coeffs[static_cast<Eigen::Index>(c)])) > tol * scale)
            return false;
    }
    return true;
}

DistributionField::DistributionField(const SpectralGrid& g, std::shared_ptr<const VelocitySpace> v)
    : grid(g), vs(std::move(v)) {
    data = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(vs->size()), static_cast<Eigen::Index>(g.size()));
}

double DistributionField::l2_norm() const { return std::sqrt(grid.volume() * vs->grid.weight() * data.squaredNorm()); }

void DistributionField::symmetrize() {
    for (std::size_t m = 0; m < grid.size(); ++m) {
        auto c = grid.conjugate(m);
        if (c < m) continue;
        auto mi = static_cast<Eigen::Index>(m), ci = static_cast<Eigen::Index>(c);
        if (c == m) {
            data.col(mi) = data.col(mi).real().cast<cplx>();
            continue;
        }
        Eigen::VectorXcd avg = 0.5 * (data.col(mi) + data.col(ci).conjugate());
        data.col(mi) = avg;
        data.col(ci) = avg.conjugate();
    }
}

double DistributionField::hermitian_defect() const {
    double d = 0;
    for (std::size_t m = 0; m < grid.size(); ++m) {
        auto c = grid.conjugate(m);
        d = std::max(d, (data.col(static_cast<Eigen::Index>(m)) - data.col(static_cast<Eigen::Index>(c)).conjugate())
                            .cwiseAbs()
                            .maxCoeff());
    }
    return d;
}

double DyadicFilter::chi(double r) {
    r = std::abs(r);
    if (r <= 0.75) return 1.0;
    if (r >= 4.0 / 3.0) return 0.0;
    const double t = (r - 0.75) / (4.0 / 3.0 - 0.75);
    const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    return 1.0 - a / (a + b);
}

double DyadicFilter::phi(double r) { return chi(0.5 * r) - chi(r); }

std::pair<int, int> DyadicFilter::resolvable_range(const SpectralGrid& grid) {
    double rmin = 1e300, rmax = 0;
    for (std::size_t m = 0; m < grid.size(); ++m) {
        double r = grid.xi_abs(m);
        if (r == 0) continue;
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
    }
    int lo = static_cast<int>(std::floor(std::log2(rmin * 3.0 / 8.0))) - 1;
    int hi = static_cast<int>(std::ceil(std::log2(rmax * 4.0 / 3.0))) + 1;
    int jmin = hi + 1, jmax = lo - 1;
    for (int j = lo; j <= hi; ++j) {
        bool touches = false;
        for (std::size_t m = 0; m < grid.size() && !touches; ++m) {
            double r = grid.xi_abs(m);
            if (r > 0 && block(j, r) > 0) touches = true;
        }
        if (touches) {
            jmin = std::min(jmin, j);
            jmax = std::max(jmax, j);
        }
    }
    return {jmin, jmax};
}

SpatialSpectrum lp_block(const SpatialSpectrum& g, int j) {
    SpatialSpectrum out = g;
    for (std::size_t m = 0; m < g.grid.size(); ++m)
        out.coeffs[static_cast<Eigen::Index>(m)] *= DyadicFilter::block(j, g.grid.xi_abs(m));
    return out;
}

DistributionField apply_radial_multiplier(const DistributionField& f, const std::function<double(double)>& mult) {
    DistributionField out = f;
    for (std::size_t m = 0; m < f.grid.size(); ++m) out.data.col(static_cast<Eigen::Index>(m)) *= mult(f.grid.xi_abs(m));
    return out;
}

DistributionField lp_block(const DistributionField& f, int j) {
    return apply_radial_multiplier(f, [j](double r) { return DyadicFilter::block(j, r); });
}

bool NormReport::all_finite_nonnegative() const {
    for (const auto& [k, v] : values)
        if (!std::isfinite(v) || v < 0) return false;
    return true;
}

NormEvaluator::NormEvaluator(const SpectralGrid& grid, RegularityRange range) : grid_(grid), range_(range) {
    std::tie(j_min_, j_max_) = DyadicFilter::resolvable_range(grid);
    all_modes_.resize(grid.size());
    for (std::size_t m = 0; m < grid.size(); ++m) all_modes_[m] = m;
}

void NormEvaluator::check_regularity(double s) const {
    if (!std::isfinite(s) || s < range_.s_min || s > range_.s_max) {
        std::cerr << "warning: regularity " << s << " outside resolvable range [" << range_.s_min << ", "
                  << range_.s_max << "]\n";
        throw ValidationError("regularity index outside resolvable range");
    }
}

double besov_reduce(const std::vector<double>& b, int j_min, double s, BesovQ q) {
    double acc = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        double v = std::exp2((j_min + static_cast<int>(i)) * s) * b[i];
        switch (q) {
            case BesovQ::One: acc += v; break;
            case BesovQ::Two: acc += v * v; break;
            case BesovQ::Inf: acc = std::max(acc, v); break;
        }
    }
    return q == BesovQ::Two ? std::sqrt(acc) : acc;
}

Eigen::MatrixXd NormEvaluator::node_block_energy(const std::vector<std::size_t>& modes,
                                                 const Eigen::MatrixXcd& data) const {
    const int nb = j_max_ - j_min_ + 1;
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(data.rows(), std::max(nb, 0));
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const double r = grid_.xi_abs(modes[i]);
        if (r == 0) continue;
        const int jlo = std::max(j_min_, static_cast<int>(std::floor(std::log2(r * 3.0 / 8.0))));
        const int jhi = std::min(j_max_, static_cast<int>(std::ceil(std::log2(r * 4.0 / 3.0))));
        for (int j = jlo; j <= jhi; ++j) {
            const double p = DyadicFilter::block(j, r);
            if (p == 0) continue;
            E.col(j - j_min_) += (p * p) * data.col(static_cast<Eigen::Index>(i)).cwiseAbs2();
        }
    }
    return grid_.volume() * E;
}

double NormEvaluator::besov_impl(const std::vector<std::size_t>& modes, const Eigen::MatrixXcd& data, double dv,
                                 double s, BesovQ q) const {
    check_regularity(s);
    Eigen::MatrixXd E = node_block_energy(modes, data);
    std::vector<double> b(static_cast<std::size_t>(E.cols()));
    double acc = 0;
    for (Eigen::Index k = 0; k < E.rows(); ++k) {
        for (Eigen::Index j = 0; j < E.cols(); ++j) b[static_cast<std::size_t>(j)] = std::sqrt(E(k, j));
        double v = besov_reduce(b, j_min_, s, q);
        acc += v * v;
    }
    return std::sqrt(dv * acc);
}

double NormEvaluator::sobolev_impl(const std::vector<std::size_t>& modes, const Eigen::MatrixXcd& data, double dv,
                                   double s) const {
    check_regularity(s);
    const auto& kern = simd::active();
    double acc = 0;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const double r = grid_.xi_abs(modes[i]);
        if (r == 0) continue;
        acc += std::pow(r, 2 * s) * kern.norm2(data.col(static_cast<Eigen::Index>(i)).data(),
                                              static_cast<std::size_t>(data.rows()));
    }
    return std::sqrt(grid_.volume() * dv * acc);
}

std::vector<double> NormEvaluator::block_norms_impl(const std::vector<std::size_t>& modes,
                                                    const Eigen::MatrixXcd& data, double dv) const {
    Eigen::MatrixXd E = node_block_energy(modes, data);
    std::vector<double> out(static_cast<std::size_t>(E.cols()));
    for (Eigen::Index j = 0; j < E.cols(); ++j) out[static_cast<std::size_t>(j)] = std::sqrt(dv * E.col(j).sum());
    return out;
}

double NormEvaluator::besov(const SpatialSpectrum& g, double s, BesovQ q) const {
    return besov_impl(all_modes_, g.coeffs.transpose(), 1.0, s, q);
}

double NormEvaluator::sobolev(const SpatialSpectrum& g, double s) const {
    return sobolev_impl(all_modes_, g.coeffs.transpose(), 1.0, s);
}

std::vector<double> NormEvaluator::block_norms(const SpatialSpectrum& g) const {
    return block_norms_impl(all_modes_, g.coeffs.transpose(), 1.0);
}

double NormEvaluator::besov(const DistributionField& f, double s, BesovQ q) const {
    return besov_impl(all_modes_, f.data, f.vs->grid.weight(), s, q);
}

double NormEvaluator::sobolev(const DistributionField& f, double s) const {
    return sobolev_impl(all_modes_, f.data, f.vs->grid.weight(), s);
}

std::vector<double> NormEvaluator::block_norms(const DistributionField& f) const {
    return block_norms_impl(all_modes_, f.data, f.vs->grid.weight());
}

double NormEvaluator::besov(const ModeSet& f, double dv, double s, BesovQ q) const {
    return besov_impl(f.modes, f.data, dv, s, q);
}

double NormEvaluator::sobolev(const ModeSet& f, double dv, double s) const {
    return sobolev_impl(f.modes, f.data, dv, s);
}

std::vector<double> NormEvaluator::block_norms(const ModeSet& f, double dv) const {
    return block_norms_impl(f.modes, f.data, dv);
}

double NormEvaluator::l2(const DistributionField& f) const { return f.l2_norm(); }

Eigen::MatrixXcd micro_part(const VelocitySpace& vs, const Eigen::MatrixXcd& data) {
    const auto n = static_cast<Eigen::Index>(vs.size());
    Eigen::MatrixXd E(n, 5);
    for (int i = 0; i < 5; ++i) E.col(i) = vs.nb.e[i];
    Eigen::MatrixXcd coef = vs.grid.weight() * (E.transpose().cast<cplx>() * data);
    return data - E.cast<cplx>() * coef;
}

namespace {

// All multi-indices of the given order in dim dimensions (first dims only), lexicographic.
std::vector<std::array<int, 3>> multi_indices(int dim, int order) {
    std::vector<std::array<int, 3>> out;
    for (int a = 0; a <= order; ++a)
        for (int b = 0; b <= (dim >= 2 ? order - a : 0); ++b) {
            int c = order - a - b;
            if (dim < 3 && c != 0) continue;
            if (dim < 2 && b != 0) continue;
            out.push_back({a, b, c});
        }
    return out;
}

}  // namespace

NormReport NormEvaluator::energy(const DistributionField& f, double s, int N) const {
    if (N < 3) throw ValidationError("energy norm needs N >= 3");
    const VelocitySpace& vs = *f.vs;
    const double dv = vs.grid.weight();
    const double vol = grid_.volume();
    NormReport rep;
    // Group 1: L^2_v(B^s_{2,inf} cap H^N).
    rep["besov_s_inf"] = besov(f, s, BesovQ::Inf);
    rep["hdot_N"] = sobolev(f, static_cast<double>(N));
    // Group 2: <v>-weighted L^2_v(H^1 cap H^{N-1}).
    Eigen::MatrixXcd wf = f.data;
    for (std::size_t k = 0; k < vs.size(); ++k) wf.row(static_cast<Eigen::Index>(k)) *= bracket(vs.grid.node(k));
    rep["weighted_hdot_1"] = sobolev_impl(all_modes_, wf, dv, 1.0);
    rep["weighted_hdot_Nm1"] = sobolev_impl(all_modes_, wf, dv, static_cast<double>(N - 1));
    wf.resize(0, 0);
    // Group 3: micro L^2.
    Eigen::MatrixXcd micro = micro_part(vs, f.data);
    rep["micro_l2"] = std::sqrt(vol * dv * micro.squaredNorm());
    // Group 4: sum over 1 <= |beta| <= N, |alpha| + |beta| <= N of ||d^alpha_x d^beta_v micro||.
    double mixed = 0;
    for (double v : mixed_derivative_norms(grid_, vs, micro, N)) mixed += v;
    rep["mixed_micro"] = mixed;
    rep["total"] = rep["besov_s_inf"] + rep["hdot_N"] + rep["weighted_hdot_1"] + rep["weighted_hdot_Nm1"] +
                   rep["micro_l2"] + rep["mixed_micro"];
    return rep;
}

std::vector<double> mixed_derivative_norms(const SpectralGrid& grid, const VelocitySpace& vs,
                                           const Eigen::MatrixXcd& micro, int N, const Eigen::VectorXd* weight) {
    VelocityDerivative D(vs.grid);
    const auto ncols = static_cast<std::size_t>(micro.cols());
    const auto& kern = simd::active();
    const double scale = grid.volume() * vs.grid.weight();
    std::vector<double> out;
    // Derivatives are built order by order: level b holds d^beta for all |beta| = b.
    std::map<std::array<int, 3>, Eigen::MatrixXcd> level{{{0, 0, 0}, micro}};
    for (int b = 1; b <= N; ++b) {
        std::map<std::array<int, 3>, Eigen::MatrixXcd> next;
        for (const auto& beta : multi_indices(3, b)) {
            // Derive from a parent of order b-1 by differentiating along the first nonzero axis.
            int axis = beta[0] > 0 ? 0 : (beta[1] > 0 ? 1 : 2);
            auto parent = beta;
            --parent[axis];
            const Eigen::MatrixXcd& src = level.at(parent);
            Eigen::MatrixXcd d(src.rows(), src.cols());
            D.apply(axis, src.data(), d.data(), ncols);
            Eigen::VectorXd mass(static_cast<Eigen::Index>(ncols));
            for (std::size_t m = 0; m < ncols; ++m) {
                const cplx* col = d.col(static_cast<Eigen::Index>(m)).data();
                mass[static_cast<Eigen::Index>(m)] =
                    weight ? kern.weighted_norm2(weight->data(), col, vs.size()) : kern.norm2(col, vs.size());
            }
            for (int a = 0; a + b <= N; ++a)
                for (const auto& alpha : multi_indices(grid.dim(), a)) {
                    double acc = 0;
                    for (std::size_t m = 0; m < ncols; ++m) {
                        Vec3 x = grid.xi(m);
                        double w = 1;
                        for (int ax = 0; ax < 3; ++ax) w *= std::pow(x[ax] * x[ax], alpha[ax]);
                        acc += w * mass[static_cast<Eigen::Index>(m)];
                    }
                    out.push_back(std::sqrt(scale * acc));
                }
            next.emplace(beta, std::move(d));
        }
        level = std::move(next);
    }
    return out;
}

std::pair<DistributionField, DistributionField> low_high_split(const DistributionField& f, int j0) {
    DistributionField lo = apply_radial_multiplier(f, [j0](double r) { return DyadicFilter::low_pass(j0, r); });
    DistributionField hi = f;
    hi.data -= lo.data;
    return {lo, hi};
}

static constexpr char kSnapMagic[9] = "HSBSNAP1";

void save_snapshot(const std::string& path, const DistributionField& f, std::uint64_t config_hash) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write snapshot " + path);
    binio::put_magic(os, kSnapMagic);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid.dim()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid.n_x()));
    binio::put<double>(os, f.grid.box());
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.vs->grid.nodes_per_axis()));
    binio::put<double>(os, f.vs->grid.extent());
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.vs->grid.n_angular()));
    binio::put<double>(os, f.time);
    binio::put<std::int64_t>(os, f.step);
    binio::put<std::uint64_t>(os, config_hash);
    binio::put<std::uint64_t>(os, f.n_vel());
    binio::put<std::uint64_t>(os, f.n_modes());
    const cplx* p = f.data.data();
    for (std::size_t i = 0; i < f.n_vel() * f.n_modes(); ++i) {
        binio::put<double>(os, p[i].real());
        binio::put<double>(os, p[i].imag());
    }
}

namespace {

SnapshotHeader read_header(std::istream& is) {
    binio::expect_magic(is, kSnapMagic);
    SnapshotHeader h;
    h.d = static_cast<int>(binio::get<std::uint32_t>(is));
    h.n_x = static_cast<int>(binio::get<std::uint32_t>(is));
    h.L_box = binio::get<double>(is);
    h.n_v = static_cast<int>(binio::get<std::uint32_t>(is));
    h.R = binio::get<double>(is);
    h.n_angular = static_cast<int>(binio::get<std::uint32_t>(is));
    h.time = binio::get<double>(is);
    h.step = static_cast<long>(binio::get<std::int64_t>(is));
    h.config_hash = binio::get<std::uint64_t>(is);
    return h;
}

}  // namespace

SnapshotHeader read_snapshot_header(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open snapshot " + path);
    return read_header(is);
}

void load_snapshot(const std::string& path, DistributionField& f) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open snapshot " + path);
    SnapshotHeader h = read_header(is);
    if (h.d != f.grid.dim() || h.n_x != f.grid.n_x() || h.L_box != f.grid.box() ||
        h.n_v != f.vs->grid.nodes_per_axis() || h.R != f.vs->grid.extent())
        throw ValidationError("snapshot header does not match the target field");
    auto nvel = binio::get<std::uint64_t>(is);
    auto nm = binio::get<std::uint64_t>(is);
    if (nvel != f.n_vel() || nm != f.n_modes()) throw ValidationError("snapshot size mismatch");
    cplx* p = f.data.data();
    for (std::size_t i = 0; i < nvel * nm; ++i) {
        double re = binio::get<double>(is);
        double im = binio::get<double>(is);
        p[i] = {re, im};
    }
    f.time = h.time;
    f.step = h.step;
}

double weighted_sobolev_sq(const SpectralGrid& grid, const VelocitySpace& vs, const Eigen::MatrixXcd& g,
                           const Eigen::VectorXd& w, double s) {
    const auto& kern = simd::active();
    double acc = 0;
    for (Eigen::Index m = 0; m < g.cols(); ++m) {
        const double r = grid.xi_abs(static_cast<std::size_t>(m));
        if (r == 0 && s != 0) continue;
        acc += (s == 0 ? 1.0 : std::pow(r, 2 * s)) * kern.weighted_norm2(w.data(), g.col(m).data(), vs.size());
    }
    return grid.volume() * vs.grid.weight() * acc;
}

}  // namespace hsboltz

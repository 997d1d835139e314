#include "hsboltz/forcing.hpp"

#include <fstream>
#include <iostream>
#include <numbers>

#include "json.hpp"

#include "hsboltz/errors.hpp"

namespace hsboltz {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// exp(-1/t) smoothstep on [0, 1] and its derivative.
double smoothstep(double t) {
    if (t <= 0) return 0.0;
    if (t >= 1) return 1.0;
    const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

double smoothstep_derivative(double t) {
    if (t <= 0 || t >= 1) return 0.0;
    const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    const double s = a + b;
    return a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / (s * s);
}

// Zeroes modes whose wavenumber hits the Nyquist frequency on any axis.
bool nyquist(const SpectralGrid& g, std::size_t m) {
    auto k = g.wavenumbers(m);
    for (int a = 0; a < g.dim(); ++a)
        if (2 * k[a] == -g.n_x()) return true;
    return false;
}

double radius(const SpectralGrid& g, const Vec3& x) {
    double r2 = 0;
    for (int a = 0; a < g.dim(); ++a) r2 += x[a] * x[a];
    return std::sqrt(r2);
}

}  // namespace

double TimeProfile::theta(double phase) const {
    switch (kind) {
        case Modulation::Constant: return 1.0;
        case Modulation::Sine: return std::sin(kTwoPi * phase);
        case Modulation::SmoothedSquare: return std::tanh(sharpness * std::sin(kTwoPi * phase)) / std::tanh(sharpness);
    }
    return 1.0;
}

double RadialWindow::value(double r) const { return 1.0 - smoothstep((r - r_in) / (r_out - r_in)); }

double RadialWindow::derivative(double r) const {
    return -smoothstep_derivative((r - r_in) / (r_out - r_in)) / (r_out - r_in);
}

ForceField ForceField::zero(const SpectralGrid& grid) {
    ForceField f;
    f.grid_ = grid;
    for (auto& c : f.base_) c = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid.size()));
    return f;
}

ForceField ForceField::potential(const SpatialSpectrum& phi) {
    return potential_impl(phi, 0, 0);
}

ForceField ForceField::gaussian(const SpectralGrid& grid, double amplitude, double sigma) {
    return potential_impl(gaussian_potential(grid, amplitude, sigma), amplitude, sigma);
}

ForceField ForceField::potential_impl(const SpatialSpectrum& phi, double amp, double sigma) {
    ForceField f = zero(phi.grid);
    f.kind_ = ForceKind::Potential;
    f.phi_ = phi;
    f.phi_amp_ = amp;
    f.phi_sigma_ = sigma;
    const auto& g = phi.grid;
    for (std::size_t m = 0; m < g.size(); ++m) {
        if (nyquist(g, m)) continue;
        Vec3 xi = g.xi(m);
        const cplx c = phi.coeffs[static_cast<Eigen::Index>(m)];
        for (int a = 0; a < g.dim(); ++a) f.base_[a][static_cast<Eigen::Index>(m)] = -cplx(0, xi[a]) * c;
    }
    return f;
}

SpatialSpectrum ForceField::gaussian_potential(const SpectralGrid& grid, double amplitude, double sigma) {
    if (!(sigma > 0)) throw ValidationError("Gaussian width must be positive");
    SpatialSpectrum s(grid);
    const double pre = amplitude * std::pow(sigma * std::sqrt(kTwoPi) / grid.box(), grid.dim());
    for (std::size_t m = 0; m < grid.size(); ++m) {
        if (nyquist(grid, m)) continue;
        double r = grid.xi_abs(m);
        s.coeffs[static_cast<Eigen::Index>(m)] = pre * std::exp(-0.5 * r * r * sigma * sigma);
    }
    return s;
}

ForceField ForceField::rotational(const SpectralGrid& grid, double eps, double m) {
    if (!(m > 2)) throw ValidationError("rotational force needs decay exponent m > 2");
    ForceField f = zero(grid);
    f.kind_ = ForceKind::Rotational;
    f.eps_ = eps;
    f.m_ = m;
    f.window_ = {0.4 * grid.box(), 0.5 * grid.box()};
    // Stream function psi = eps w(r) (1 + r^2)^{1-m} / (2(m-1)), E = (d2 psi, -d1 psi, 0).
    Eigen::VectorXcd psi(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t p = 0; p < grid.size(); ++p) {
        double r = radius(grid, grid.point(p));
        psi[static_cast<Eigen::Index>(p)] = eps * f.window_.value(r) * std::pow(1.0 + r * r, 1.0 - m) / (2.0 * (m - 1.0));
    }
    SpatialSpectrum ps = SpatialSpectrum::from_physical(grid, psi);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (nyquist(grid, k)) continue;
        Vec3 xi = grid.xi(k);
        const cplx c = ps.coeffs[static_cast<Eigen::Index>(k)];
        f.base_[0][static_cast<Eigen::Index>(k)] = cplx(0, xi[1]) * c;
        f.base_[1][static_cast<Eigen::Index>(k)] = -cplx(0, xi[0]) * c;
    }
    return f;
}

ForceField ForceField::custom_spectral(const SpectralGrid& grid, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open force spectrum " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("force spectrum is not valid JSON: ") + e.what());
    }
    ForceField f = zero(grid);
    f.kind_ = ForceKind::CustomSpectral;
    if (!j.contains("modes") || !j["modes"].is_array()) throw ValidationError("force spectrum needs a modes array");
    for (const auto& e : j["modes"]) {
        auto k = e.at("k").get<std::vector<int>>();
        auto E = e.at("E").get<std::vector<std::vector<double>>>();
        if (k.size() != 3 || E.size() != 3) throw ValidationError("force mode needs k[3] and E[3]");
        for (int a = grid.dim(); a < 3; ++a)
            if (k[a] != 0) throw ValidationError("force mode has a wavenumber on an absent axis");
        for (int a = 0; a < grid.dim(); ++a)
            if (3 * std::abs(k[a]) > grid.n_x()) throw ValidationError("force mode outside the dealiased band");
        auto mi = static_cast<Eigen::Index>(grid.mode_index(k[0], k[1], k[2]));
        auto ci = static_cast<Eigen::Index>(grid.mode_index(-k[0], -k[1], -k[2]));
        for (int a = 0; a < 3; ++a) {
            if (E[a].size() != 2) throw ValidationError("force component must be [re, im]");
            cplx c(E[a][0], E[a][1]);
            if (mi == ci) c = c.real();
            f.base_[a][mi] = c;
            f.base_[a][ci] = std::conj(c);
        }
    }
    return f;
}

ForceField ForceField::modulated(double T, TimeProfile profile) const {
    if (!(T > 0)) throw ValidationError("force period must be positive");
    ForceField f = *this;
    f.period_ = T;
    f.profile_ = profile;
    return f;
}

double ForceField::theta(double t) const {
    if (stationary()) return 1.0;
    double ph = std::fmod(t / period_, 1.0);
    if (ph < 0) ph += 1.0;
    return profile_.theta(ph);
}

std::array<Eigen::VectorXcd, 3> ForceField::spectrum(double t) const {
    const double th = theta(t);
    return {th * base_[0], th * base_[1], th * base_[2]};
}

Eigen::MatrixXd ForceField::base_physical() const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(grid_.size()), 3);
    for (int a = 0; a < 3; ++a) {
        SpatialSpectrum s(grid_);
        s.coeffs = base_[a];
        out.col(a) = s.to_physical().real();
    }
    return out;
}

Vec3 ForceField::evaluate(const Vec3& x) const {
    Vec3 E{0, 0, 0};
    switch (kind_) {
        case ForceKind::Zero: return E;
        case ForceKind::Rotational: {
            double r = radius(grid_, x);
            double w = window_.value(r), dw = window_.derivative(r);
            double q = std::pow(1.0 + r * r, -m_);
            // psi'(r) / r and E = (psi' x2 / r, -psi' x1 / r, 0)
            double dpsi_r = -eps_ * w * q;
            if (r > 0) dpsi_r += eps_ * dw * std::pow(1.0 + r * r, 1.0 - m_) / (2.0 * (m_ - 1.0)) / r;
            double x2 = grid_.dim() >= 2 ? x[1] : 0.0;
            E[0] = dpsi_r * x2;
            E[1] = -dpsi_r * x[0];
            return E;
        }
        case ForceKind::Potential:
            if (phi_sigma_ > 0) {
                const double L = grid_.box(), s2 = phi_sigma_ * phi_sigma_;
                const int lim = 1;
                for (int i = -lim; i <= lim; ++i)
                    for (int j = (grid_.dim() >= 2 ? -lim : 0); j <= (grid_.dim() >= 2 ? lim : 0); ++j)
                        for (int k = (grid_.dim() >= 3 ? -lim : 0); k <= (grid_.dim() >= 3 ? lim : 0); ++k) {
                            Vec3 y{x[0] - i * L, grid_.dim() >= 2 ? x[1] - j * L : 0.0,
                                   grid_.dim() >= 3 ? x[2] - k * L : 0.0};
                            double e = phi_amp_ * std::exp(-0.5 * dot(y, y) / s2);
                            for (int a = 0; a < grid_.dim(); ++a) E[a] += y[a] / s2 * e;
                        }
                return E;
            }
            [[fallthrough]];
        case ForceKind::CustomSpectral: {
            Vec3 xx{0, 0, 0};
            for (int a = 0; a < grid_.dim(); ++a) xx[a] = x[a];
            for (std::size_t mi = 0; mi < grid_.size(); ++mi) {
                cplx ph = std::exp(cplx(0, dot(grid_.xi(mi), xx)));
                for (int a = 0; a < 3; ++a) E[a] += (base_[a][static_cast<Eigen::Index>(mi)] * ph).real();
            }
            return E;
        }
    }
    return E;
}

SpatialSpectrum ForceField::divergence() const {
    SpatialSpectrum d(grid_);
    for (std::size_t m = 0; m < grid_.size(); ++m) {
        Vec3 xi = grid_.xi(m);
        auto mi = static_cast<Eigen::Index>(m);
        cplx acc = 0;
        for (int a = 0; a < grid_.dim(); ++a) acc += cplx(0, xi[a]) * base_[a][mi];
        d.coeffs[mi] = acc;
    }
    return d;
}

std::array<SpatialSpectrum, 3> ForceField::curl() const {
    std::array<SpatialSpectrum, 3> c{SpatialSpectrum(grid_), SpatialSpectrum(grid_), SpatialSpectrum(grid_)};
    for (std::size_t m = 0; m < grid_.size(); ++m) {
        Vec3 xi = grid_.xi(m);
        for (int a = grid_.dim(); a < 3; ++a) xi[a] = 0;
        auto mi = static_cast<Eigen::Index>(m);
        const cplx I(0, 1);
        c[0].coeffs[mi] = I * (xi[1] * base_[2][mi] - xi[2] * base_[1][mi]);
        c[1].coeffs[mi] = I * (xi[2] * base_[0][mi] - xi[0] * base_[2][mi]);
        c[2].coeffs[mi] = I * (xi[0] * base_[1][mi] - xi[1] * base_[0][mi]);
    }
    return c;
}

Vec3 ForceField::curl_at_origin() const {
    auto c = curl();
    return {c[0].coeffs.sum().real(), c[1].coeffs.sum().real(), c[2].coeffs.sum().real()};
}

namespace {

ModeSet as_mode_set(const SpectralGrid& g, const std::array<Eigen::VectorXcd, 3>& E) {
    ModeSet ms{g, std::vector<std::size_t>(g.size()), Eigen::MatrixXcd(3, static_cast<Eigen::Index>(g.size()))};
    for (std::size_t m = 0; m < g.size(); ++m) ms.modes[m] = m;
    for (int a = 0; a < 3; ++a) ms.data.row(a) = E[a].transpose();
    return ms;
}

}  // namespace

std::vector<double> vector_block_norms(const NormEvaluator& ev, const std::array<Eigen::VectorXcd, 3>& E) {
    return ev.block_norms(as_mode_set(ev.grid(), E), 1.0);
}

double vector_besov_inf(const NormEvaluator& ev, const std::array<Eigen::VectorXcd, 3>& E, double s) {
    ev.check_regularity(s);
    return besov_reduce(vector_block_norms(ev, E), ev.block_range().first, s, BesovQ::Inf);
}

double vector_sobolev(const NormEvaluator& ev, const std::array<Eigen::VectorXcd, 3>& E, double s) {
    return ev.sobolev(as_mode_set(ev.grid(), E), 1.0, s);
}

double vector_inhomogeneous_sobolev(const SpectralGrid& g, const std::array<Eigen::VectorXcd, 3>& E, int N) {
    double acc = 0;
    for (std::size_t m = 0; m < g.size(); ++m) {
        double r2 = std::pow(g.xi_abs(m), 2);
        double w = 0, p = 1;
        for (int k = 0; k <= N; ++k, p *= r2) w += p;
        for (int a = 0; a < 3; ++a) acc += w * std::norm(E[a][static_cast<Eigen::Index>(m)]);
    }
    return std::sqrt(g.volume() * acc);
}

NormReport force_norm_report(const ForceField& E, int N, int n_samples, double delta) {
    if (n_samples < 1) throw ValidationError("force norm needs at least one time sample");
    NormEvaluator ev(E.grid());
    const auto& base = E.base_spectrum();
    const double b = vector_besov_inf(ev, base, -1.5);
    const double h = vector_sobolev(ev, base, static_cast<double>(N));
    double sup_theta = 0;
    for (int i = 0; i < n_samples; ++i)
        sup_theta = std::max(sup_theta, std::abs(E.theta_at_phase(static_cast<double>(i) / n_samples)));
    NormReport rep;
    rep["besov_m32_inf"] = sup_theta * b;
    rep["hdot_N"] = sup_theta * h;
    rep["sup_theta"] = sup_theta;
    rep["total"] = sup_theta * (b + h);
    if (rep.at("total") > delta)
        std::cerr << "warning: force norm " << rep.at("total") << " exceeds smallness threshold " << delta << "\n";
    return rep;
}

}  // namespace hsboltz

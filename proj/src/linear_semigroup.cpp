#include "hsboltz/linear_semigroup.hpp"

#include <cblas.h>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "hsboltz/errors.hpp"
#include "hsboltz/rng.hpp"

namespace hsboltz {

Eigen::MatrixXcd zgemm(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B) {
    Eigen::MatrixXcd C(A.rows(), B.cols());
    const cplx one(1, 0), zero(0, 0);
    cblas_zgemm(CblasColMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(A.rows()), static_cast<int>(B.cols()),
                static_cast<int>(A.cols()), &one, A.data(), static_cast<int>(A.rows()), B.data(),
                static_cast<int>(B.rows()), &zero, C.data(), static_cast<int>(C.rows()));
    return C;
}

Eigen::MatrixXcd expm(const Eigen::MatrixXcd& A) {
    static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
    const double theta13 = 5.371920351148152;
    const Eigen::Index n = A.rows();
    if (A.cols() != n) throw ValidationError("expm needs a square matrix");
    if (n == 0) return A;
    const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
    if (!std::isfinite(norm1)) throw NumericalError("expm of a non-finite matrix");
    int s = 0;
    if (norm1 > theta13) s = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    const Eigen::MatrixXcd As = A * std::ldexp(1.0, -s);
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(n, n);
    const Eigen::MatrixXcd A2 = zgemm(As, As);
    const Eigen::MatrixXcd A4 = zgemm(A2, A2);
    const Eigen::MatrixXcd A6 = zgemm(A4, A2);
    Eigen::MatrixXcd inner = b[13] * A6 + b[11] * A4 + b[9] * A2;
    Eigen::MatrixXcd Ut = zgemm(A6, inner) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I;
    const Eigen::MatrixXcd U = zgemm(As, Ut);
    inner = b[12] * A6 + b[10] * A4 + b[8] * A2;
    const Eigen::MatrixXcd V = zgemm(A6, inner) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
    Eigen::MatrixXcd P = V - U;
    Eigen::MatrixXcd X = V + U;
    std::vector<lapack_int> ipiv(static_cast<std::size_t>(n));
    lapack_int info = LAPACKE_zgesv(LAPACK_COL_MAJOR, static_cast<lapack_int>(n), static_cast<lapack_int>(n),
                                    reinterpret_cast<lapack_complex_double*>(P.data()), static_cast<lapack_int>(n),
                                    ipiv.data(), reinterpret_cast<lapack_complex_double*>(X.data()),
                                    static_cast<lapack_int>(n));
    if (info != 0) throw NumericalError("expm: Pade denominator is singular");
    for (int k = 0; k < s; ++k) X = zgemm(X, X);
    return X;
}

ModeOperator ModeOperator::build(const LinearizedOperator& L, const Vec3& xi) {
    ModeOperator op;
    op.xi = xi;
    const auto n = static_cast<Eigen::Index>(L.size());
    op.B = -L.L.cast<cplx>();
    for (Eigen::Index k = 0; k < n; ++k)
        op.B(k, k) -= cplx(0, dot(L.vs->grid.node(static_cast<std::size_t>(k)), xi));
    return op;
}

ModePropagator::ModePropagator(const ModeOperator& op, double tau, int levels) : tau_(tau) {
    if (!(tau > 0)) throw ValidationError("propagator step must be positive");
    if (levels < 1 || levels > 40) throw ValidationError("propagator levels must be in [1, 40]");
    powers_.reserve(static_cast<std::size_t>(levels));
    powers_.push_back(expm(tau * op.B));
    for (int k = 1; k < levels; ++k) powers_.push_back(zgemm(powers_.back(), powers_.back()));
}

Eigen::VectorXcd ModePropagator::apply(const Eigen::VectorXcd& f, long m) const {
    if (m < 0 || m > max_steps()) throw ValidationError("propagator step count out of range");
    Eigen::VectorXcd y = f;
    for (std::size_t k = 0; m != 0; ++k, m >>= 1)
        if (m & 1) y = powers_[k] * y;
    return y;
}

Eigen::VectorXcd ModePropagator::apply_adjoint(const Eigen::VectorXcd& f, long m) const {
    if (m < 0 || m > max_steps()) throw ValidationError("propagator step count out of range");
    Eigen::VectorXcd y = f;
    for (std::size_t k = 0; m != 0; ++k, m >>= 1)
        if (m & 1) y = powers_[k].adjoint() * y;
    return y;
}

Eigen::VectorXcd propagate_mode(const ModeOperator& op, const Eigen::VectorXcd& f0, double t) {
    if (t < 0) throw ValidationError("propagation time must be nonnegative");
    if (t == 0) return f0;
    return expm(t * op.B) * f0;
}

Eigen::VectorXcd krylov_expv(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply_A,
                             const Eigen::VectorXcd& v, double t, double tol, int m, KrylovStats* stats) {
    if (t < 0) throw ValidationError("propagation time must be nonnegative");
    const Eigen::Index n = v.size();
    m = static_cast<int>(std::min<Eigen::Index>(m, n));
    Eigen::VectorXcd w = v;
    KrylovStats st;
    double t_done = 0;
    double tau = t;
    while (t_done < t) {
        const double beta = w.norm();
        if (beta == 0) break;
        // Arnoldi with one reorthogonalisation pass.
        Eigen::MatrixXcd Vb = Eigen::MatrixXcd::Zero(n, m + 1);
        Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(m + 2, m + 2);
        Vb.col(0) = w / beta;
        int k_used = m;
        bool breakdown = false;
        for (int j = 0; j < m; ++j) {
            Eigen::VectorXcd p = apply_A(Vb.col(j));
            for (int pass = 0; pass < 2; ++pass)
                for (int i = 0; i <= j; ++i) {
                    cplx h = Vb.col(i).dot(p);
                    H(i, j) += h;
                    p -= h * Vb.col(i);
                }
            const double hn = p.norm();
            if (hn < 1e-12 * beta) {
                k_used = j + 1;
                breakdown = true;
                break;
            }
            H(j + 1, j) = hn;
            Vb.col(j + 1) = p / hn;
        }
        const double h_next = breakdown ? 0.0 : std::abs(H(k_used, k_used - 1));
        // Augmented matrix: the extra row/column yields the error estimator of the truncated series.
        for (int attempt = 0;; ++attempt) {
            tau = std::min(tau, t - t_done);
            Eigen::MatrixXcd Hs = Eigen::MatrixXcd::Zero(k_used + 1, k_used + 1);
            Hs.topLeftCorner(k_used, k_used) = tau * H.topLeftCorner(k_used, k_used);
            if (!breakdown) Hs(k_used, k_used - 1) = tau * h_next;
            Eigen::MatrixXcd F = expm(Hs);
            double err = breakdown ? 0.0 : beta * std::abs(F(k_used, 0));
            if (err <= tol * std::max(1.0, beta) * tau / t || attempt > 60) {
                if (attempt > 60) throw NumericalError("Krylov propagation failed to meet its tolerance");
                w = beta * (Vb.leftCols(k_used) * F.col(0).head(k_used));
                if (!breakdown) w += beta * F(k_used, 0) * Vb.col(k_used);
                t_done += tau;
                st.substeps++;
                st.error_estimate += err;
                if (err < 0.1 * tol * tau / t) tau *= 2;
                break;
            }
            st.rejected++;
            tau *= 0.5;
        }
    }
    if (stats) *stats = st;
    return w;
}

namespace {

DecayFit linear_fit(const std::vector<std::pair<double, double>>& samples, double t_lo, double t_hi, bool log_time) {
    std::vector<double> X, Y;
    for (const auto& [t, a] : samples) {
        if (t < t_lo || t > t_hi || !(a > 0) || !std::isfinite(a)) continue;
        X.push_back(log_time ? std::log1p(t) : t);
        Y.push_back(std::log(a));
    }
    if (X.size() < 2) throw NumericalError("decay fit needs at least two positive samples in the window");
    const double n = static_cast<double>(X.size());
    const double mx = std::accumulate(X.begin(), X.end(), 0.0) / n;
    const double my = std::accumulate(Y.begin(), Y.end(), 0.0) / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        sxx += (X[i] - mx) * (X[i] - mx);
        sxy += (X[i] - mx) * (Y[i] - my);
    }
    if (sxx == 0) throw NumericalError("decay fit window is degenerate");
    const double slope = sxy / sxx, icpt = my - slope * mx;
    double rss = 0;
    for (std::size_t i = 0; i < X.size(); ++i) rss += std::pow(Y[i] - icpt - slope * X[i], 2);
    DecayFit f;
    f.model = log_time ? "algebraic" : "exponential";
    f.fitted_rate = -slope;
    f.prefactor = std::exp(icpt);
    f.residual = std::sqrt(rss / n);
    f.samples = samples;
    if (!std::isfinite(f.fitted_rate)) throw NumericalError("decay fit produced a non-finite exponent");
    return f;
}

}  // namespace

DecayFit fit_exponential(const std::vector<std::pair<double, double>>& s, double t_lo, double t_hi) {
    return linear_fit(s, t_lo, t_hi, false);
}

DecayFit fit_algebraic(const std::vector<std::pair<double, double>>& s, double t_lo, double t_hi) {
    return linear_fit(s, t_lo, t_hi, true);
}

std::string decay_fits_csv(const std::vector<DecayFit>& fits) {
    std::ostringstream os;
    os.precision(17);
    os << "label,x,fitted_rate,expected_rate,residual\n";
    for (const auto& f : fits)
        os << f.label << ',' << f.x << ',' << f.fitted_rate << ',' << f.expected_rate << ',' << f.residual << '\n';
    return os.str();
}

std::string decay_fits_json(const std::vector<DecayFit>& fits, bool with_samples) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& f : fits) {
        nlohmann::ordered_json j;
        j["label"] = f.label;
        j["model"] = f.model;
        j["x"] = f.x;
        j["fitted_rate"] = f.fitted_rate;
        j["expected_rate"] = f.expected_rate;
        j["prefactor"] = f.prefactor;
        j["residual"] = f.residual;
        if (with_samples) {
            nlohmann::ordered_json s = nlohmann::ordered_json::array();
            for (const auto& [t, a] : f.samples) s.push_back({t, a});
            j["samples"] = s;
        }
        arr.push_back(j);
    }
    return arr.dump(2);
}

Eigen::VectorXcd random_velocity_profile(const VelocitySpace& vs, std::uint64_t seed, bool micro_only) {
    CounterRng rng(seed, 0x5e1f);
    const auto n = static_cast<Eigen::Index>(vs.size());
    Eigen::VectorXd g(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Vec3& v = vs.grid.node(static_cast<std::size_t>(k));
        g[k] = rng.normal() * std::exp(-dot(v, v) / 8.0);
    }
    for (int i = 0; i < 5; ++i) g += rng.normal() * vs.nb.e[i];
    if (micro_only) g -= vs.nb.project(vs.grid, g);
    g /= std::sqrt(vs.grid.inner(g, g));
    return g.cast<cplx>();
}

PointwiseDecayReport verify_pointwise_decay(const LinearizedOperator& L, const std::vector<double>& xi_abs,
                                            const PointwiseDecayOptions& opt) {
    PointwiseDecayReport rep;
    const Eigen::VectorXcd f0 = random_velocity_profile(*L.vs, opt.seed, false);
    const double h3 = L.vs->grid.weight();
    for (double r : xi_abs) {
        const double scale = std::min(1.0, r * r);
        const double dt = (opt.window_hi - opt.window_lo) / (opt.n_samples - 1) / scale;
        ModeOperator op = ModeOperator::build(L, {r, 0, 0});
        const Eigen::MatrixXcd Phi = expm(dt * op.B);
        // March from t = 0 in steps of dt; the window starts at window_lo / scale.
        Eigen::VectorXcd y = f0;
        std::vector<std::pair<double, double>> samples;
        const long n_lo = std::lround(opt.window_lo / scale / dt);
        const long n_total = n_lo + opt.n_samples - 1;
        samples.emplace_back(0.0, std::sqrt(h3) * y.norm());
        for (long i = 1; i <= n_total; ++i) {
            y = Phi * y;
            samples.emplace_back(i * dt, std::sqrt(h3) * y.norm());
        }
        DecayFit f = fit_exponential(samples, n_lo * dt * (1 - 1e-12), n_total * dt * (1 + 1e-12));
        f.label = "pointwise";
        f.x = r;
        rep.fits.push_back(f);
    }
    double sxy = 0, sxx = 0;
    for (const auto& f : rep.fits) {
        double m = std::min(1.0, f.x * f.x);
        sxy += m * f.fitted_rate;
        sxx += m * m;
    }
    rep.kappa1 = sxx > 0 ? sxy / sxx : 0;
    std::vector<double> lo, hi;
    for (auto& f : rep.fits) {
        f.expected_rate = rep.kappa1 * std::min(1.0, f.x * f.x);
        if (f.x < opt.heat_threshold)
            lo.push_back(f.fitted_rate / (f.x * f.x));
        else
            hi.push_back(f.fitted_rate);
    }
    auto spread = [](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        auto [mn, mx] = std::minmax_element(v.begin(), v.end());
        double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        return (*mx - *mn) / mean;
    };
    rep.low_band_spread = spread(lo);
    rep.high_band_spread = spread(hi);
    return rep;
}

MicroScalingReport micro_amplitude_scaling(const LinearizedOperator& L, const std::vector<double>& xi_abs, double t,
                                           std::uint64_t seed) {
    MicroScalingReport rep;
    const Eigen::VectorXcd f0 = random_velocity_profile(*L.vs, seed, true);
    const double h3 = L.vs->grid.weight();
    std::vector<std::pair<double, double>> pts;
    for (double r : xi_abs) {
        ModeOperator op = ModeOperator::build(L, {r, 0, 0});
        Eigen::VectorXcd y = propagate_mode(op, f0, t);
        double a = std::sqrt(h3) * y.norm();
        rep.amplitude.emplace_back(r, a);
        pts.emplace_back(std::log(r), std::log(a));
    }
    double mx = 0, my = 0;
    for (auto& [x, y] : pts) mx += x, my += y;
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxx = 0, sxy = 0;
    for (auto& [x, y] : pts) sxx += (x - mx) * (x - mx), sxy += (x - mx) * (y - my);
    rep.slope = sxx > 0 ? sxy / sxx : 0;
    return rep;
}

double heat_branch_threshold(const PointwiseDecayReport& rep, double rel_tol) {
    if (rep.fits.empty()) return 0;
    std::vector<const DecayFit*> f;
    for (const auto& x : rep.fits) f.push_back(&x);
    std::sort(f.begin(), f.end(), [](auto* a, auto* b) { return a->x < b->x; });
    const double ref = f[0]->fitted_rate / (f[0]->x * f[0]->x);
    double xi0 = f[0]->x;
    for (auto* p : f) {
        if (std::abs(p->fitted_rate / (p->x * p->x) / ref - 1.0) > rel_tol) break;
        xi0 = p->x;
    }
    return xi0;
}

std::vector<long> log_spaced_steps(long m_hi, int n) {
    std::vector<long> out{0};
    for (int i = 0; i < n; ++i) {
        double x = std::exp(std::log(static_cast<double>(m_hi)) * i / std::max(1, n - 1));
        long m = std::max(1L, std::lround(x));
        if (m > out.back()) out.push_back(m);
    }
    if (out.back() != m_hi) out.push_back(m_hi);
    return out;
}

namespace {

// Velocity index permutation swapping axis 0 with axis a (identity for a = 0).
std::vector<std::size_t> axis_swap(const VelocityGrid& g, int a) {
    const int n = g.nodes_per_axis();
    std::vector<std::size_t> p(g.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                int c[3] = {i, j, k};
                std::swap(c[0], c[a]);
                p[g.index(i, j, k)] = g.index(c[0], c[1], c[2]);
            }
    return p;
}

Eigen::VectorXcd permute(const Eigen::VectorXcd& x, const std::vector<std::size_t>& p) {
    Eigen::VectorXcd y(x.size());
    for (std::size_t k = 0; k < p.size(); ++k) y[static_cast<Eigen::Index>(k)] = x[static_cast<Eigen::Index>(p[k])];
    return y;
}

// Axis and signed wavenumber of an axis mode; throws for off-axis modes.
std::pair<int, int> axis_of(const SpectralGrid& g, std::size_t m) {
    auto k = g.wavenumbers(m);
    int axis = -1, val = 0;
    for (int a = 0; a < g.dim(); ++a)
        if (k[a] != 0) {
            if (axis >= 0) throw ValidationError("axis-mode evolution got an off-axis mode");
            axis = a;
            val = k[a];
        }
    return {axis, val};
}

}  // namespace

ModeSet synthesize_axis_field(const SpectralGrid& grid, const VelocitySpace& vs, double s0, int k_max,
                              std::uint64_t seed, bool micro_only, double amplitude) {
    if (k_max < 1 || 2 * k_max >= grid.n_x()) throw ValidationError("axis field needs 1 <= k_max < n_x/2");
    ModeSet f{grid, {}, Eigen::MatrixXcd()};
    std::vector<Eigen::VectorXcd> cols;
    CounterRng rng(seed, 0xa515);
    for (int a = 0; a < grid.dim(); ++a)
        for (int k = 1; k <= k_max; ++k) {
            int kk[3] = {0, 0, 0};
            kk[a] = k;
            std::uint64_t stream_seed = seed * 1000003ULL + static_cast<std::uint64_t>(a * 4096 + k);
            Eigen::VectorXcd prof = random_velocity_profile(vs, stream_seed, micro_only);
            const cplx phase = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
            const double r = grid.xi_abs(grid.mode_index(kk[0], kk[1], kk[2]));
            Eigen::VectorXcd c = amplitude * std::pow(r, -s0) * phase * prof;
            f.modes.push_back(grid.mode_index(kk[0], kk[1], kk[2]));
            cols.push_back(c);
            f.modes.push_back(grid.mode_index(-kk[0], -kk[1], -kk[2]));
            cols.push_back(c.conjugate());
        }
    f.data.resize(static_cast<Eigen::Index>(vs.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) f.data.col(static_cast<Eigen::Index>(i)) = cols[i];
    // Flatten 2^{j s0} ||Delta_j f|| by rescaling each mode according to its dominant shell.
    NormEvaluator ev(grid);
    const auto [jmin, jmax] = ev.block_range();
    std::vector<int> home(f.modes.size());
    for (std::size_t i = 0; i < f.modes.size(); ++i) {
        double r = grid.xi_abs(f.modes[i]), best = -1;
        for (int j = jmin; j <= jmax; ++j)
            if (DyadicFilter::block(j, r) > best) best = DyadicFilter::block(j, r), home[i] = j;
    }
    const double dv = vs.grid.weight();
    for (int it = 0; it < 60; ++it) {
        auto b = ev.block_norms(f, dv);
        std::vector<double> scale(b.size(), 1.0);
        double ref = 0;
        int cnt = 0;
        for (std::size_t j = 0; j < b.size(); ++j)
            if (b[j] > 0) ref += std::log(std::exp2((jmin + static_cast<int>(j)) * s0) * b[j]), ++cnt;
        ref = std::exp(ref / std::max(cnt, 1));
        for (std::size_t j = 0; j < b.size(); ++j)
            if (b[j] > 0) scale[j] = std::sqrt(ref / (std::exp2((jmin + static_cast<int>(j)) * s0) * b[j]));
        for (std::size_t i = 0; i < f.modes.size(); ++i)
            f.data.col(static_cast<Eigen::Index>(i)) *= scale[static_cast<std::size_t>(home[i] - jmin)];
    }
    // Restore the requested overall amplitude on the geometric-mean shell level.
    auto b = ev.block_norms(f, dv);
    double lvl = 0;
    int cnt = 0;
    for (std::size_t j = 0; j < b.size(); ++j)
        if (b[j] > 0) lvl += std::log(std::exp2((jmin + static_cast<int>(j)) * s0) * b[j]), ++cnt;
    f.data *= amplitude / std::exp(lvl / std::max(cnt, 1));
    return f;
}

std::vector<std::vector<ModeSet>> evolve_axis_fields(const LinearizedOperator& L, const std::vector<ModeSet>& f0,
                                                     const std::vector<bool>& adjoint, double tau,
                                                     const std::vector<long>& steps) {
    if (f0.empty()) return {};
    const SpectralGrid& grid = f0[0].grid;
    const VelocityGrid& vg = L.vs->grid;
    long m_hi = *std::max_element(steps.begin(), steps.end());
    int levels = 1;
    while ((1L << levels) - 1 < m_hi) ++levels;
    std::vector<std::vector<std::size_t>> perm;
    for (int a = 0; a < 3; ++a) perm.push_back(axis_swap(vg, a));
    std::vector<std::vector<ModeSet>> out(f0.size());
    for (std::size_t v = 0; v < f0.size(); ++v)
        for (std::size_t s = 0; s < steps.size(); ++s) {
            ModeSet ms = f0[v];
            ms.data.setZero();
            out[v].push_back(ms);
        }
    // Group modes by |k| so each propagator is built once.
    std::map<int, std::vector<std::pair<std::size_t, std::size_t>>> by_k;  // |k| -> (variant, column)
    for (std::size_t v = 0; v < f0.size(); ++v)
        for (std::size_t i = 0; i < f0[v].modes.size(); ++i) {
            auto [axis, k] = axis_of(grid, f0[v].modes[i]);
            if (axis < 0) throw ValidationError("axis-mode evolution does not support the zero mode");
            by_k[std::abs(k)].emplace_back(v, i);
        }
    for (const auto& [k, cols] : by_k) {
        const double r = 2.0 * std::numbers::pi * k / grid.box();
        ModePropagator prop(ModeOperator::build(L, {r, 0, 0}), tau, levels);
        for (auto [v, i] : cols) {
            auto [axis, kk] = axis_of(grid, f0[v].modes[i]);
            // B(k e_a) = Pi_a B(k e_1) Pi_a and B(-xi) = conj(B(xi)).
            Eigen::VectorXcd x = permute(f0[v].data.col(static_cast<Eigen::Index>(i)), perm[static_cast<std::size_t>(axis)]);
            if (kk < 0) x = x.conjugate().eval();
            for (std::size_t s = 0; s < steps.size(); ++s) {
                Eigen::VectorXcd y = adjoint[v] ? prop.apply_adjoint(x, steps[s]) : prop.apply(x, steps[s]);
                if (kk < 0) y = y.conjugate().eval();
                out[v][s].data.col(static_cast<Eigen::Index>(i)) = permute(y, perm[static_cast<std::size_t>(axis)]);
            }
        }
    }
    return out;
}

std::vector<BesovDecayReport> verify_besov_decay(const LinearizedOperator& L, const SpectralGrid& grid,
                                                 const std::vector<BesovDecayOptions>& variants) {
    if (variants.empty()) return {};
    const double tau = variants[0].tau, t_hi = variants[0].t_hi;
    int n_samples = variants[0].n_samples;
    for (const auto& o : variants) {
        if (o.tau != tau || o.t_hi != t_hi) throw ValidationError("Besov decay variants must share tau and horizon");
        if (o.s < o.s0) throw ValidationError("Besov decay needs s >= s0");
        n_samples = std::max(n_samples, o.n_samples);
    }
    NormEvaluator ev(grid);
    for (const auto& o : variants) {
        ev.check_regularity(o.s);
        ev.check_regularity(o.s0);
    }
    const int k_max = grid.n_x() / 2 - 1;
    std::vector<ModeSet> f0;
    std::vector<bool> adj;
    for (const auto& o : variants) {
        f0.push_back(synthesize_axis_field(grid, *L.vs, o.s0, k_max, o.seed, o.micro_only));
        adj.push_back(o.adjoint);
    }
    const long m_hi = std::lround(t_hi / tau);
    std::vector<long> steps = log_spaced_steps(m_hi, n_samples);
    auto evolved = evolve_axis_fields(L, f0, adj, tau, steps);
    const double dv = L.vs->grid.weight();
    std::vector<BesovDecayReport> out;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        const auto& o = variants[v];
        BesovDecayReport rep;
        std::vector<std::pair<double, double>> lo, hi;
        for (std::size_t s = 0; s < steps.size(); ++s) {
            ModeSet low = evolved[v][s], high = evolved[v][s];
            for (std::size_t i = 0; i < low.modes.size(); ++i) {
                double w = DyadicFilter::low_pass(o.j0, grid.xi_abs(low.modes[i]));
                low.data.col(static_cast<Eigen::Index>(i)) *= w;
                high.data.col(static_cast<Eigen::Index>(i)) *= 1.0 - w;
            }
            const double t = steps[s] * tau;
            lo.emplace_back(t, ev.besov(low, dv, o.s, BesovQ::Inf));
            hi.emplace_back(t, ev.besov(high, dv, o.s, BesovQ::Inf));
        }
        rep.low = fit_algebraic(lo, o.fit_lo, t_hi * (1 + 1e-12));
        rep.low.label = o.micro_only ? "besov_low_micro" : "besov_low";
        if (o.adjoint) rep.low.label += "_adjoint";
        rep.low.x = o.s;
        rep.low.expected_rate = 0.5 * (o.s - o.s0) + (o.micro_only ? 0.5 : 0.0);
        double hi_end = o.exp_fit_hi;
        if (hi_end <= 0) {
            hi_end = t_hi;
            for (const auto& [t, a] : hi)
                if (t > 0 && a < 1e-10 * hi[0].second) {
                    hi_end = t;
                    break;
                }
        }
        rep.high = fit_exponential(hi, o.fit_lo, hi_end * (1 + 1e-12));
        rep.high.label = "besov_high";
        rep.high.x = o.s;
        auto b = ev.block_norms(f0[v], dv);
        const int jmin = ev.block_range().first;
        for (std::size_t j = 0; j < b.size(); ++j)
            if (b[j] > 0) rep.initial_profile.push_back(std::exp2((jmin + static_cast<int>(j)) * o.s0) * b[j]);
        out.push_back(rep);
    }
    return out;
}

}  // namespace hsboltz

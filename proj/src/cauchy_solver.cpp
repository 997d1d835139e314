#include "hsboltz/cauchy_solver.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iostream>
#include <sstream>

#include "hsboltz/errors.hpp"
#include "hsboltz/linear_semigroup.hpp"
#include "hsboltz/simd.hpp"

namespace hsboltz {

namespace {

constexpr double kArsGamma = 1.0 - 0.70710678118654752440;  // 1 - 1/sqrt(2)
constexpr double kArsDelta = 1.0 - 1.0 / (2.0 * kArsGamma);

}  // namespace

Scheme parse_scheme(const std::string& s) {
    if (s == "imex-euler") return Scheme::ImexEuler;
    if (s == "imex-rk2") return Scheme::ImexRK2;
    if (s == "strang") return Scheme::Strang;
    throw ValidationError("unknown scheme '" + s + "' (expected imex-euler, imex-rk2 or strang)");
}

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::ImexEuler: return "imex-euler";
        case Scheme::ImexRK2: return "imex-rk2";
        case Scheme::Strang: return "strang";
    }
    return "?";
}

void SolverConfig::validate(double nu_max) const {
    if (!(dt > 0) || !std::isfinite(dt)) throw ValidationError("solver dt must be positive");
    if (N < 3) throw ValidationError("solver N must be >= 3");
    if (stencil_order != 4) throw ValidationError("only the 4th-order velocity stencil is implemented");
    if (monitor_every < 0) throw ValidationError("monitor cadence must be nonnegative");
    if (workers < 1) throw ValidationError("worker count must be >= 1");
    if (!(blowup_factor > 1)) throw ValidationError("blow-up factor must exceed 1");
    if (scheme == Scheme::ImexRK2 && dt * nu_max > c_stab)
        throw ValidationError("dt * max(nu) = " + std::to_string(dt * nu_max) + " exceeds the stability bound c_stab = " +
                              std::to_string(c_stab));
}

std::string EnergyTrace::csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "t,step,energy_norm,EH,DH,macro_a,macro_b,macro_c,min_F,l2,dfdt,fL_besov_sq,force_sq\n";
    for (const auto& s : samples)
        os << s.t << ',' << s.step << ',' << s.energy_norm << ',' << s.EH << ',' << s.DH << ',' << s.macro_a << ','
           << s.macro_b << ',' << s.macro_c << ',' << s.min_F << ',' << s.l2 << ',' << s.dfdt << ',' << s.fL_besov_sq
           << ',' << s.force_sq << '\n';
    return os.str();
}

double EnergyTrace::sup_energy() const {
    double m = 0;
    for (const auto& s : samples) m = std::max(m, s.energy_norm);
    return m;
}

ForceTerm::ForceTerm(std::shared_ptr<const VelocitySpace> vs) : vs_(std::move(vs)) {
    const VelocitySpace& v = *vs_;
    const auto n = static_cast<Eigen::Index>(v.size());
    Enull_.resize(n, 5);
    for (int i = 0; i < 5; ++i) Enull_.col(i) = v.nb.e[i];
    // Null basis vectors are p_i(v) sqrt(M) with p_i in span{1, v_1, v_2, v_3, |v|^2}.
    Eigen::MatrixXd Phi(n, 5);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Vec3& x = v.grid.node(static_cast<std::size_t>(k));
        Phi.row(k) << 1.0, x[0], x[1], x[2], dot(x, x);
    }
    const Eigen::MatrixXd P = Enull_.array().colwise() / v.mt.sqrtM.array();
    const Eigen::MatrixXd A = Phi.colPivHouseholderQr().solve(P);  // 5 x 5, column i = coefficients of p_i
    for (int b = 0; b < 3; ++b) {
        moment_[b].resize(n, 5);
        for (int i = 0; i < 5; ++i)
            for (Eigen::Index k = 0; k < n; ++k) {
                const double dp = A(1 + b, i) + 2.0 * A(4, i) * v.grid.node(static_cast<std::size_t>(k))[b];
                moment_[b](k, i) = v.grid.weight() * dp * v.mt.sqrtM[k];
            }
    }
}

void ForceTerm::accumulate(const Eigen::MatrixXd& E, double theta, const Eigen::MatrixXd& f,
                           Eigen::MatrixXd& out) const {
    const VelocitySpace& v = *vs_;
    const auto n_vel = f.rows(), n_pts = f.cols();
    VelocityDerivative D(v.grid);
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n_vel, n_pts), grad(n_vel, n_pts);
    Eigen::MatrixXd target = Eigen::MatrixXd::Zero(5, n_pts);
    for (int a = 0; a < 3; ++a) {
        if (E.col(a).cwiseAbs().maxCoeff() == 0.0) continue;
        D.apply(a, f.data(), grad.data(), static_cast<std::size_t>(n_pts));
        const Eigen::MatrixXd mom = moment_[a].transpose() * f;  // 5 x n_pts
        for (Eigen::Index x = 0; x < n_pts; ++x) {
            const double e = theta * E(x, a);
            for (Eigen::Index k = 0; k < n_vel; ++k)
                T(k, x) += e * (0.5 * v.grid.node(static_cast<std::size_t>(k))[a] * f(k, x) - grad(k, x));
            target.col(x) += e * mom.col(x);
        }
    }
    const Eigen::MatrixXd current = v.grid.weight() * (Enull_.transpose() * T);
    out += T + Enull_ * (target - current);
}

CauchySolver::CauchySolver(std::shared_ptr<const LinearizedOperator> L, std::shared_ptr<const CollisionOperator> op,
                           const SpectralGrid& grid, ForceField E, SolverConfig cfg)
    : L_(std::move(L)), op_(std::move(op)), grid_(grid), E_(std::move(E)), cfg_(cfg) {
    cfg_.validate(L_->nu.maxCoeff());
    if (E_.grid().size() != grid_.size() || E_.grid().dim() != grid_.dim() || E_.grid().box() != grid_.box())
        throw ValidationError("force field grid does not match the solver grid");
    if (!E_.stationary()) {
        const double T = E_.period();
        steps_per_period_ = std::lround(T / cfg_.dt);
        if (steps_per_period_ < 1 || std::abs(steps_per_period_ * cfg_.dt - T) > 1e-9 * T)
            throw ValidationError("force period must be an integer multiple of dt");
    }
    const VelocitySpace& vs = *L_->vs;
    const auto n = static_cast<Eigen::Index>(vs.size());
    retained_.resize(grid_.size());
    for (std::size_t m = 0; m < grid_.size(); ++m) retained_[m] = grid_.retained(m) ? 1 : 0;
    // Dealiased base force: physical samples and the source term basis v_a sqrt(M).
    std::array<Eigen::VectorXcd, 3> Eb = E_.base_spectrum();
    for (auto& c : Eb)
        for (std::size_t m = 0; m < grid_.size(); ++m)
            if (!retained_[m]) c[static_cast<Eigen::Index>(m)] = 0;
    E_phys_.resize(static_cast<Eigen::Index>(grid_.size()), 3);
    for (int a = 0; a < 3; ++a) {
        SpatialSpectrum s(grid_);
        s.coeffs = Eb[a];
        E_phys_.col(a) = s.to_physical().real();
    }
    truncated_E_ = Eb;
    Ev_sqrtM_.resize(n, 3);
    for (Eigen::Index k = 0; k < n; ++k)
        for (int a = 0; a < 3; ++a) Ev_sqrtM_(k, a) = vs.grid.node(static_cast<std::size_t>(k))[a] * vs.mt.sqrtM[k];
    Enull_.resize(n, 5);
    for (int i = 0; i < 5; ++i) Enull_.col(i) = vs.nb.e[i];
    plan_ = std::make_unique<FftPlan>(grid_, vs.size());
    zero_mode_ = grid_.mode_index(0, 0, 0);
    ev_ = std::make_unique<NormEvaluator>(grid_);
    force_term_ = std::make_unique<ForceTerm>(L_->vs);
    if (cfg_.scheme == Scheme::Strang) build_propagators();
}

void CauchySolver::build_propagators() {
    const std::size_t n = L_->size();
    prop_slot_.assign(grid_.size(), -1);
    prop_conj_.assign(grid_.size(), 0);
    std::size_t distinct = 0;
    for (std::size_t m = 0; m < grid_.size(); ++m)
        if (retained_[m] && grid_.conjugate(m) >= m) ++distinct;
    const double bytes = static_cast<double>(distinct) * static_cast<double>(n * n) * sizeof(cplx);
    if (bytes > cfg_.max_propagator_bytes)
        throw BudgetError("strang propagators need " + std::to_string(bytes) + " bytes, above the budget " +
                          std::to_string(cfg_.max_propagator_bytes));
    half_prop_.reserve(distinct);
    for (std::size_t m = 0; m < grid_.size(); ++m) {
        if (!retained_[m]) continue;
        const std::size_t c = grid_.conjugate(m);
        if (c < m && prop_slot_[c] >= 0) {
            prop_slot_[m] = prop_slot_[c];
            prop_conj_[m] = 1;
            continue;
        }
        ModeOperator op = ModeOperator::build(*L_, grid_.xi(m));
        prop_slot_[m] = static_cast<int>(half_prop_.size());
        half_prop_.push_back(expm((0.5 * cfg_.dt) * op.B));
    }
}

Eigen::MatrixXcd CauchySolver::half_linear(const Eigen::MatrixXcd& f) const {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(f.rows(), f.cols());
    for (Eigen::Index m = 0; m < f.cols(); ++m) {
        const int slot = prop_slot_[static_cast<std::size_t>(m)];
        if (slot < 0) continue;
        const Eigen::MatrixXcd& P = half_prop_[static_cast<std::size_t>(slot)];
        if (prop_conj_[static_cast<std::size_t>(m)])
            out.col(m).noalias() = (P * f.col(m).conjugate()).conjugate();
        else
            out.col(m).noalias() = P * f.col(m);
    }
    return out;
}

DistributionField CauchySolver::zero_field() const { return DistributionField(grid_, L_->vs); }

double CauchySolver::phase(long step, double stage) const {
    if (steps_per_period_ == 0) return 0.0;
    long r = step % steps_per_period_;
    if (r < 0) r += steps_per_period_;
    return (static_cast<double>(r) + stage) / static_cast<double>(steps_per_period_);
}

void CauchySolver::dealias(Eigen::MatrixXcd& f) const {
    for (std::size_t m = 0; m < grid_.size(); ++m)
        if (!retained_[m]) f.col(static_cast<Eigen::Index>(m)).setZero();
}

Eigen::MatrixXcd CauchySolver::apply_K(const Eigen::MatrixXcd& f) const {
    Eigen::MatrixXd re = f.real(), im = f.imag();
    Eigen::MatrixXd kr = L_->K * re, ki = L_->K * im;
    Eigen::MatrixXcd out(f.rows(), f.cols());
    out.real() = kr;
    out.imag() = ki;
    return out;
}

Eigen::MatrixXcd CauchySolver::implicit_solve(const Eigen::MatrixXcd& f, double c) const {
    const VelocityGrid& vg = L_->vs->grid;
    Eigen::MatrixXcd out(f.rows(), f.cols());
    const double h = c * cfg_.dt;
    for (Eigen::Index m = 0; m < f.cols(); ++m) {
        const Vec3 xi = grid_.xi(static_cast<std::size_t>(m));
        for (Eigen::Index k = 0; k < f.rows(); ++k) {
            const cplx a(L_->nu[k], dot(vg.node(static_cast<std::size_t>(k)), xi));
            out(k, m) = f(k, m) / (1.0 + h * a);
        }
    }
    return out;
}

Eigen::Matrix<cplx, 5, 1> CauchySolver::zero_macro(const Eigen::MatrixXcd& f) const {
    return L_->vs->grid.weight() * (Enull_.transpose().cast<cplx>() * f.col(static_cast<Eigen::Index>(zero_mode_)));
}

void CauchySolver::set_zero_macro(Eigen::MatrixXcd& f, const Eigen::Matrix<cplx, 5, 1>& c) const {
    auto col = f.col(static_cast<Eigen::Index>(zero_mode_));
    Eigen::Matrix<cplx, 5, 1> cur = zero_macro(f);
    col += Enull_.cast<cplx>() * (c - cur);
}

Eigen::MatrixXcd CauchySolver::nonlinear_rhs(const Eigen::MatrixXcd& f, double ph) const {
    const VelocitySpace& vs = *L_->vs;
    const auto n_vel = static_cast<Eigen::Index>(vs.size());
    const auto n_pts = static_cast<Eigen::Index>(grid_.size());
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n_vel, n_pts);
    const double theta = E_.is_zero() ? 0.0 : E_.theta_at_phase(ph);
    const bool forcing = cfg_.force_terms && theta != 0.0;
    if (cfg_.nonlinear || forcing) {
        Eigen::MatrixXcd X = f;
        dealias(X);
        plan_->inverse(X.data());
        const Eigen::MatrixXd fr = X.real();
        Eigen::MatrixXd phys = Eigen::MatrixXd::Zero(n_vel, n_pts);
        if (cfg_.nonlinear) {
            const Eigen::MatrixXd node_major = fr.transpose();
            Eigen::MatrixXd g(n_pts, n_vel);
            op_->gamma_raw_sym_batch(node_major.data(), g.data(), static_cast<std::size_t>(n_pts), cfg_.workers);
            Eigen::MatrixXd gt = g.transpose();
            // (I - P) per point.
            Eigen::MatrixXd coef = vs.grid.weight() * (Enull_.transpose() * gt);
            phys += gt - Enull_ * coef;
        }
        if (forcing) force_term_->accumulate(E_phys_, theta, fr, phys);
        Eigen::MatrixXcd Y = phys.cast<cplx>();
        plan_->forward(Y.data());
        dealias(Y);
        out = Y;
    }
    if (theta != 0.0) {
        for (Eigen::Index m = 0; m < n_pts; ++m) {
            if (!retained_[static_cast<std::size_t>(m)]) continue;
            for (int a = 0; a < 3; ++a) {
                const cplx e = theta * truncated_E_[a][m];
                if (e != 0.0) out.col(m) += e * Ev_sqrtM_.col(a);
            }
        }
    }
    return out;
}

Eigen::MatrixXcd CauchySolver::time_derivative(const Eigen::MatrixXcd& f, double ph) const {
    const VelocityGrid& vg = L_->vs->grid;
    Eigen::MatrixXcd out = apply_K(f) + nonlinear_rhs(f, ph);
    for (Eigen::Index m = 0; m < f.cols(); ++m) {
        const Vec3 xi = grid_.xi(static_cast<std::size_t>(m));
        for (Eigen::Index k = 0; k < f.rows(); ++k)
            out(k, m) -= cplx(L_->nu[k], dot(vg.node(static_cast<std::size_t>(k)), xi)) * f(k, m);
    }
    dealias(out);
    return out;
}

void CauchySolver::step(DistributionField& f) const {
    const double dt = cfg_.dt;
    const long n = f.step;
    const Eigen::MatrixXcd& y0 = f.data;
    const Eigen::Matrix<cplx, 5, 1> m0 = zero_macro(y0);
    Eigen::MatrixXcd y;
    Eigen::Matrix<cplx, 5, 1> m1;
    switch (cfg_.scheme) {
        case Scheme::ImexEuler: {
            Eigen::MatrixXcd N1 = nonlinear_rhs(y0, phase(n, 0.0));
            y = implicit_solve(y0 + dt * (apply_K(y0) + N1), 1.0);
            m1 = m0 + dt * zero_macro(N1);
            break;
        }
        case Scheme::ImexRK2: {
            const double g = kArsGamma, d = kArsDelta;
            Eigen::MatrixXcd N1 = nonlinear_rhs(y0, phase(n, 0.0));
            Eigen::MatrixXcd K1 = apply_K(y0) + N1;
            Eigen::MatrixXcd Y2 = implicit_solve(y0 + dt * g * K1, g);
            Eigen::MatrixXcd N2 = nonlinear_rhs(Y2, phase(n, g));
            Eigen::MatrixXcd K2 = apply_K(Y2) + N2;
            Eigen::MatrixXcd A2(Y2.rows(), Y2.cols());
            const VelocityGrid& vg = L_->vs->grid;
            for (Eigen::Index m = 0; m < Y2.cols(); ++m) {
                const Vec3 xi = grid_.xi(static_cast<std::size_t>(m));
                for (Eigen::Index k = 0; k < Y2.rows(); ++k)
                    A2(k, m) = -cplx(L_->nu[k], dot(vg.node(static_cast<std::size_t>(k)), xi)) * Y2(k, m);
            }
            y = implicit_solve(y0 + dt * (d * K1 + (1.0 - d) * K2 + (1.0 - g) * A2), g);
            m1 = m0 + dt * (d * zero_macro(N1) + (1.0 - d) * zero_macro(N2));
            break;
        }
        case Scheme::Strang: {
            // Heun on the explicit terms between the two half-step linear flows.
            Eigen::MatrixXcd f1 = half_linear(y0);
            Eigen::MatrixXcd N1 = nonlinear_rhs(f1, phase(n, 0.0));
            Eigen::MatrixXcd f2 = f1 + dt * N1;
            Eigen::MatrixXcd N2 = nonlinear_rhs(f2, phase(n, 1.0));
            y = half_linear(f1 + 0.5 * dt * (N1 + N2));
            m1 = m0 + 0.5 * dt * (zero_macro(N1) + zero_macro(N2));
            break;
        }
    }
    dealias(y);
    // nu-implicit splitting does not preserve the null space; the zero mode's macro part
    // follows its exact moment equation d/dt P f(0) = P N(f)(0) instead, or stays pinned.
    set_zero_macro(y, cfg_.pin_zero_macro ? m0 : m1);
    const double n_old = y0.norm(), n_new = y.norm();
    if (!std::isfinite(n_new) || (n_old > 0 && n_new > cfg_.blowup_factor * n_old && n_new > 1e-8))
        throw NumericalError("blow-up guard: L2 norm grew by more than " + std::to_string(cfg_.blowup_factor) +
                             "x in one step at step " + std::to_string(n));
    f.data = std::move(y);
    f.step = n + 1;
    f.time = static_cast<double>(f.step) * dt;
}

double CauchySolver::positivity_check(const DistributionField& f, int sample_count) const {
    const VelocitySpace& vs = *L_->vs;
    Eigen::MatrixXcd X = f.data;
    plan_->inverse(X.data());
    const auto n_pts = static_cast<std::size_t>(X.cols());
    const std::size_t stride = std::max<std::size_t>(1, n_pts / static_cast<std::size_t>(std::max(1, sample_count)));
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < n_pts; x += stride)
        for (Eigen::Index k = 0; k < X.rows(); ++k)
            mn = std::min(mn, vs.mt.M[k] + vs.mt.sqrtM[k] * X(k, static_cast<Eigen::Index>(x)).real());
    return mn;
}


TraceSample CauchySolver::monitor(const DistributionField& f, double dfdt) const {
    const VelocitySpace& vs = *L_->vs;
    TraceSample s;
    s.t = f.time;
    s.step = f.step;
    s.l2 = f.l2_norm();
    s.dfdt = dfdt;
    s.min_F = positivity_check(f, cfg_.positivity_samples);
    Eigen::MatrixXcd coef = vs.grid.weight() * (Enull_.transpose().cast<cplx>() * f.data);
    const double vol = grid_.volume();
    s.macro_a = std::sqrt(vol * coef.row(0).squaredNorm());
    s.macro_b = std::sqrt(vol * coef.middleRows(1, 3).squaredNorm());
    s.macro_c = std::sqrt(vol * coef.row(4).squaredNorm());
    const double th = E_.is_zero() ? 0.0 : (E_.stationary() ? 1.0 : E_.theta_at_phase(phase(f.step, 0.0)));
    if (!E_.is_zero()) {
        const double h = vector_inhomogeneous_sobolev(grid_, truncated_E_, cfg_.N);
        s.force_sq = th * th * h * h;
    }
    if (cfg_.full_monitor) {
        NormReport rep = ev_->energy(f, cfg_.s_energy, cfg_.N);
        s.energy_norm = rep.at("total");
        const Eigen::MatrixXcd micro = micro_part(vs, f.data);
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(vs.size()));
        const Eigen::VectorXd nu2 = L_->nu.cwiseAbs2();
        const Eigen::VectorXd nu3 = nu2.cwiseProduct(L_->nu);
        const double N = cfg_.N;
        double mixed_sq = 0, mixed_nu_sq = 0;
        for (double v : mixed_derivative_norms(grid_, vs, micro, cfg_.N)) mixed_sq += v * v;
        for (double v : mixed_derivative_norms(grid_, vs, micro, cfg_.N, &L_->nu)) mixed_nu_sq += v * v;
        s.EH = weighted_sobolev_sq(grid_, vs, micro, nu2, 1) + weighted_sobolev_sq(grid_, vs, micro, nu2, N - 1) +
               weighted_sobolev_sq(grid_, vs, micro, one, 0) + weighted_sobolev_sq(grid_, vs, f.data, one, 1) +
               weighted_sobolev_sq(grid_, vs, f.data, one, N) + mixed_sq;
        s.DH = weighted_sobolev_sq(grid_, vs, micro, nu3, 1) + weighted_sobolev_sq(grid_, vs, micro, nu3, N - 1) +
               mixed_nu_sq;
        for (int l = 0; l <= cfg_.N; ++l) s.DH += weighted_sobolev_sq(grid_, vs, micro, L_->nu, l);
        auto [fl, fh] = low_high_split(f, cfg_.low_split);
        const double b = ev_->besov(fl, 0.5, BesovQ::Inf);
        s.fL_besov_sq = b * b;
    }
    return s;
}

EnergyTrace CauchySolver::solve(DistributionField& f, long n_steps) const {
    EnergyTrace tr;
    tr.samples.push_back(monitor(f));
    bool warned = false;
    for (long i = 0; i < n_steps; ++i) {
        const bool sample = (cfg_.monitor_every > 0 && (i + 1) % cfg_.monitor_every == 0) || i + 1 == n_steps;
        Eigen::MatrixXcd prev;
        if (sample) prev = f.data;
        step(f);
        if (sample) {
            const double dfdt = std::sqrt(grid_.volume() * L_->vs->grid.weight()) * (f.data - prev).norm() / cfg_.dt;
            tr.samples.push_back(monitor(f, dfdt));
            if (!warned && tr.samples.back().min_F < -cfg_.tol_pos) {
                std::cerr << "warning: positivity monitor min F = " << tr.samples.back().min_F << " at t = " << f.time
                          << "\n";
                warned = true;
            }
        }
    }
    return tr;
}

void evolve_pair(const CauchySolver& solver, DistributionField& f1, DistributionField& f2,
                 const std::vector<long>& sample_steps,
                 const std::function<void(std::size_t, const DistributionField&, const DistributionField&)>& on_sample) {
    long done = 0;
    const bool concurrent = solver.config().workers >= 2;
    for (std::size_t k = 0; k < sample_steps.size(); ++k) {
        const long target = sample_steps[k];
        if (target < done) throw ValidationError("sample steps must be non-decreasing");
        auto advance = [&](DistributionField& f) {
            for (long i = done; i < target; ++i) solver.step(f);
        };
        if (concurrent) {
            auto other = std::async(std::launch::async, [&] { advance(f2); });
            advance(f1);
            other.get();
        } else {
            advance(f1);
            advance(f2);
        }
        done = target;
        on_sample(k, f1, f2);
    }
}

std::shared_ptr<const CollisionOperator> make_stepping_collision(std::shared_ptr<const VelocitySpace> vs,
                                                                 Budget budget) {
    auto op = std::make_shared<CollisionOperator>(std::move(vs), budget);
    op->build_collision_table(budget.max_dense_bytes);
    return op;
}

LyapunovReport lyapunov_monitor(const EnergyTrace& trace, double C_max, double lambda_max) {
    const auto& s = trace.samples;
    if (s.size() < 10) throw ValidationError("lyapunov monitor needs at least 10 trace samples");
    LyapunovReport rep;
    bool all_zero = true;
    for (const auto& x : s)
        if (x.EH != 0) all_zero = false;
    if (all_zero) {
        rep.trivial = true;
        rep.lambda = lambda_max;
        rep.C = 0;
        rep.binding_term = "none";
        return rep;
    }
    const std::size_t n = s.size();
    std::vector<double> dE(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t a = i == 0 ? 0 : i - 1, b = i + 1 == n ? n - 1 : i + 1;
        dE[i] = (s[b].EH - s[a].EH) / (s[b].t - s[a].t);
    }
    auto C_of = [&](double lam, std::size_t* arg) {
        double C = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double lhs = dE[i] + lam * s[i].EH;
            const double rhs = s[i].force_sq + s[i].fL_besov_sq;
            double c;
            if (rhs > 0)
                c = lhs / rhs;
            else
                c = lhs > 1e-300 ? std::numeric_limits<double>::infinity() : 0.0;
            if (c > C) {
                C = c;
                if (arg) *arg = i;
            }
        }
        return C;
    };
    rep.lambda = 0;
    std::size_t arg = 0;
    rep.C = C_of(0, &arg);
    for (int k = 0; k <= 400; ++k) {
        const double lam = lambda_max * std::pow(10.0, -k / 40.0);
        std::size_t a = 0;
        const double C = C_of(lam, &a);
        if (C <= C_max) {
            rep.lambda = lam;
            rep.C = C;
            arg = a;
            break;
        }
    }
    rep.binding_sample = arg;
    rep.binding_term = s[arg].force_sq >= s[arg].fL_besov_sq ? "force" : "low_frequency";
    return rep;
}

Eigen::Matrix<cplx, 5, 1> zero_mode_moments(const DistributionField& f) {
    const VelocitySpace& vs = *f.vs;
    Eigen::MatrixXd E(static_cast<Eigen::Index>(vs.size()), 5);
    for (int i = 0; i < 5; ++i) E.col(i) = vs.nb.e[i];
    return vs.grid.weight() * (E.transpose().cast<cplx>() * f.data.col(0));
}

}  // namespace hsboltz

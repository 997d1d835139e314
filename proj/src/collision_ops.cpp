#include "hsboltz/collision_ops.hpp"

#include <lapacke.h>

#include <algorithm>
#include <numbers>

#include "hsboltz/parallel.hpp"
#include "hsboltz/simd.hpp"

namespace hsboltz {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Fixed chunk count for scatter reductions so the summation order never depends on workers.
constexpr std::size_t kScatterChunks = 64;

double pair_distance(const Vec3& a, const Vec3& b) {
    double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

CollisionOperator::CollisionOperator(std::shared_ptr<const VelocitySpace> vs, Budget budget)
    : vs_(std::move(vs)), budget_(budget) {
    const double work = static_cast<double>(vs_->grid.size()) * vs_->grid.n_angular();
    if (work > budget_.max_collision_work)
        throw BudgetError("collision quadrature n_v^3 * n_angular = " + std::to_string(work) +
                          " exceeds budget " + std::to_string(budget_.max_collision_work));
    inv_sqrtM_ = vs_->mt.sqrtM.cwiseInverse();
}

VelocityFunction CollisionOperator::q_raw(const VelocityFunction& F, const VelocityFunction& G) const {
    const auto& sM = vs_->mt.sqrtM;
    return sM.cwiseProduct(gamma_raw(F.cwiseProduct(inv_sqrtM_), G.cwiseProduct(inv_sqrtM_)));
}

double CollisionOperator::j_stencil(const Vec3& p, simd::Stencil8& s) const {
    s = vs_->grid.stencil(p);
    const auto& sM = vs_->mt.sqrtM;
    double lin = 0;
    for (int q = 0; q < 8; ++q) lin += s.w[q] * sM[s.idx[q]];
    double exact = std::sqrt(maxwellian(p));
    double scale = exact / lin;
    for (int q = 0; q < 8; ++q) s.w[q] *= scale;
    return exact;
}

VelocityFunction CollisionOperator::q_bilinear(const VelocityFunction& F, const VelocityFunction& G) const {
    VelocityFunction g = q_raw(F, G).cwiseProduct(inv_sqrtM_);
    g -= vs_->nb.project(vs_->grid, g);
    return g.cwiseProduct(vs_->mt.sqrtM);
}

VelocityFunction CollisionOperator::gamma_raw(const VelocityFunction& g1, const VelocityFunction& g2) const {
    VelocityFunction out(g1.size());
    gamma_raw_batch(g1.data(), g2.data(), out.data(), 1, 1);
    return out;
}

VelocityFunction CollisionOperator::gamma(const VelocityFunction& g1, const VelocityFunction& g2) const {
    VelocityFunction g = gamma_raw(g1, g2);
    return g - vs_->nb.project(vs_->grid, g);
}

bool CollisionOperator::build_collision_table(double max_bytes) {
    const auto& grid = vs_->grid;
    const std::size_t n = grid.size();
    const AngularRule& half = grid.half_sphere();
    const double pairs = 0.5 * static_cast<double>(n) * (n - 1) * half.dirs.size();
    const double bytes = pairs * sizeof(TableEntry) + 8.0 * n * n;
    if (bytes > max_bytes) return false;
    const auto& sM = vs_->mt.sqrtM;
    const int nv = grid.nodes_per_axis();
    const double R = grid.extent(), h = grid.spacing();
    auto fractions = [&](const Vec3& p, std::uint32_t& base, double* f) {
        int i0[3];
        for (int a = 0; a < 3; ++a) {
            double t = (p[a] + R) / h - 0.5;
            int i = std::clamp(static_cast<int>(std::floor(t)), 0, nv - 2);
            i0[a] = i;
            f[a] = std::clamp(t - i, 0.0, 1.0);
        }
        base = static_cast<std::uint32_t>(grid.index(i0[0], i0[1], i0[2]));
    };
    auto scale = [&](const Vec3& p) {
        simd::Stencil8 l = grid.stencil(p);
        double lin = 0;
        for (int q = 0; q < 8; ++q) lin += l.w[q] * sM[l.idx[q]];
        return std::sqrt(maxwellian(p)) / lin;
    };
    table_.clear();
    table_.reserve(static_cast<std::size_t>(pairs));
    row_start_.assign(n + 1, 0);
    for (std::size_t a = 0; a < n; ++a) {
        row_start_[a] = table_.size();
        const Vec3& v = grid.node(a);
        for (std::size_t b = a + 1; b < n; ++b) {
            const Vec3& vs = grid.node(b);
            Vec3 u{v[0] - vs[0], v[1] - vs[1], v[2] - vs[2]};
            double un = norm(u);
            double eta = grid.angular_normalisation({u[0] / un, u[1] / un, u[2] / un});
            for (std::size_t m = 0; m < half.dirs.size(); ++m) {
                const Vec3& w = half.dirs[m];
                double uw = dot(u, w);
                double B = std::abs(uw) * eta;
                if (B == 0.0) continue;
                Vec3 vp{v[0] - uw * w[0], v[1] - uw * w[1], v[2] - uw * w[2]};
                Vec3 vsp{vs[0] + uw * w[0], vs[1] + uw * w[1], vs[2] + uw * w[2]};
                TableEntry e;
                e.b = static_cast<std::uint32_t>(b);
                fractions(vp, e.base1, e.f1);
                fractions(vsp, e.base2, e.f2);
                double c = grid.weight() * half.weights[m] * B * scale(vp) * scale(vsp);
                e.cA = c * sM[b];
                e.cB = c * sM[a];
                table_.push_back(e);
            }
        }
    }
    row_start_[n] = table_.size();
    loss_kernel_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t a = 0; a < n; ++a)
            loss_kernel_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                kTwoPi * grid.weight() * pair_distance(grid.node(a), grid.node(b)) * sM[b];
    return true;
}

void CollisionOperator::batch_chunk(const double* g1, const double* g2, double* out, std::size_t n_pts,
                                    std::size_t x0, std::size_t x1, bool symmetric) const {
    const std::size_t n = vs_->grid.size();
    const std::uint32_t nv = static_cast<std::uint32_t>(vs_->grid.nodes_per_axis());
    const auto& kern = simd::active();
    const std::size_t w = x1 - x0;
    auto expand = [&](std::uint32_t base, const double* f, simd::Stencil8& s) {
        // Same node order as VelocityGrid::stencil: (di, dj, dk) with dk fastest.
        const double wx[2] = {1 - f[0], f[0]}, wy[2] = {1 - f[1], f[1]}, wz[2] = {1 - f[2], f[2]};
        int q = 0;
        for (std::uint32_t di = 0; di < 2; ++di)
            for (std::uint32_t dj = 0; dj < 2; ++dj)
                for (std::uint32_t dk = 0; dk < 2; ++dk, ++q) {
                    s.idx[q] = base + di * nv * nv + dj * nv + dk;
                    s.w[q] = wx[di] * wy[dj] * wz[dk];
                }
    };
    for (std::size_t a = 0; a < n; ++a) std::fill(out + a * n_pts + x0, out + a * n_pts + x1, 0.0);
    simd::Stencil8 s1, s2;
    for (std::size_t a = 0; a < n; ++a) {
        double* accA = out + a * n_pts + x0;
        for (std::size_t t = row_start_[a]; t < row_start_[a + 1]; ++t) {
            const TableEntry& e = table_[t];
            expand(e.base1, e.f1, s1);
            expand(e.base2, e.f2, s2);
            double* accB = out + e.b * n_pts + x0;
            if (symmetric) {
                kern.pair_accumulate(accA, accB, g1 + x0, n_pts, s1, s2, e.cA, e.cB, w);
            } else {
                kern.gain_accumulate(accA, g1 + x0, g2 + x0, n_pts, s1, s2, e.cA, w);
                kern.gain_accumulate(accB, g1 + x0, g2 + x0, n_pts, s2, s1, e.cB, w);
            }
        }
    }
    std::vector<double> loss(w);
    for (std::size_t a = 0; a < n; ++a) {
        std::fill(loss.begin(), loss.end(), 0.0);
        for (std::size_t b = 0; b < n; ++b) {
            const double A = loss_kernel_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            const double* g2b = g2 + b * n_pts + x0;
            for (std::size_t x = 0; x < w; ++x) loss[x] += A * g2b[x];
        }
        const double* g1a = g1 + a * n_pts + x0;
        double* acc = out + a * n_pts + x0;
        for (std::size_t x = 0; x < w; ++x) acc[x] -= g1a[x] * loss[x];
    }
}

void CollisionOperator::batch_chunk_direct(const double* g1, const double* g2, double* out, std::size_t n_pts,
                                           std::size_t x0, std::size_t x1) const {
    const auto& grid = vs_->grid;
    const auto& sM = vs_->mt.sqrtM;
    const std::size_t n = grid.size();
    const auto& kern = simd::active();
    const double loss_c = kTwoPi * grid.weight();
    const std::size_t w = x1 - x0;
    std::vector<double> loss(w);
    for (std::size_t a = 0; a < n; ++a) {
        double* acc = out + a * n_pts + x0;
        std::fill(acc, acc + w, 0.0);
        for_each_collision(a, [&](std::size_t b, double coef, const simd::Stencil8& s1, const simd::Stencil8& s2,
                                  double, double) {
            kern.gain_accumulate(acc, g1 + x0, g2 + x0, n_pts, s1, s2, coef * sM[b], w);
        });
        std::fill(loss.begin(), loss.end(), 0.0);
        for (std::size_t b = 0; b < n; ++b) {
            double A = loss_c * pair_distance(grid.node(a), grid.node(b)) * sM[b];
            const double* g2b = g2 + b * n_pts + x0;
            for (std::size_t x = 0; x < w; ++x) loss[x] += A * g2b[x];
        }
        const double* g1a = g1 + a * n_pts + x0;
        for (std::size_t x = 0; x < w; ++x) acc[x] -= g1a[x] * loss[x];
    }
}

void CollisionOperator::gamma_raw_batch(const double* g1, const double* g2, double* out, std::size_t n_pts,
                                        std::size_t workers) const {
    parallel_for(n_pts, workers, [&](std::size_t x0, std::size_t x1) {
        if (table_.empty()) batch_chunk_direct(g1, g2, out, n_pts, x0, x1);
        else batch_chunk(g1, g2, out, n_pts, x0, x1, false);
    });
}

void CollisionOperator::gamma_raw_sym_batch(const double* f, double* out, std::size_t n_pts,
                                            std::size_t workers) const {
    parallel_for(n_pts, workers, [&](std::size_t x0, std::size_t x1) {
        if (table_.empty()) batch_chunk_direct(f, f, out, n_pts, x0, x1);
        else batch_chunk(f, f, out, n_pts, x0, x1, true);
    });
}

Eigen::MatrixXd CollisionOperator::assemble_k2_raw(std::size_t workers) const {
    const std::size_t n = vs_->grid.size();
    const double bytes = 8.0 * n * n;
    if (bytes * 2 > budget_.max_dense_bytes) throw BudgetError("dense K2 exceeds memory budget");
    const auto& sM = vs_->mt.sqrtM;
    Eigen::MatrixXd K2t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t a = begin; a < end; ++a) {
            double* col = K2t.col(static_cast<Eigen::Index>(a)).data();
            for_each_collision(a, [&](std::size_t b, double coef, const simd::Stencil8& s1, const simd::Stencil8& s2,
                                      double m1, double m2) {
                double c = coef * sM[b];
                for (int q = 0; q < 8; ++q) {
                    col[s1.idx[q]] += c * m2 * s1.w[q];
                    col[s2.idx[q]] += c * m1 * s2.w[q];
                }
            });
        }
    });
    return K2t.transpose();
}

Eigen::MatrixXd CollisionOperator::assemble_k1() const {
    const auto& grid = vs_->grid;
    const auto& sM = vs_->mt.sqrtM;
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd K1(n, n);
    const double c = kTwoPi * grid.weight();
    for (Eigen::Index b = 0; b < n; ++b)
        for (Eigen::Index a = 0; a < n; ++a)
            K1(a, b) = c * sM[a] * sM[b] * pair_distance(grid.node(a), grid.node(b));
    return K1;
}

VelocityFunction CollisionOperator::apply_l_raw(const VelocityFunction& g) const {
    const auto& grid = vs_->grid;
    const auto& sM = vs_->mt.sqrtM;
    const std::size_t n = grid.size();
    VelocityFunction out(n);
    const double c1 = kTwoPi * grid.weight();
    for (std::size_t a = 0; a < n; ++a) {
        double gain = 0;
        for_each_collision(a, [&](std::size_t b, double coef, const simd::Stencil8& s1, const simd::Stencil8& s2,
                                  double m1, double m2) {
            double s1v = 0, s2v = 0;
            for (int q = 0; q < 8; ++q) {
                s1v += s1.w[q] * g[s1.idx[q]];
                s2v += s2.w[q] * g[s2.idx[q]];
            }
            gain += coef * sM[b] * (m2 * s1v + m1 * s2v);
        });
        double k1 = 0;
        for (std::size_t b = 0; b < n; ++b) k1 += pair_distance(grid.node(a), grid.node(b)) * sM[b] * g[b];
        out[a] = vs_->mt.nu[a] * g[a] + c1 * sM[a] * k1 - gain;
    }
    return out;
}

VelocityFunction CollisionOperator::apply_l_raw_transpose(const VelocityFunction& g) const {
    const auto& grid = vs_->grid;
    const auto& sM = vs_->mt.sqrtM;
    const std::size_t n = grid.size();
    std::vector<VelocityFunction> part(kScatterChunks, VelocityFunction::Zero(static_cast<Eigen::Index>(n)));
    const std::size_t chunk = (n + kScatterChunks - 1) / kScatterChunks;
    for (std::size_t ch = 0; ch < kScatterChunks; ++ch) {
        VelocityFunction& acc = part[ch];
        for (std::size_t a = ch * chunk; a < std::min(n, (ch + 1) * chunk); ++a) {
            for_each_collision(a, [&](std::size_t b, double coef, const simd::Stencil8& s1, const simd::Stencil8& s2,
                                      double m1, double m2) {
                double c = coef * sM[b] * g[a];
                for (int q = 0; q < 8; ++q) {
                    acc[s1.idx[q]] += c * m2 * s1.w[q];
                    acc[s2.idx[q]] += c * m1 * s2.w[q];
                }
            });
        }
    }
    VelocityFunction k2t = VelocityFunction::Zero(static_cast<Eigen::Index>(n));
    for (const auto& p : part) k2t += p;
    VelocityFunction out(n);
    const double c1 = kTwoPi * grid.weight();
    for (std::size_t a = 0; a < n; ++a) {
        double k1 = 0;
        for (std::size_t b = 0; b < n; ++b) k1 += pair_distance(grid.node(a), grid.node(b)) * sM[b] * g[b];
        out[a] = vs_->mt.nu[a] * g[a] + c1 * sM[a] * k1 - k2t[a];
    }
    return out;
}

VelocityFunction CollisionOperator::apply_l(const VelocityFunction& g) const {
    const auto& grid = vs_->grid;
    VelocityFunction h = g - vs_->nb.project(grid, g);
    VelocityFunction y = 0.5 * (apply_l_raw(h) + apply_l_raw_transpose(h));
    return y - vs_->nb.project(grid, y);
}

Eigen::VectorXd LinearizedOperator::eigenvalues() const { return symmetric_eigenvalues(L); }

LinearizedOperator assemble_L(const CollisionOperator& op, std::size_t workers) {
    const VelocitySpace& vs = op.space();
    const auto n = static_cast<Eigen::Index>(vs.size());
    LinearizedOperator out;
    out.vs = op.space_ptr();
    out.nu = vs.mt.nu;
    Eigen::MatrixXd Lraw = -op.assemble_k2_raw(workers);
    Lraw += op.assemble_k1();
    Lraw.diagonal() += vs.mt.nu;
    out.raw_asymmetry = (Lraw - Lraw.transpose()).norm() / Lraw.norm();
    Eigen::MatrixXd S = 0.5 * (Lraw + Lraw.transpose());
    Lraw.resize(0, 0);
    Eigen::MatrixXd E(n, 5);
    for (int i = 0; i < 5; ++i) E.col(i) = vs.nb.e[i];
    const double w = vs.grid.weight();
    // P = w E E^T; (I-P) S (I-P) = S - P S - S P + P S P.
    Eigen::MatrixXd SE = S * E;                     // n x 5
    Eigen::Matrix<double, 5, 5> ESE = E.transpose() * SE;
    out.L = S;
    out.L.noalias() -= w * E * SE.transpose();
    out.L.noalias() -= w * SE * E.transpose();
    out.L.noalias() += (w * w) * E * (ESE * E.transpose());
    out.L = 0.5 * (out.L + out.L.transpose()).eval();
    out.K = -out.L;
    out.K.diagonal() += out.nu;
    out.P = w * E * E.transpose();
    return out;
}

std::pair<MacroState, VelocityFunction> project_P(const VelocitySpace& vs, const VelocityFunction& g) {
    auto c = vs.nb.coefficients(vs.grid, g);
    MacroState m;
    m.a = c[0];
    m.b = {c[1], c[2], c[3]};
    m.c = c[4];
    VelocityFunction micro = g;
    for (int i = 0; i < 5; ++i) micro -= c[i] * vs.nb.e[i];
    return {m, micro};
}

VelocityFunction macro_part(const VelocitySpace& vs, const VelocityFunction& g) { return vs.nb.project(vs.grid, g); }

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& A) {
    Eigen::MatrixXd W = A;
    const auto n = static_cast<lapack_int>(A.rows());
    Eigen::VectorXd ev(n);
    lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', n, W.data(), n, ev.data());
    if (info != 0) throw NumericalError("dsyevd failed with info " + std::to_string(info));
    return ev;
}

Eigen::VectorXd symmetric_eigenvalues_range(const Eigen::MatrixXd& A, int il, int iu) {
    Eigen::MatrixXd W = A;
    const auto n = static_cast<lapack_int>(A.rows());
    Eigen::VectorXd ev(n);
    lapack_int m = 0;
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(n));
    double z = 0;
    lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'I', 'L', n, W.data(), n, 0.0, 0.0, il, iu, 0.0, &m,
                                     ev.data(), &z, 1, isuppz.data());
    if (info != 0) throw NumericalError("dsyevr failed with info " + std::to_string(info));
    return ev.head(m);
}

double estimate_kappa0(const LinearizedOperator& Lop) {
    const VelocitySpace& vs = *Lop.vs;
    const auto n = static_cast<Eigen::Index>(Lop.size());
    Eigen::VectorXd isq = Lop.nu.cwiseSqrt().cwiseInverse();
    // A = nu^{-1/2} L nu^{-1/2}; restrict to the complement of span(nu^{-1/2} e_i).
    Eigen::MatrixXd A = isq.asDiagonal() * Lop.L * isq.asDiagonal();
    Eigen::MatrixXd Z(n, 5);
    for (int i = 0; i < 5; ++i) Z.col(i) = isq.cwiseProduct(vs.nb.e[i]);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, 5);
    Eigen::MatrixXd AQ = A * Q;
    Eigen::Matrix<double, 5, 5> QAQ = Q.transpose() * AQ;
    A.noalias() -= Q * AQ.transpose();
    A.noalias() -= AQ * Q.transpose();
    A.noalias() += Q * (QAQ * Q.transpose());
    // Push the excluded directions far above the spectrum so the smallest eigenvalue is kappa0.
    const double shift = 2.0 * (1.0 + A.cwiseAbs().rowwise().sum().maxCoeff());
    A.noalias() += shift * Q * Q.transpose();
    A = 0.5 * (A + A.transpose()).eval();
    double k0 = symmetric_eigenvalues_range(A, 1, 1)[0];
    if (!(k0 > 0)) throw NumericalError("non-positive coercivity constant: assembly is broken");
    return k0;
}

double estimate_kappa0_iterative(const CollisionOperator& op, int max_iter, double tol) {
    const VelocitySpace& vs = op.space();
    const auto n = static_cast<Eigen::Index>(vs.size());
    Eigen::VectorXd isq = vs.mt.nu.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd Z(n, 5);
    for (int i = 0; i < 5; ++i) Z.col(i) = isq.cwiseProduct(vs.nb.e[i]);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, 5);
    auto deflate = [&](Eigen::VectorXd& y) {
        for (int pass = 0; pass < 2; ++pass) y -= Q * (Q.transpose() * y);
    };
    auto apply = [&](const Eigen::VectorXd& y) {
        Eigen::VectorXd h = isq.cwiseProduct(y);
        Eigen::VectorXd r = isq.cwiseProduct(op.apply_l(h));
        deflate(r);
        return r;
    };
    Eigen::VectorXd q0(n);
    for (Eigen::Index k = 0; k < n; ++k) q0[k] = 1.0 + 0.3 * std::sin(1.7 * static_cast<double>(k));
    deflate(q0);
    q0.normalize();
    std::vector<Eigen::VectorXd> V{q0};
    std::vector<double> alpha, beta;
    double prev = 1e300;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd w = apply(V.back());
        double a = w.dot(V.back());
        alpha.push_back(a);
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& v : V) w -= v.dot(w) * v;
        deflate(w);
        double b = w.norm();
        const int m = static_cast<int>(alpha.size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            T(i, i) = alpha[i];
            if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        double theta = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(T, Eigen::EigenvaluesOnly).eigenvalues()[0];
        if (std::abs(theta - prev) < tol * std::abs(theta) || b < 1e-14) {
            prev = theta;
            break;
        }
        prev = theta;
        beta.push_back(b);
        V.push_back(w / b);
    }
    if (!(prev > 0)) throw NumericalError("non-positive coercivity constant from Lanczos");
    return prev;
}

}  // namespace hsboltz

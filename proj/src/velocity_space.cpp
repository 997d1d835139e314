#include "hsboltz/velocity_space.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>

#include "hsboltz/binary_io.hpp"
#include "hsboltz/errors.hpp"

namespace hsboltz {

namespace {

constexpr double kPi = std::numbers::pi;

void add_octahedron(AngularRule& r, double w) {
    for (int a = 0; a < 3; ++a)
        for (double s : {1.0, -1.0}) {
            Vec3 p{0, 0, 0};
            p[a] = s;
            r.dirs.push_back(p);
            r.weights.push_back(w);
        }
}

void add_edges(AngularRule& r, double w) {
    const double c = 1.0 / std::sqrt(2.0);
    for (int zero = 0; zero < 3; ++zero)
        for (double s1 : {1.0, -1.0})
            for (double s2 : {1.0, -1.0}) {
                Vec3 p{};
                int k = 0;
                for (int a = 0; a < 3; ++a) {
                    if (a == zero) p[a] = 0;
                    else p[a] = (k++ == 0 ? s1 : s2) * c;
                }
                r.dirs.push_back(p);
                r.weights.push_back(w);
            }
}

void add_corners(AngularRule& r, double w) {
    const double c = 1.0 / std::sqrt(3.0);
    for (double s1 : {1.0, -1.0})
        for (double s2 : {1.0, -1.0})
            for (double s3 : {1.0, -1.0}) {
                r.dirs.push_back({s1 * c, s2 * c, s3 * c});
                r.weights.push_back(w);
            }
}

// 24 points: all permutations of (+-p, +-q, 0).
void add_pq0(AngularRule& r, double p, double q, double w) {
    const int perms[6][3] = {{0, 1, 2}, {1, 0, 2}, {0, 2, 1}, {2, 0, 1}, {1, 2, 0}, {2, 1, 0}};
    for (auto& pm : perms)
        for (double s1 : {1.0, -1.0})
            for (double s2 : {1.0, -1.0}) {
                Vec3 v{};
                v[pm[0]] = s1 * p;
                v[pm[1]] = s2 * q;
                v[pm[2]] = 0;
                r.dirs.push_back(v);
                r.weights.push_back(w);
            }
}

// 24 points: (+-l, +-l, +-m) with m in each slot.
void add_llm(AngularRule& r, double l, double m, double w) {
    for (int slot = 0; slot < 3; ++slot)
        for (double s1 : {1.0, -1.0})
            for (double s2 : {1.0, -1.0})
                for (double s3 : {1.0, -1.0}) {
                    Vec3 v{};
                    double sg[3] = {s1, s2, s3};
                    for (int a = 0; a < 3; ++a) v[a] = sg[a] * (a == slot ? m : l);
                    r.dirs.push_back(v);
                    r.weights.push_back(w);
                }
}

}  // namespace

AngularRule lebedev_rule(int n) {
    AngularRule r;
    switch (n) {
        case 6:
            add_octahedron(r, 1.0 / 6.0);
            r.degree = 3;
            break;
        case 14:
            add_octahedron(r, 1.0 / 15.0);
            add_corners(r, 3.0 / 40.0);
            r.degree = 5;
            break;
        case 26:
            add_octahedron(r, 1.0 / 21.0);
            add_edges(r, 4.0 / 105.0);
            add_corners(r, 9.0 / 280.0);
            r.degree = 7;
            break;
        case 38:
            add_octahedron(r, 1.0 / 105.0);
            add_corners(r, 9.0 / 280.0);
            add_pq0(r, 0.4597008433809831, 0.8880738339771153, 1.0 / 35.0);
            r.degree = 9;
            break;
        case 50:
            add_octahedron(r, 4.0 / 315.0);
            add_edges(r, 64.0 / 2835.0);
            add_corners(r, 27.0 / 1280.0);
            add_llm(r, 1.0 / std::sqrt(11.0), 3.0 / std::sqrt(11.0), 14641.0 / 725760.0);
            r.degree = 11;
            break;
        default:
            throw ValidationError("angular rule must have 6, 14, 26, 38 or 50 points, got " + std::to_string(n));
    }
    for (auto& w : r.weights) w *= 4.0 * kPi;
    return r;
}

VelocityGrid VelocityGrid::build(double R, int n_v, int n_angular) {
    if (!(R > 0) || !std::isfinite(R)) throw ValidationError("velocity extent R must be positive");
    if (n_v < 4) throw ValidationError("velocity grid needs n_v >= 4");
    if (n_v % 2 != 0) throw ValidationError("velocity grid must be even");
    if (n_angular < 6) throw ValidationError("angular rule needs at least 6 points");
    VelocityGrid g;
    g.R_ = R;
    g.n_v_ = n_v;
    g.h_ = 2.0 * R / n_v;
    g.sphere_ = lebedev_rule(n_angular);
    if (g.sphere_.degree < 5)
        std::cerr << "warning: " << n_angular << "-point angular rule is only exact to degree "
                  << g.sphere_.degree << "\n";
    // Rules are centrally symmetric; keep the first of each +-w pair with doubled weight.
    for (std::size_t m = 0; m < g.sphere_.dirs.size(); ++m) {
        const Vec3& d = g.sphere_.dirs[m];
        bool keep = false;
        for (int a = 0; a < 3; ++a) {
            if (std::abs(d[a]) > 1e-12) {
                keep = d[a] > 0;
                break;
            }
        }
        if (keep) {
            g.half_.dirs.push_back(d);
            g.half_.weights.push_back(2.0 * g.sphere_.weights[m]);
        }
    }
    g.half_.degree = g.sphere_.degree;
    g.nodes_.reserve(static_cast<std::size_t>(n_v) * n_v * n_v);
    for (int i = 0; i < n_v; ++i)
        for (int j = 0; j < n_v; ++j)
            for (int k = 0; k < n_v; ++k) g.nodes_.push_back({g.axis_coord(i), g.axis_coord(j), g.axis_coord(k)});
    return g;
}

std::size_t VelocityGrid::mirror(std::size_t k) const {
    std::size_t n = n_v_;
    std::size_t i = k / (n * n), j = (k / n) % n, l = k % n;
    return index(n_v_ - 1 - static_cast<int>(i), n_v_ - 1 - static_cast<int>(j), n_v_ - 1 - static_cast<int>(l));
}

simd::Stencil8 VelocityGrid::stencil(const Vec3& p) const {
    int i0[3];
    double fr[3];
    for (int a = 0; a < 3; ++a) {
        double t = (p[a] + R_) / h_ - 0.5;
        int i = static_cast<int>(std::floor(t));
        i = std::clamp(i, 0, n_v_ - 2);
        i0[a] = i;
        fr[a] = std::clamp(t - i, 0.0, 1.0);
    }
    simd::Stencil8 s;
    int q = 0;
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
            for (int dk = 0; dk < 2; ++dk) {
                s.idx[q] = static_cast<std::uint32_t>(index(i0[0] + di, i0[1] + dj, i0[2] + dk));
                s.w[q] = (di ? fr[0] : 1 - fr[0]) * (dj ? fr[1] : 1 - fr[1]) * (dk ? fr[2] : 1 - fr[2]);
                ++q;
            }
    return s;
}

double VelocityGrid::angular_normalisation(const Vec3& u_hat) const {
    double s = 0;
    for (std::size_t m = 0; m < half_.dirs.size(); ++m) s += half_.weights[m] * std::abs(dot(u_hat, half_.dirs[m]));
    return 2.0 * kPi / s;
}

double maxwellian(const Vec3& v) { return std::pow(2.0 * kPi, -1.5) * std::exp(-0.5 * dot(v, v)); }

double collision_frequency(const Vec3& v, const VelocityGrid& grid) {
    // The angular rule is renormalised so that sum_w B(u,w) = 2 pi |u| exactly.
    double s = 0;
    for (const auto& vs : grid.nodes()) {
        Vec3 u{v[0] - vs[0], v[1] - vs[1], v[2] - vs[2]};
        s += norm(u) * maxwellian(vs);
    }
    return 2.0 * kPi * grid.weight() * s;
}

double gaussian_tail_mass(double R) {
    double e = std::erf(R / std::sqrt(2.0));
    return 1.0 - e * e * e;
}

MaxwellianTable MaxwellianTable::build(const VelocityGrid& grid) {
    MaxwellianTable t;
    const std::size_t n = grid.size();
    t.M.resize(n);
    t.sqrtM.resize(n);
    t.nu.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        t.M[k] = maxwellian(grid.node(k));
        t.sqrtM[k] = std::sqrt(t.M[k]);
    }
    // nu(v_k) = 2 pi h^3 sum_* |v_k - v_*| M_*; symmetric pairwise distances computed once.
    t.nu.setZero();
    const double c = 2.0 * kPi * grid.weight();
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3& v = grid.node(k);
        double s = 0;
        for (std::size_t l = 0; l < n; ++l) {
            const Vec3& w = grid.node(l);
            double dx = v[0] - w[0], dy = v[1] - w[1], dz = v[2] - w[2];
            s += std::sqrt(dx * dx + dy * dy + dz * dz) * t.M[l];
        }
        t.nu[k] = c * s;
    }
    t.mass = grid.weight() * t.M.sum();
    t.tail_mass = gaussian_tail_mass(grid.extent());
    t.c1 = 1e300;
    t.c2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double r = t.nu[k] / bracket(grid.node(k));
        t.c1 = std::min(t.c1, r);
        t.c2 = std::max(t.c2, r);
    }
    return t;
}

Eigen::Matrix<double, 5, 1> NullBasis::coefficients(const VelocityGrid& grid, const VelocityFunction& g) const {
    Eigen::Matrix<double, 5, 1> c;
    for (int i = 0; i < 5; ++i) c[i] = grid.inner(e[i], g);
    return c;
}

VelocityFunction NullBasis::project(const VelocityGrid& grid, const VelocityFunction& g) const {
    auto c = coefficients(grid, g);
    VelocityFunction p = VelocityFunction::Zero(g.size());
    for (int i = 0; i < 5; ++i) p += c[i] * e[i];
    return p;
}

NullBasis build_null_basis(const VelocityGrid& grid, const MaxwellianTable& mt) {
    const std::size_t n = grid.size();
    std::array<VelocityFunction, 5> raw;
    for (auto& r : raw) r.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3& v = grid.node(k);
        raw[0][k] = mt.sqrtM[k];
        raw[1][k] = v[0] * mt.sqrtM[k];
        raw[2][k] = v[1] * mt.sqrtM[k];
        raw[3][k] = v[2] * mt.sqrtM[k];
        raw[4][k] = dot(v, v) * mt.sqrtM[k];
    }
    Eigen::Matrix<double, 5, 5> G;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) G(i, j) = grid.inner(raw[i], raw[j]);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(G);
    NullBasis nb;
    nb.gram_condition = es.eigenvalues().maxCoeff() / std::max(es.eigenvalues().minCoeff(), 1e-300);
    if (!(nb.gram_condition <= 1e8))
        throw NumericalError("null basis Gram matrix is ill-conditioned (grid too coarse)");
    // Modified Gram-Schmidt, applied twice for stability.
    for (int i = 0; i < 5; ++i) {
        VelocityFunction q = raw[i];
        for (int pass = 0; pass < 2; ++pass)
            for (int j = 0; j < i; ++j) q -= grid.inner(nb.e[j], q) * nb.e[j];
        nb.e[i] = q / std::sqrt(grid.inner(q, q));
    }
    return nb;
}

std::shared_ptr<const VelocitySpace> VelocitySpace::make(double R, int n_v, int n_angular,
                                                         const std::string& cache_dir) {
    auto vs = std::make_shared<VelocitySpace>(VelocitySpace{VelocityGrid::build(R, n_v, n_angular), {}, {}});
    std::string path = cache_dir.empty() ? "" : cache_dir + "/" + velocity_cache_name(R, n_v, n_angular);
    if (path.empty() || !load_velocity_cache(path, vs->grid, vs->mt)) {
        vs->mt = MaxwellianTable::build(vs->grid);
        if (!path.empty()) save_velocity_cache(path, vs->grid, vs->mt);
    }
    vs->nb = build_null_basis(vs->grid, vs->mt);
    return vs;
}

std::string velocity_cache_name(double R, int n_v, int n_angular) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "velocity_R%.6g_nv%d_na%d.bin", R, n_v, n_angular);
    return buf;
}

static constexpr char kVelMagic[9] = "HSBVEL01";

void save_velocity_cache(const std::string& path, const VelocityGrid& grid, const MaxwellianTable& mt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write cache file " + path);
    binio::put_magic(os, kVelMagic);
    binio::put<double>(os, grid.extent());
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(grid.nodes_per_axis()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(grid.n_angular()));
    binio::put_f64_array(os, mt.M.data(), mt.M.size());
    binio::put_f64_array(os, mt.sqrtM.data(), mt.sqrtM.size());
    binio::put_f64_array(os, mt.nu.data(), mt.nu.size());
    binio::put<double>(os, mt.mass);
    binio::put<double>(os, mt.tail_mass);
    binio::put<double>(os, mt.c1);
    binio::put<double>(os, mt.c2);
}

bool load_velocity_cache(const std::string& path, const VelocityGrid& grid, MaxwellianTable& mt) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return false;
    binio::expect_magic(is, kVelMagic);
    double R = binio::get<double>(is);
    auto nv = binio::get<std::uint32_t>(is);
    auto na = binio::get<std::uint32_t>(is);
    if (R != grid.extent() || static_cast<int>(nv) != grid.nodes_per_axis() || static_cast<int>(na) != grid.n_angular())
        return false;
    auto load = [&](VelocityFunction& v) {
        auto a = binio::get_f64_array(is);
        if (a.size() != grid.size()) throw ValidationError("velocity cache size mismatch");
        v = Eigen::Map<VelocityFunction>(a.data(), static_cast<Eigen::Index>(a.size()));
    };
    load(mt.M);
    load(mt.sqrtM);
    load(mt.nu);
    mt.mass = binio::get<double>(is);
    mt.tail_mass = binio::get<double>(is);
    mt.c1 = binio::get<double>(is);
    mt.c2 = binio::get<double>(is);
    return true;
}

}  // namespace hsboltz

#include "hsboltz/cli_io.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "CLI11.hpp"

#include "hsboltz/linear_semigroup.hpp"
#include "hsboltz/period_map.hpp"
#include "hsboltz/stability_harness.hpp"

#ifndef HSBOLTZ_VERSION
#define HSBOLTZ_VERSION "unknown"
#endif

namespace hsboltz {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json yaml_to_json(const YAML::Node& n) {
    switch (n.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined:
            return nullptr;
        case YAML::NodeType::Sequence: {
            json a = json::array();
            for (const auto& c : n) a.push_back(yaml_to_json(c));
            return a;
        }
        case YAML::NodeType::Map: {
            json o = json::object();
            for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
            return o;
        }
        case YAML::NodeType::Scalar: {
            const std::string s = n.Scalar();
            if (n.Tag() == "!") return s;  // quoted scalar
            if (s == "true" || s == "True") return true;
            if (s == "false" || s == "False") return false;
            char* end = nullptr;
            const long long i = std::strtoll(s.c_str(), &end, 10);
            if (!s.empty() && *end == '\0') return i;
            const double d = std::strtod(s.c_str(), &end);
            if (!s.empty() && *end == '\0') return d;
            return s;
        }
    }
    return nullptr;
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ValidationError(where + " must be a table");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) throw ValidationError("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(std::string("config key '") + key + "' has the wrong type");
    }
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

const std::vector<std::string>& experiments() {
    static const std::vector<std::string> e{"semigroup-decay", "besov-decay", "cauchy",
                                            "period-map",      "stationary-oracle", "stability"};
    return e;
}

bool is_nonlinear(const std::string& e) {
    return e == "cauchy" || e == "period-map" || e == "stationary-oracle" || e == "stability";
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + p.string());
    os << s;
}

json fit_json(const DecayFit& f) {
    return {{"label", f.label},        {"model", f.model},       {"x", f.x},
            {"fitted_rate", f.fitted_rate}, {"expected_rate", f.expected_rate}, {"prefactor", f.prefactor},
            {"residual", f.residual}};
}

double param(const json& p, const char* key, double def) {
    double v = def;
    read(p, key, v);
    return v;
}

/// Content hash of a custom force spectrum, so the config hash does not depend on where the file lives.
std::string spectrum_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open force spectrum " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(ss.str());
    return os.str();
}

}  // namespace

nlohmann::ordered_json read_config_tree(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config " + path);
    const std::string ext = fs::path(path).extension().string();
    try {
        json tree = ext == ".json" ? json::parse(is) : yaml_to_json(YAML::LoadFile(path));
        // Force spectrum paths are relative to the config file.
        if (tree.is_object() && tree.contains("force") && tree["force"].is_object() && tree["force"].contains("path") &&
            tree["force"]["path"].is_string()) {
            const fs::path fp = tree["force"]["path"].get<std::string>();
            if (fp.is_relative()) tree["force"]["path"] = (fs::path(path).parent_path() / fp).lexically_normal().string();
        }
        return tree;
    } catch (const YAML::Exception& e) {
        throw ValidationError(std::string("config parse error: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config parse error: ") + e.what());
    }
}

RunConfig config_from_tree(const nlohmann::ordered_json& tree) {
    reject_unknown(tree, "config", {"experiment", "seed", "output", "grid", "solver", "force", "budget", "params"});
    RunConfig c;
    read(tree, "experiment", c.experiment);
    read(tree, "seed", c.seed);
    read(tree, "output", c.output_dir);
    if (tree.contains("grid")) {
        const json& g = tree["grid"];
        reject_unknown(g, "grid", {"R", "n_v", "n_angular", "d", "n_x", "L_box"});
        read(g, "R", c.grid.R);
        read(g, "n_v", c.grid.n_v);
        read(g, "n_angular", c.grid.n_angular);
        read(g, "d", c.grid.d);
        read(g, "n_x", c.grid.n_x);
        read(g, "L_box", c.grid.L_box);
    }
    if (tree.contains("solver")) {
        const json& s = tree["solver"];
        reject_unknown(s, "solver",
                       {"dt", "scheme", "N", "stencil_order", "monitor_every", "workers", "blowup_factor", "tol_pos",
                        "positivity_samples", "nonlinear", "force_terms", "c_stab", "low_split", "s_energy",
                        "full_monitor", "max_propagator_bytes", "pin_zero_macro"});
        read(s, "dt", c.solver.dt);
        if (s.contains("scheme")) c.solver.scheme = parse_scheme(s["scheme"].get<std::string>());
        read(s, "N", c.solver.N);
        read(s, "stencil_order", c.solver.stencil_order);
        read(s, "monitor_every", c.solver.monitor_every);
        read(s, "workers", c.solver.workers);
        read(s, "blowup_factor", c.solver.blowup_factor);
        read(s, "tol_pos", c.solver.tol_pos);
        read(s, "positivity_samples", c.solver.positivity_samples);
        read(s, "nonlinear", c.solver.nonlinear);
        read(s, "force_terms", c.solver.force_terms);
        read(s, "c_stab", c.solver.c_stab);
        read(s, "low_split", c.solver.low_split);
        read(s, "s_energy", c.solver.s_energy);
        read(s, "full_monitor", c.solver.full_monitor);
        read(s, "pin_zero_macro", c.solver.pin_zero_macro);
        read(s, "max_propagator_bytes", c.solver.max_propagator_bytes);
    }
    if (tree.contains("force")) {
        const json& f = tree["force"];
        reject_unknown(f, "force",
                       {"kind", "amplitude", "sigma", "eps", "m", "path", "modulation", "period", "delta"});
        read(f, "kind", c.force.kind);
        read(f, "amplitude", c.force.amplitude);
        read(f, "sigma", c.force.sigma);
        read(f, "eps", c.force.eps);
        read(f, "m", c.force.m);
        read(f, "path", c.force.path);
        read(f, "modulation", c.force.modulation);
        read(f, "period", c.force.period);
        read(f, "delta", c.force.delta);
    }
    if (tree.contains("budget")) {
        const json& b = tree["budget"];
        reject_unknown(b, "budget", {"max_collision_work", "max_dense_bytes"});
        read(b, "max_collision_work", c.budget.max_collision_work);
        read(b, "max_dense_bytes", c.budget.max_dense_bytes);
    }
    if (tree.contains("params")) {
        if (!tree["params"].is_object()) throw ValidationError("params must be a table");
        c.experiment_params = tree["params"];
    }
    // Canonical form: every resolved value, so configs differing only in defaults hash equally.
    c.canonical = {{"experiment", c.experiment},
                   {"seed", c.seed},
                   {"grid",
                    {{"R", c.grid.R},
                     {"n_v", c.grid.n_v},
                     {"n_angular", c.grid.n_angular},
                     {"d", c.grid.d},
                     {"n_x", c.grid.n_x},
                     {"L_box", c.grid.L_box}}},
                   {"solver",
                    {{"dt", c.solver.dt},
                     {"scheme", scheme_name(c.solver.scheme)},
                     {"N", c.solver.N},
                     {"stencil_order", c.solver.stencil_order},
                     {"monitor_every", c.solver.monitor_every},
                     {"blowup_factor", c.solver.blowup_factor},
                     {"tol_pos", c.solver.tol_pos},
                     {"positivity_samples", c.solver.positivity_samples},
                     {"nonlinear", c.solver.nonlinear},
                     {"force_terms", c.solver.force_terms},
                     {"c_stab", c.solver.c_stab},
                     {"low_split", c.solver.low_split},
                     {"s_energy", c.solver.s_energy},
                     {"full_monitor", c.solver.full_monitor},
                     {"pin_zero_macro", c.solver.pin_zero_macro}}},
                   {"force",
                    {{"kind", c.force.kind},
                     {"amplitude", c.force.amplitude},
                     {"sigma", c.force.sigma},
                     {"eps", c.force.eps},
                     {"m", c.force.m},
                     {"spectrum", c.force.kind == "custom" ? spectrum_digest(c.force.path) : std::string()},
                     {"modulation", c.force.modulation},
                     {"period", c.force.period},
                     {"delta", c.force.delta}}},
                   {"budget",
                    {{"max_collision_work", c.budget.max_collision_work},
                     {"max_dense_bytes", c.budget.max_dense_bytes}}},
                   {"params", c.experiment_params}};
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) { return config_from_tree(read_config_tree(path)); }

void RunConfig::validate() const {
    bool known = false;
    for (const auto& e : experiments()) known = known || e == experiment;
    if (!known) throw ValidationError("unknown experiment '" + experiment + "'");
    if (grid.n_v < 2 || grid.n_v % 2 != 0) throw ValidationError("velocity grid must be even");
    if (!(grid.R > 0)) throw ValidationError("velocity box R must be positive");
    if (grid.n_angular != 6 && grid.n_angular != 14 && grid.n_angular != 26 && grid.n_angular != 38 &&
        grid.n_angular != 50)
        throw ValidationError("n_angular must be one of 6, 14, 26, 38, 50");
    if (grid.d < 1 || grid.d > 3) throw ValidationError("spatial dimension d must be 1, 2 or 3");
    if (grid.n_x < 4 || grid.n_x % 2 != 0) throw ValidationError("spatial grid n_x must be even and >= 4");
    if (!(grid.L_box > 0)) throw ValidationError("box length L_box must be positive");
    if ((experiment == "period-map" || experiment == "stability") && solver.N < 4)
        throw ValidationError("experiment " + experiment + " needs N >= 4");
    if (solver.workers < 1) throw ValidationError("worker count must be >= 1");
    if (force.kind != "zero" && force.kind != "gaussian" && force.kind != "rotational" && force.kind != "custom")
        throw ValidationError("unknown force kind '" + force.kind + "'");
    if (force.modulation != "constant" && force.modulation != "sine" && force.modulation != "smoothed-square")
        throw ValidationError("unknown modulation '" + force.modulation + "'");
    if (force.modulation != "constant" && !(force.period > 0))
        throw ValidationError("a modulated force needs period > 0");
    if (force.kind == "rotational" && grid.d != 3 && grid.d != 2)
        throw ValidationError("rotational force needs d >= 2");
    if (experiment == "stationary-oracle" && force.kind != "gaussian" && force.kind != "zero")
        throw ValidationError("stationary-oracle needs a gaussian potential force");
    // Budget guards evaluated before any allocation.
    const double n_vel = std::pow(static_cast<double>(grid.n_v), 3);
    if (n_vel * grid.n_angular > budget.max_collision_work)
        throw BudgetError("collision quadrature n_v^3 * n_angular = " + std::to_string(n_vel * grid.n_angular) +
                          " exceeds budget " + std::to_string(budget.max_collision_work));
    if (4.0 * 8.0 * n_vel * n_vel > budget.max_dense_bytes)
        throw BudgetError("dense linearized operator exceeds max_dense_bytes");
    if (is_nonlinear(experiment) && solver.scheme == Scheme::Strang) {
        double modes = 1;
        for (int a = 0; a < grid.d; ++a) modes *= 2.0 * std::floor((grid.n_x - 1) / 3.0) + 1.0;
        const double bytes = 0.5 * (modes + 1) * n_vel * n_vel * 16.0;
        if (bytes > solver.max_propagator_bytes)
            throw BudgetError("strang propagators need " + std::to_string(bytes) + " bytes, above max_propagator_bytes");
    }
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical.dump()); }

std::string RunConfig::hash_hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << hash();
    return os.str();
}

ForceField build_force(const ForceConfig& fc, const SpectralGrid& grid) {
    ForceField E;
    if (fc.kind == "zero") return ForceField::zero(grid);
    if (fc.kind == "gaussian")
        E = ForceField::gaussian(grid, fc.amplitude, fc.sigma);
    else if (fc.kind == "rotational")
        E = ForceField::rotational(grid, fc.eps, fc.m);
    else if (fc.kind == "custom")
        E = ForceField::custom_spectral(grid, fc.path);
    else
        throw ValidationError("unknown force kind '" + fc.kind + "'");
    if (fc.modulation == "constant") return E;
    TimeProfile prof;
    prof.kind = fc.modulation == "sine" ? Modulation::Sine : Modulation::SmoothedSquare;
    return E.modulated(fc.period, prof);
}

std::string cache_dir_from_env() {
    const char* c = std::getenv("HSBOLTZ_CACHE_DIR");
    return c ? std::string(c) : std::string();
}

namespace {

struct Context {
    const RunConfig& cfg;
    fs::path out;
    std::shared_ptr<const VelocitySpace> vs;
    std::shared_ptr<const CollisionOperator> op;
    std::shared_ptr<const LinearizedOperator> L;
    SpectralGrid grid;
    json files = json::array();

    void write(const std::string& name, const std::string& content) {
        write_text(out / name, content);
        files.push_back(name);
    }
    void snapshot(const std::string& name, const DistributionField& f) {
        save_snapshot((out / name).string(), f, cfg.hash());
        files.push_back(name);
    }
    std::shared_ptr<const CauchySolver> solver() const {
        return std::make_shared<CauchySolver>(L, op, grid, build_force(cfg.force, grid), cfg.solver);
    }
};

json run_semigroup(Context& ctx) {
    const json& p = ctx.cfg.experiment_params;
    reject_unknown(p, "params", {"xi", "micro_xi", "micro_t", "window_lo", "window_hi", "n_samples", "heat_threshold"});
    std::vector<double> xi{0.125, 0.25, 0.375, 1, 2, 4, 8, 16};
    std::vector<double> micro_xi{1.0 / 16, 1.0 / 8, 3.0 / 16};
    read(p, "xi", xi);
    read(p, "micro_xi", micro_xi);
    PointwiseDecayOptions o;
    o.seed = ctx.cfg.seed;
    read(p, "window_lo", o.window_lo);
    read(p, "window_hi", o.window_hi);
    read(p, "n_samples", o.n_samples);
    read(p, "heat_threshold", o.heat_threshold);
    const auto rep = verify_pointwise_decay(*ctx.L, xi, o);
    const auto micro = micro_amplitude_scaling(*ctx.L, micro_xi, param(p, "micro_t", 4.0), ctx.cfg.seed + 1);
    ctx.write("pointwise_fits.csv", decay_fits_csv(rep.fits));
    json r;
    r["kappa1"] = rep.kappa1;
    r["low_band_spread"] = rep.low_band_spread;
    r["high_band_spread"] = rep.high_band_spread;
    r["micro_slope"] = micro.slope;
    r["fits"] = json::array();
    for (const auto& f : rep.fits) r["fits"].push_back(fit_json(f));
    return r;
}

json run_besov(Context& ctx) {
    const json& p = ctx.cfg.experiment_params;
    reject_unknown(p, "params", {"s", "s0", "j0", "tau", "t_hi", "fit_lo", "n_samples", "variants"});
    BesovDecayOptions base;
    base.seed = ctx.cfg.seed;
    read(p, "s", base.s);
    read(p, "s0", base.s0);
    read(p, "j0", base.j0);
    read(p, "tau", base.tau);
    read(p, "t_hi", base.t_hi);
    read(p, "fit_lo", base.fit_lo);
    read(p, "n_samples", base.n_samples);
    std::vector<std::string> names{"generic", "micro", "adjoint"};
    read(p, "variants", names);
    std::vector<BesovDecayOptions> variants;
    for (const auto& n : names) {
        BesovDecayOptions o = base;
        if (n == "micro") o.micro_only = true;
        else if (n == "adjoint") o.adjoint = true;
        else if (n != "generic") throw ValidationError("unknown besov-decay variant '" + n + "'");
        variants.push_back(o);
    }
    const auto reps = verify_besov_decay(*ctx.L, ctx.grid, variants);
    json r;
    r["expected_rate"] = 0.5 * (base.s - base.s0);
    r["variants"] = json::array();
    std::vector<DecayFit> all;
    for (std::size_t i = 0; i < reps.size(); ++i) {
        json v;
        v["name"] = names[i];
        v["low"] = fit_json(reps[i].low);
        v["high"] = fit_json(reps[i].high);
        v["initial_profile"] = reps[i].initial_profile;
        r["variants"].push_back(v);
        DecayFit lo = reps[i].low, hi = reps[i].high;
        lo.label = names[i] + "_low";
        hi.label = names[i] + "_high";
        all.push_back(lo);
        all.push_back(hi);
    }
    ctx.write("besov_fits.csv", decay_fits_csv(all));
    return r;
}

json run_cauchy(Context& ctx) {
    const json& p = ctx.cfg.experiment_params;
    reject_unknown(p, "params", {"steps", "initial", "amplitude"});
    long steps = 100;
    std::string initial = "zero";
    read(p, "steps", steps);
    read(p, "initial", initial);
    auto solver = ctx.solver();
    DistributionField f = solver->zero_field();
    if (initial == "random")
        f = admissible_random_start(*solver, param(p, "amplitude", 1e-3), ctx.cfg.seed);
    else if (initial != "zero")
        throw ValidationError("cauchy initial must be 'zero' or 'random'");
    const EnergyTrace tr = solver->solve(f, steps);
    ctx.write("trace.csv", tr.csv());
    ctx.snapshot("final.hsnap", f);
    json r;
    r["steps"] = steps;
    r["t_end"] = f.time;
    r["sup_energy"] = tr.sup_energy();
    r["final_l2"] = tr.samples.back().l2;
    double min_F = tr.samples.front().min_F;
    for (const auto& s : tr.samples) min_F = std::min(min_F, s.min_F);
    r["min_F"] = min_F;
    if (tr.samples.size() >= 10 && ctx.cfg.solver.full_monitor) {
        const LyapunovReport ly = lyapunov_monitor(tr);
        r["lyapunov"] = {{"lambda", ly.lambda}, {"C", ly.C}, {"trivial", ly.trivial}, {"binding_term", ly.binding_term}};
    }
    return r;
}

json run_period_map(Context& ctx) {
    const json& p = ctx.cfg.experiment_params;
    reject_unknown(p, "params", {"eps", "tol", "n_max", "period", "extrapolate", "uniqueness_amplitude"});
    PeriodMapOptions o;
    read(p, "eps", o.eps);
    read(p, "tol", o.tol);
    read(p, "n_max", o.n_max);
    read(p, "period", o.period);
    read(p, "extrapolate", o.extrapolate);
    PeriodMap map(ctx.solver(), o);
    map.set_progress([](const PeriodIterate& it) {
        std::cerr << "period " << it.n << " d_n = " << it.d << "\n";
    });
    auto [fT, rep] = map.serrin_iterate();
    rep.residual = map.verify_periodicity(fT);
    ctx.write("period_map.csv", rep.csv());
    ctx.snapshot("f_T0.hsnap", fT);
    json r = json::parse(rep.json());
    const double amp = param(p, "uniqueness_amplitude", 0.0);
    if (amp > 0) {
        const DistributionField start = admissible_random_start(map.solver(), amp, ctx.cfg.seed);
        auto [fT2, rep2] = map.serrin_iterate(&start);
        r["uniqueness_distance"] = map.distance(fT, fT2);
        r["uniqueness_iterates"] = rep2.iterates.size();
    }
    return r;
}

json run_stationary(Context& ctx) {
    const json& p = ctx.cfg.experiment_params;
    reject_unknown(p, "params", {"period", "tol", "n_max", "threshold", "eps"});
    PeriodMapOptions o;
    o.period = 5.0;
    read(p, "period", o.period);
    read(p, "tol", o.tol);
    read(p, "n_max", o.n_max);
    read(p, "eps", o.eps);
    PeriodMap map(ctx.solver(), o);
    const StationaryOracleResult res = stationary_oracle(map);
    const double threshold = param(p, "threshold", 1e-3);
    ctx.write("period_map.csv", res.report.csv());
    json r;
    r["error"] = res.error;
    r["error_energy_consistent"] = res.error_energy;
    r["threshold"] = threshold;
    r["passed"] = res.error < threshold;
    r["max_phi"] = res.max_phi;
    r["mass_constant"] = res.mass_constant;
    r["temperature"] = res.temperature;
    r["periods"] = res.report.iterates.size();
    return r;
}

json run_stability(Context& ctx) {
    const json& p = ctx.cfg.experiment_params;
    reject_unknown(p, "params",
                   {"s0", "p", "targets", "eps", "horizon", "amplitude", "reference_amplitude", "k_max", "n_samples",
                    "fit_lo_fraction"});
    auto solver = ctx.solver();
    DistributionField f2 = admissible_random_start(*solver, param(p, "reference_amplitude", 1e-3), ctx.cfg.seed);
    StabilityScenario sc{f2, f2, -1.4, {0.5}};
    read(p, "s0", sc.s0);
    if (p.contains("p")) {
        const double pp = p["p"].get<double>();
        if (!(pp > 1 && pp <= 2)) throw ValidationError("stability p must lie in (1, 2]");
        sc.s0 = -3.0 * (1.0 / pp - 0.5);
    }
    read(p, "targets", sc.targets);
    read(p, "eps", sc.eps);
    read(p, "horizon", sc.horizon);
    read(p, "n_samples", sc.n_samples);
    read(p, "fit_lo_fraction", sc.fit_lo_fraction);
    int k_max = 0;
    read(p, "k_max", k_max);
    const DistributionField g0 =
        synthesize_initial_difference(ctx.grid, ctx.vs, sc.s0, param(p, "amplitude", 1e-3), ctx.cfg.seed + 1, k_max);
    sc.f1.data += g0.data;
    DifferenceSeries ds;
    const auto fits = run_difference_decay(*solver, sc, &ds);
    ctx.write("stability_fits.csv", decay_fits_csv(fits));
    std::ostringstream os;
    os.precision(17);
    os << "t";
    for (double s : sc.targets) os << ",besov_" << s;
    os << ",micro_l2,weighted,mixed\n";
    for (std::size_t i = 0; i < ds.t.size(); ++i) {
        os << ds.t[i];
        for (const auto& b : ds.besov) os << ',' << b[i];
        os << ',' << ds.micro_l2[i] << ',' << ds.weighted[i] << ',' << ds.mixed[i] << '\n';
    }
    ctx.write("stability_series.csv", os.str());
    json r;
    r["s0"] = sc.s0;
    r["initial_flatness"] = shell_flatness(g0, sc.s0);
    r["fits"] = json::array();
    for (const auto& f : fits) r["fits"].push_back(fit_json(f));
    return r;
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(cfg.output_dir);
    Context ctx{cfg, fs::path(cfg.output_dir), nullptr, nullptr, nullptr,
                SpectralGrid(cfg.grid.d, cfg.grid.n_x, cfg.grid.L_box)};
    ctx.vs = VelocitySpace::make(cfg.grid.R, cfg.grid.n_v, cfg.grid.n_angular, cache_dir_from_env());
    if (is_nonlinear(cfg.experiment))
        ctx.op = make_stepping_collision(ctx.vs, cfg.budget);
    else
        ctx.op = std::make_shared<CollisionOperator>(ctx.vs, cfg.budget);
    ctx.L = std::make_shared<LinearizedOperator>(assemble_L(*ctx.op, cfg.solver.workers));
    const auto t_setup = std::chrono::steady_clock::now();
    json results;
    if (cfg.experiment == "semigroup-decay") results = run_semigroup(ctx);
    else if (cfg.experiment == "besov-decay") results = run_besov(ctx);
    else if (cfg.experiment == "cauchy") results = run_cauchy(ctx);
    else if (cfg.experiment == "period-map") results = run_period_map(ctx);
    else if (cfg.experiment == "stationary-oracle") results = run_stationary(ctx);
    else results = run_stability(ctx);
    const auto t1 = std::chrono::steady_clock::now();
    RunResult rr;
    rr.report = {{"experiment", cfg.experiment}, {"config_hash", cfg.hash_hex()}, {"config", cfg.canonical},
                 {"results", results}};
    rr.report_path = (ctx.out / "report.json").string();
    ctx.write("report.json", rr.report.dump(2) + "\n");
    json manifest = {{"config_hash", cfg.hash_hex()},
                     {"code_version", HSBOLTZ_VERSION},
                     {"experiment", cfg.experiment},
                     {"workers", cfg.solver.workers},
                     {"timings_s",
                      {{"setup", std::chrono::duration<double>(t_setup - t0).count()},
                       {"experiment", std::chrono::duration<double>(t1 - t_setup).count()}}},
                     {"files", ctx.files}};
    write_text(ctx.out / "manifest.json", manifest.dump(2) + "\n");
    if (cfg.experiment == "stationary-oracle" && !results["passed"].get<bool>()) rr.exit_code = kExitNumerical;
    return rr;
}

nlohmann::ordered_json CompareResult::json() const {
    nlohmann::ordered_json j;
    j["schema_ok"] = schema_ok;
    if (!schema_ok) j["schema_error"] = schema_error;
    j["diffs"] = nlohmann::ordered_json::array();
    for (const auto& d : diffs) j["diffs"].push_back({{"path", d.path}, {"a", d.a}, {"b", d.b}, {"rel", d.rel}});
    return j;
}

namespace {

void diff_tree(const json& a, const json& b, const std::string& path, const CompareOptions& opt, CompareResult& out) {
    if (!out.schema_ok) return;
    if (a.is_number() && b.is_number()) {
        const double x = a.get<double>(), y = b.get<double>();
        const double scale = std::max(std::abs(x), std::abs(y));
        const double rel = scale == 0 ? 0 : std::abs(x - y) / scale;
        if (rel > opt.rel_tol) out.diffs.push_back({path, x, y, rel});
        return;
    }
    if (a.type() != b.type()) {
        out.schema_ok = false;
        out.schema_error = "type mismatch at " + path;
        return;
    }
    if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it)
            if (!b.contains(it.key())) {
                out.schema_ok = false;
                out.schema_error = "key " + path + "/" + it.key() + " missing in second report";
                return;
            }
        for (auto it = b.begin(); it != b.end(); ++it)
            if (!a.contains(it.key())) {
                out.schema_ok = false;
                out.schema_error = "key " + path + "/" + it.key() + " missing in first report";
                return;
            }
        for (auto it = a.begin(); it != a.end(); ++it) diff_tree(it.value(), b[it.key()], path + "/" + it.key(), opt, out);
        return;
    }
    if (a.is_array()) {
        if (a.size() != b.size()) {
            out.schema_ok = false;
            out.schema_error = "array length mismatch at " + path;
            return;
        }
        for (std::size_t i = 0; i < a.size(); ++i) diff_tree(a[i], b[i], path + "/" + std::to_string(i), opt, out);
        return;
    }
    if (a != b) out.diffs.push_back({path, std::nan(""), std::nan(""), 1.0});
}

}  // namespace

CompareResult compare_reports(const nlohmann::ordered_json& a, const nlohmann::ordered_json& b,
                              const CompareOptions& opt) {
    CompareResult r;
    if (!a.contains("experiment") || !b.contains("experiment")) {
        r.schema_ok = false;
        r.schema_error = "not a report (missing experiment)";
        return r;
    }
    if (a["experiment"] != b["experiment"]) {
        r.schema_ok = false;
        r.schema_error = "different experiments: " + a["experiment"].get<std::string>() + " vs " +
                         b["experiment"].get<std::string>();
        return r;
    }
    if (!opt.force && a.value("config_hash", "") != b.value("config_hash", "")) {
        r.schema_ok = false;
        r.schema_error = "config hashes differ (use --force to compare anyway)";
        return r;
    }
    json ra = a.contains("results") ? a["results"] : json(), rb = b.contains("results") ? b["results"] : json();
    diff_tree(ra, rb, "/results", opt, r);
    if (opt.force && a.contains("config") && b.contains("config") && r.schema_ok) {
        CompareResult cfg;
        diff_tree(a["config"], b["config"], "/config", opt, cfg);
        for (auto& d : cfg.diffs) r.diffs.push_back(d);
    }
    return r;
}

NormReport snapshot_norms(const std::string& path, double s, int N) {
    const SnapshotHeader h = read_snapshot_header(path);
    SpectralGrid grid(h.d, h.n_x, h.L_box);
    auto vs = VelocitySpace::make(h.R, h.n_v, h.n_angular, cache_dir_from_env());
    DistributionField f(grid, vs);
    load_snapshot(path, f);
    NormEvaluator ev(grid);
    NormReport r = ev.energy(f, s, N);
    r["l2"] = ev.l2(f);
    r["time"] = h.time;
    return r;
}

int cli_main(int argc, char** argv) {
    CLI::App app{"hsboltz: hard-sphere Boltzmann perturbation solver"};
    app.require_subcommand(1);
    std::string config_path, a_path, b_path, snap_path, output, cache_override;
    std::size_t workers = 0;
    double rel_tol = 0, s = 0.5;
    int N = 4;
    bool force = false;
    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "YAML or JSON config")->required();
    run->add_option("--workers", workers, "override solver.workers");
    run->add_option("--output", output, "override the output directory");
    auto* cmp = app.add_subcommand("compare", "field-by-field comparison of two report.json files");
    cmp->add_option("a", a_path)->required();
    cmp->add_option("b", b_path)->required();
    cmp->add_option("--rel-tol", rel_tol, "ignore relative differences up to this size");
    cmp->add_flag("--force", force, "compare reports with different config hashes");
    auto* nrm = app.add_subcommand("norms", "print the norm report of a field snapshot");
    nrm->add_option("snapshot", snap_path)->required();
    nrm->add_option("--s", s, "Besov index of the energy norm");
    nrm->add_option("--N", N, "derivative order");
    auto* cache = app.add_subcommand("cache-grid", "prebuild the velocity tables for a config");
    cache->add_option("config", config_path)->required();
    cache->add_option("--cache-dir", cache_override, "cache directory (default HSBOLTZ_CACHE_DIR)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }
    try {
        if (*run) {
            json tree = read_config_tree(config_path);
            if (workers > 0) tree["solver"]["workers"] = workers;
            if (!output.empty()) tree["output"] = output;
            const RunConfig cfg = config_from_tree(tree);
            const RunResult rr = run_experiment(cfg);
            std::cout << rr.report_path << "\n";
            return rr.exit_code;
        }
        if (*cmp) {
            std::ifstream ia(a_path), ib(b_path);
            if (!ia || !ib) throw ValidationError("cannot open report files");
            CompareOptions opt;
            opt.rel_tol = rel_tol;
            opt.force = force;
            const CompareResult r = compare_reports(json::parse(ia), json::parse(ib), opt);
            std::cout << r.json().dump(2) << "\n";
            return r.schema_ok ? kExitOk : kExitValidation;
        }
        if (*nrm) {
            const NormReport r = snapshot_norms(snap_path, s, N);
            json j;
            for (const auto& [k, v] : r.values) j[k] = v;
            std::cout << j.dump(2) << "\n";
            return kExitOk;
        }
        if (*cache) {
            const RunConfig cfg = load_config(config_path);
            const std::string dir = cache_override.empty() ? cache_dir_from_env() : cache_override;
            if (dir.empty()) throw ValidationError("no cache directory: set HSBOLTZ_CACHE_DIR or pass --cache-dir");
            fs::create_directories(dir);
            VelocitySpace::make(cfg.grid.R, cfg.grid.n_v, cfg.grid.n_angular, dir);
            std::cout << (fs::path(dir) / velocity_cache_name(cfg.grid.R, cfg.grid.n_v, cfg.grid.n_angular)).string()
                      << "\n";
            return kExitOk;
        }
    } catch (const ValidationError& e) {
        std::cerr << nlohmann::json({{"error", "validation"}, {"message", e.what()}}).dump() << "\n";
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << nlohmann::json({{"error", "numerical"}, {"message", e.what()}}).dump() << "\n";
        return kExitNumerical;
    } catch (const BudgetError& e) {
        std::cerr << nlohmann::json({{"error", "budget"}, {"message", e.what()}}).dump() << "\n";
        return kExitBudget;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << nlohmann::json({{"error", "validation"}, {"message", e.what()}}).dump() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json({{"error", "failure"}, {"message", e.what()}}).dump() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace hsboltz

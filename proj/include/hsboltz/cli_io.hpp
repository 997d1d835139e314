#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hsboltz/cauchy_solver.hpp"
#include "hsboltz/errors.hpp"
#include "hsboltz/forcing.hpp"

namespace hsboltz {

/// Process exit codes of the command-line driver.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitValidation = 2, kExitNumerical = 3, kExitBudget = 4 };

struct GridConfig {
    double R = 6.0;
    int n_v = 8;
    int n_angular = 26;
    int d = 1;
    int n_x = 32;
    double L_box = 6.283185307179586;
};

struct ForceConfig {
    std::string kind = "zero";  ///< zero | gaussian | rotational | custom
    double amplitude = 1e-2;    ///< gaussian: A in phi = A exp(-|x|^2 / (2 sigma^2))
    double sigma = 0.8;
    double eps = 1e-3;          ///< rotational strength
    double m = 3.0;             ///< rotational decay exponent
    std::string path;           ///< custom: JSON spectrum file
    std::string modulation = "constant";  ///< constant | sine | smoothed-square
    double period = 0;          ///< modulation period (0 for constant)
    double delta = 1.0;         ///< smallness threshold of the force norm (warning only)
};

/// Parsed and validated run configuration. `experiment_params` keeps the experiment block verbatim.
struct RunConfig {
    GridConfig grid;
    SolverConfig solver;
    ForceConfig force;
    std::string experiment;
    nlohmann::ordered_json experiment_params = nlohmann::ordered_json::object();
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    Budget budget;
    nlohmann::ordered_json canonical;  ///< normalized config used for hashing

    /// Throws ValidationError naming the violated constraint.
    void validate() const;
    /// FNV-1a hash of the canonical config without execution-only keys (workers, output).
    std::uint64_t hash() const;
    std::string hash_hex() const;
};

/// Reads YAML (.yaml/.yml) or JSON into a JSON tree.
nlohmann::ordered_json read_config_tree(const std::string& path);
/// Builds and validates a RunConfig from a JSON tree; unknown keys are rejected.
RunConfig config_from_tree(const nlohmann::ordered_json& tree);
RunConfig load_config(const std::string& path);

/// Force field described by the force block on the given grid.
ForceField build_force(const ForceConfig& fc, const SpectralGrid& grid);

/// Velocity-table cache directory: HSBOLTZ_CACHE_DIR when set, otherwise empty (no cache).
std::string cache_dir_from_env();

struct RunResult {
    int exit_code = kExitOk;
    std::string report_path;
    nlohmann::ordered_json report;
};

/// Executes the configured experiment, writing report.json, CSV files, snapshots and manifest.json into the
/// output directory. Timings are kept out of report.json so reports are reproducible byte for byte.
RunResult run_experiment(const RunConfig& cfg);

struct CompareOptions {
    double rel_tol = 0;  ///< differences at or below this relative size are not reported
    bool force = false;  ///< compare even when the config hashes differ
};

struct FieldDiff {
    std::string path;
    double a = 0, b = 0, rel = 0;
};

struct CompareResult {
    bool schema_ok = true;
    std::string schema_error;
    std::vector<FieldDiff> diffs;
    nlohmann::ordered_json json() const;
};

/// Field-by-field relative differences of two report.json trees.
CompareResult compare_reports(const nlohmann::ordered_json& a, const nlohmann::ordered_json& b,
                              const CompareOptions& opt = {});

/// Norm report of a saved field snapshot (grid and velocity space rebuilt from its header).
NormReport snapshot_norms(const std::string& path, double s, int N);

/// Command-line entry point (`run`, `compare`, `norms`, `cache-grid`); returns the exit code.
int cli_main(int argc, char** argv);

}  // namespace hsboltz

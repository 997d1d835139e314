#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hsboltz/cli_io.hpp"

using namespace hsboltz;
using nlohmann::ordered_json;

namespace {

ordered_json base_tree(const std::string& out) {
    return ordered_json::parse(R"({
        "experiment": "cauchy", "seed": 3, "output": ")" + out + R"(",
        "grid": {"R": 6, "n_v": 6, "n_angular": 26, "d": 1, "n_x": 8, "L_box": 6.283185307179586},
        "solver": {"dt": 0.5, "scheme": "strang", "N": 4, "monitor_every": 2},
        "force": {"kind": "zero"},
        "params": {"steps": 8, "initial": "zero"}})");
}

std::string validation_message(const ordered_json& tree) {
    try {
        config_from_tree(tree);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("config validation names the violated constraint") {
    const ordered_json ok = base_tree("out");
    CHECK(validation_message(ok).empty());
    ordered_json t = ok;
    t["grid"]["n_v"] = 7;
    CHECK(validation_message(t) == "velocity grid must be even");
    t = ok;
    t["grid"]["n_angular"] = 20;
    CHECK(validation_message(t).find("n_angular") != std::string::npos);
    t = ok;
    t["grid"]["bogus"] = 1;
    CHECK(validation_message(t).find("bogus") != std::string::npos);
    t = ok;
    t["experiment"] = "nope";
    CHECK_FALSE(validation_message(t).empty());
    t = ok;
    t["experiment"] = "period-map";
    t["solver"]["N"] = 3;
    CHECK_FALSE(validation_message(t).empty());
    t = ok;
    t["force"] = ordered_json::parse(R"({"kind": "rotational", "eps": 1e-3})");
    CHECK_FALSE(validation_message(t).empty());
    t["grid"]["d"] = 3;
    CHECK(validation_message(t).empty());
    t = ok;
    t["force"] = ordered_json::parse(R"({"kind": "gaussian", "modulation": "sine"})");
    CHECK_FALSE(validation_message(t).empty());

    t = ok;
    t["grid"]["n_v"] = 48;
    CHECK_THROWS_AS(config_from_tree(t), BudgetError);
}

TEST_CASE("config hash ignores execution-only keys") {
    ordered_json a = base_tree("out/a"), b = base_tree("out/b");
    b["solver"]["workers"] = 4;
    CHECK(config_from_tree(a).hash() == config_from_tree(b).hash());
    b["seed"] = 4;
    CHECK(config_from_tree(a).hash() != config_from_tree(b).hash());
    CHECK(config_from_tree(a).hash_hex().size() == 16);
}

TEST_CASE("YAML and JSON configs parse to the same run") {
    const auto dir = temp_dir("hsboltz_cfg");
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "c.yaml") << "experiment: cauchy\nseed: 3\noutput: out\n"
                                     "grid: {R: 6, n_v: 6, n_angular: 26, d: 1, n_x: 8, L_box: 6.283185307179586}\n"
                                     "solver: {dt: 0.5, scheme: strang, N: 4, monitor_every: 2}\n"
                                     "force: {kind: zero}\nparams: {steps: 8, initial: zero}\n";
    std::ofstream(dir / "c.json") << base_tree("out").dump();
    CHECK(load_config((dir / "c.yaml").string()).hash() == load_config((dir / "c.json").string()).hash());
    std::filesystem::remove_all(dir);
}

TEST_CASE("unforced run from zero data writes a zero trace") {
    const auto dir = temp_dir("hsboltz_run");
    RunConfig cfg = config_from_tree(base_tree(dir.string()));
    const RunResult r = run_experiment(cfg);
    CHECK(r.exit_code == kExitOk);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    std::ifstream is(dir / "trace.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line.rfind("t,step,energy_norm", 0) == 0);
    int rows = 0;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        std::getline(ss, cell, ',');
        std::getline(ss, cell, ',');
        CHECK(std::stod(cell) == 0.0);
        ++rows;
    }
    CHECK(rows == 5);
    const ordered_json rep = ordered_json::parse(std::ifstream(dir / "report.json"));
    CHECK(rep["config_hash"] == cfg.hash_hex());
    CHECK(compare_reports(rep, r.report).diffs.empty());
    std::filesystem::remove_all(dir);
}

TEST_CASE("report comparison") {
    const ordered_json a = ordered_json::parse(R"({"experiment": "cauchy", "config_hash": "1",
        "results": {"x": 1.0, "v": [1.0, 2.0], "s": "ok"}})");
    CHECK(compare_reports(a, a).schema_ok);
    CHECK(compare_reports(a, a).diffs.empty());

    ordered_json b = a;
    b["results"]["v"][1] = 2.2;
    const CompareResult r = compare_reports(a, b);
    REQUIRE(r.diffs.size() == 1);
    CHECK(r.diffs[0].rel == doctest::Approx(0.2 / 2.2));
    CHECK(compare_reports(a, b, {0.1, false}).diffs.empty());

    b = a;
    b["experiment"] = "stability";
    CHECK_FALSE(compare_reports(a, b).schema_ok);
    b = a;
    b["config_hash"] = "2";
    CHECK_FALSE(compare_reports(a, b).schema_ok);
    CHECK(compare_reports(a, b, {0, true}).schema_ok);
    b = a;
    b["results"]["v"] = 3.0;
    CHECK_FALSE(compare_reports(a, b).schema_ok);
}

TEST_CASE("command-line exit codes") {
    const auto dir = temp_dir("hsboltz_cli");
    std::filesystem::create_directories(dir);
    ordered_json t = base_tree((dir / "out").string());
    t["grid"]["n_v"] = 7;
    std::ofstream(dir / "bad.json") << t.dump();
    const std::string bad = (dir / "bad.json").string();
    std::vector<std::string> args{"hsboltz", "run", bad};
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    CHECK(cli_main(static_cast<int>(argv.size()), argv.data()) == kExitValidation);
    std::filesystem::remove_all(dir);
}

// Command-line front end for the scenario harness.
//
//   symbiotic-cli list-scenarios
//   symbiotic-cli run --scenario <id|path.json> [--trials N] [--seed S] [--out dir] [--threads T]
//   symbiotic-cli compare <a.csv> <b.csv> [--tolerance x] [--pair-solvers a,b]
//   symbiotic-cli trace --scenario <id|path.json> --trial k
//
// Exit codes: 0 ok, 2 configuration error, 3 too many infeasible trials.

#include "symbiotic/harness.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifndef SYMBIOTIC_VERSION
#define SYMBIOTIC_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace symbiotic;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

ScenarioConfig load_scenario(const std::string& arg) {
    if (fs::exists(arg)) {
        std::ifstream in(arg);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("cannot parse ") + arg + ": " + e.what());
        }
        ScenarioConfig base;
        if (j.contains("base") && j["base"].is_string()) base = builtin_scenario(j["base"].get<std::string>());
        return scenario_from_json(j, base);
    }
    return builtin_scenario(arg);
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

int cmd_run(const std::string& scenario, std::optional<int> trials, std::optional<std::uint64_t> seed,
            const std::string& out_dir, int threads) {
    ScenarioConfig cfg = load_scenario(scenario);
    if (trials) cfg.trials = *trials;
    if (seed) cfg.base_seed = *seed;
    cfg.validate();

    const auto t0 = std::chrono::steady_clock::now();
    const ScenarioResult res = run_scenario(cfg, threads);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_file(dir / (cfg.id + ".csv"), results_csv(res));
    write_file(dir / (cfg.id + "_summary.csv"), summary_csv(res));
    if (cfg.record_trace) write_file(dir / (cfg.id + "_trace.csv"), trace_csv(res));
    nlohmann::json meta;
    meta["config"] = to_json(cfg);
    meta["version"] = SYMBIOTIC_VERSION;
    meta["threads"] = threads;
    meta["wall_time_s"] = wall;
    meta["timestamp_utc"] = utc_timestamp();
    meta["rows"] = res.rows.size();
    meta["infeasible_fraction"] = res.infeasible_fraction();
    write_file(dir / (cfg.id + ".json"), meta.dump(2) + "\n");

    std::cout << summary_csv(res);
    const double frac = res.infeasible_fraction();
    std::cerr << cfg.id << ": " << res.rows.size() << " rows in " << wall << " s, infeasible fraction " << frac << '\n';
    return frac > cfg.infeasible_tolerance ? kExitInfeasible : 0;
}

int cmd_trace(const std::string& scenario, int trial) {
    ScenarioConfig cfg = load_scenario(scenario);
    if (trial < 0) throw ConfigError("trial must be nonnegative");
    cfg.trials = trial + 1;
    cfg.record_trace = true;
    cfg.validate();
    ScenarioResult all;
    all.config = cfg;
    for (double se : cfg.series_or_default())
        for (double sw : cfg.sweep_values) {
            auto t = detail::run_trial(cfg, se, sw, trial);
            all.trace.insert(all.trace.end(), t.trace.begin(), t.trace.end());
        }
    std::cout << trace_csv(all);
    return 0;
}

int cmd_compare(const std::string& a, const std::string& b, double tol, const std::string& pair) {
    CompareOptions opt;
    opt.tolerance = tol;
    CsvTable ta = read_csv(a), tb = read_csv(b);
    if (!pair.empty()) {
        const auto comma = pair.find(',');
        if (comma == std::string::npos) throw ConfigError("--pair-solvers expects 'solverA,solverB'");
        ta = filter_solver(ta, pair.substr(0, comma));
        tb = filter_solver(tb, pair.substr(comma + 1));
        opt.match_solver = false;
    }
    const DiffReport d = compare_runs(ta, tb, opt);
    std::cout << format_diff(d);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Symbiotic NOMA/backscatter beamforming experiments"};
    app.require_subcommand(1);

    app.add_subcommand("list-scenarios", "List built-in scenarios");

    auto* run = app.add_subcommand("run", "Run a scenario and write CSV/JSON outputs");
    std::string scenario, out_dir = "results";
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    run->add_option("--scenario", scenario, "Built-in id or path to a scenario JSON document")->required();
    run->add_option("--trials", trials, "Channel draws per grid point");
    run->add_option("--seed", seed, "Base seed (trial seed = base xor trial)");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

    auto* cmp = app.add_subcommand("compare", "Diff two result tables");
    std::string file_a, file_b, pair;
    double tol = 0.0;
    cmp->add_option("a", file_a)->required();
    cmp->add_option("b", file_b)->required();
    cmp->add_option("--tolerance", tol, "Relative tolerance on numeric cells");
    cmp->add_option("--pair-solvers", pair, "Pair solver A of table a with solver B of table b on matched seeds");

    auto* tr = app.add_subcommand("trace", "Per-iteration convergence dump for one trial");
    std::string trace_scenario;
    int trace_trial = 0;
    tr->add_option("--scenario", trace_scenario)->required();
    tr->add_option("--trial", trace_trial)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (app.got_subcommand("list-scenarios")) {
            for (const auto& c : builtin_scenarios())
                std::cout << c.id << '\t' << c.description << '\n';
            return 0;
        }
        if (run->parsed()) return cmd_run(scenario, trials, seed, out_dir, threads);
        if (cmp->parsed()) return cmd_compare(file_a, file_b, tol, pair);
        if (tr->parsed()) return cmd_trace(trace_scenario, trace_trial);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}

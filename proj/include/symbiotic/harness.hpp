#pragma once

#include "symbiotic/baselines.hpp"
#include "symbiotic/channel.hpp"
#include "symbiotic/model.hpp"
#include "symbiotic/tpmin.hpp"
#include "symbiotic/units.hpp"
#include "symbiotic/wsrmax.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace symbiotic {

/// Bad scenario description or unknown scenario id.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Solver { WsrDigital, WsrAnalog, Tpmin, BaselineRandom, BaselineMrt };

inline const char* to_string(Solver s) {
    switch (s) {
    case Solver::WsrDigital: return "wsrmax-digital";
    case Solver::WsrAnalog: return "wsrmax-analog";
    case Solver::Tpmin: return "tpmin";
    case Solver::BaselineRandom: return "baseline-random";
    case Solver::BaselineMrt: return "baseline-mrt";
    }
    return "unknown";
}

inline Solver parse_solver(const std::string& s) {
    for (Solver v : {Solver::WsrDigital, Solver::WsrAnalog, Solver::Tpmin, Solver::BaselineRandom, Solver::BaselineMrt})
        if (s == to_string(v)) return v;
    throw ConfigError("unknown solver '" + s + "'");
}

inline bool is_optimizer(Solver s) { return s == Solver::WsrDigital || s == Solver::WsrAnalog || s == Solver::Tpmin; }

/// Parameter a sweep or series axis varies.
enum class Axis { None, TransmitPowerDbm, Alpha, TagThreshold, Xi };

inline const char* to_string(Axis a) {
    switch (a) {
    case Axis::None: return "none";
    case Axis::TransmitPowerDbm: return "p_t_dbm";
    case Axis::Alpha: return "alpha";
    case Axis::TagThreshold: return "r0_th";
    case Axis::Xi: return "xi";
    }
    return "unknown";
}

inline Axis parse_axis(const std::string& s) {
    for (Axis a : {Axis::None, Axis::TransmitPowerDbm, Axis::Alpha, Axis::TagThreshold, Axis::Xi})
        if (s == to_string(a)) return a;
    throw ConfigError("unknown axis '" + s + "'");
}

/// How rate thresholds are set at a sweep point.
///  - PowerFamily: R_0 = log2(1 + p/100), R_k = log2(1 + p/10^(k-1)), p in mW.
///  - Fixed: the listed values.
/// A set tag_override replaces R_0 in either rule.
enum class ThresholdRule { PowerFamily, Fixed };

struct ScenarioConfig {
    std::string id;
    std::string description;
    int num_antennas = 32;
    int num_users = 2;
    double alpha = 0.6;
    double eh_efficiency = 0.6;
    std::optional<double> eh_threshold_dbm = -20.0;  // nullopt: no harvesting constraint
    double xi = 1.0;
    std::vector<double> weights;  // empty: 1/(K+1) each
    ThresholdRule threshold_rule = ThresholdRule::PowerFamily;
    std::vector<double> thresholds_bps_hz;  // Fixed rule: R_0..R_K
    std::optional<double> tag_threshold_bps_hz;
    double p_t_dbm = 20.0;
    double p_max_dbm = 30.0;  // power cap for tpmin
    Geometry geometry{{12.0, 12.0}, 1.0, {8.0, 10.0}};
    LinkBudget link_budget{};
    Axis sweep_axis = Axis::TransmitPowerDbm;
    std::vector<double> sweep_values{20.0};
    Axis series_axis = Axis::None;
    std::vector<double> series_values;
    std::vector<Solver> solvers{Solver::WsrDigital};
    int trials = 200;
    std::uint64_t base_seed = 1;
    double baseline_rho1 = 0.3;
    double epsilon = 1e-3;
    bool record_trace = false;
    double infeasible_tolerance = 0.05;  // exit-code threshold on failed optimizer rows

    std::vector<double> series_or_default() const {
        return series_axis == Axis::None ? std::vector<double>{0.0} : series_values;
    }

    void validate() const {
        if (id.empty()) throw ConfigError("scenario id is empty");
        if (num_antennas < 1 || num_users < 1) throw ConfigError("num_antennas and num_users must be positive");
        if (trials < 1) throw ConfigError("trials must be >= 1");
        if (solvers.empty()) throw ConfigError("no solver selected");
        if (sweep_axis == Axis::None) throw ConfigError("sweep axis must be set");
        if (sweep_values.empty()) throw ConfigError("sweep grid is empty");
        if (!std::is_sorted(sweep_values.begin(), sweep_values.end())) throw ConfigError("sweep grid must be sorted");
        if (series_axis != Axis::None) {
            if (series_values.empty()) throw ConfigError("series grid is empty");
            if (!std::is_sorted(series_values.begin(), series_values.end())) throw ConfigError("series grid must be sorted");
            if (series_axis == sweep_axis) throw ConfigError("series and sweep axes coincide");
        }
        if (!weights.empty() && weights.size() != static_cast<std::size_t>(num_users + 1))
            throw ConfigError("weights must have K+1 entries");
        if (threshold_rule == ThresholdRule::Fixed && thresholds_bps_hz.size() != static_cast<std::size_t>(num_users + 1))
            throw ConfigError("fixed thresholds must have K+1 entries");
        if (!(infeasible_tolerance >= 0.0 && infeasible_tolerance <= 1.0))
            throw ConfigError("infeasible_tolerance must lie in [0,1]");
        const bool has_tpmin = std::find(solvers.begin(), solvers.end(), Solver::Tpmin) != solvers.end();
        if (has_tpmin && (sweep_axis == Axis::TransmitPowerDbm || series_axis == Axis::TransmitPowerDbm))
            throw ConfigError("tpmin chooses the transmit power; it cannot be swept");
        try {
            geometry.validate(num_users);
            for (double s : sweep_values) (void)params_at(s, series_or_default().front());
            for (double s : series_or_default()) (void)params_at(sweep_values.front(), s);
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
    }

    /// Transmit power (dBm) in effect at a grid point.
    double p_t_at(double sweep, double series) const {
        if (sweep_axis == Axis::TransmitPowerDbm) return sweep;
        if (series_axis == Axis::TransmitPowerDbm) return series;
        return p_t_dbm;
    }

    /// Model parameters at a grid point (dBm -> W happens here).
    SystemParams params_at(double sweep, double series) const {
        SystemParams p;
        p.num_antennas = num_antennas;
        p.num_users = num_users;
        p.reflection_coeff = alpha;
        p.eh_efficiency = eh_efficiency;
        p.eh_threshold = eh_threshold_dbm ? dbm_to_watts(*eh_threshold_dbm) : 0.0;
        p.noise_power = noise_power_watts(link_budget);
        double x = xi;
        std::optional<double> r0 = tag_threshold_bps_hz;
        auto apply = [&](Axis a, double v) {
            if (a == Axis::Alpha) p.reflection_coeff = v;
            if (a == Axis::Xi) x = v;
            if (a == Axis::TagThreshold) r0 = v;
        };
        apply(sweep_axis, sweep);
        if (series_axis != Axis::None) apply(series_axis, series);
        p.sic_quality.assign(static_cast<std::size_t>(num_users), x);
        p.weights = weights.empty() ? std::vector<double>(static_cast<std::size_t>(num_users + 1), 1.0 / (num_users + 1))
                                    : weights;
        const double p_t = p_t_at(sweep, series);
        if (threshold_rule == ThresholdRule::Fixed) {
            p.rate_thresholds = thresholds_bps_hz;
        } else {
            const double mw = dbm_to_watts(p_t) * 1e3;
            p.rate_thresholds = {std::log2(1.0 + mw / 100.0)};
            for (int k = 1; k <= num_users; ++k) p.rate_thresholds.push_back(std::log2(1.0 + mw / std::pow(10.0, k - 1)));
        }
        if (r0) p.rate_thresholds[0] = *r0;
        const bool has_tpmin = std::find(solvers.begin(), solvers.end(), Solver::Tpmin) != solvers.end();
        p.max_power = dbm_to_watts(has_tpmin ? p_max_dbm : p_t);
        p.validate();
        return p;
    }
};

// ---------------------------------------------------------------------------
// JSON scenario documents (units carried in the field names).

inline nlohmann::json to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["id"] = c.id;
    j["description"] = c.description;
    j["num_antennas"] = c.num_antennas;
    j["num_users"] = c.num_users;
    j["alpha"] = c.alpha;
    j["eh_efficiency"] = c.eh_efficiency;
    j["eh_threshold_dbm"] = c.eh_threshold_dbm ? nlohmann::json(*c.eh_threshold_dbm) : nlohmann::json(nullptr);
    j["xi"] = c.xi;
    j["weights"] = c.weights;
    j["thresholds"] = {{"rule", c.threshold_rule == ThresholdRule::Fixed ? "fixed" : "power-family"},
                       {"bps_hz", c.thresholds_bps_hz},
                       {"tag_bps_hz", c.tag_threshold_bps_hz ? nlohmann::json(*c.tag_threshold_bps_hz) : nlohmann::json(nullptr)}};
    j["p_t_dbm"] = c.p_t_dbm;
    j["p_max_dbm"] = c.p_max_dbm;
    j["geometry"] = {{"d_h_m", c.geometry.d_h},
                     {"d_f_m", c.geometry.d_f},
                     {"d_q_m", c.geometry.d_q},
                     {"carrier_hz", c.geometry.carrier_freq},
                     {"path_loss", c.geometry.model == PathLossModel::UmiLos ? "umi-los" : "umi-nlos"},
                     {"shadowing_std_db", c.geometry.shadowing_std_db}};
    j["link_budget"] = {{"noise_psd_dbm_hz", c.link_budget.noise_psd_dbm_hz},
                        {"bandwidth_hz", c.link_budget.bandwidth_hz},
                        {"noise_figure_db", c.link_budget.noise_figure_db}};
    j["sweep"] = {{"axis", to_string(c.sweep_axis)}, {"values", c.sweep_values}};
    j["series"] = {{"axis", to_string(c.series_axis)}, {"values", c.series_values}};
    std::vector<std::string> solvers;
    for (Solver s : c.solvers) solvers.emplace_back(to_string(s));
    j["solvers"] = solvers;
    j["trials"] = c.trials;
    j["base_seed"] = c.base_seed;
    j["baseline_rho1"] = c.baseline_rho1;
    j["epsilon"] = c.epsilon;
    j["record_trace"] = c.record_trace;
    j["infeasible_tolerance"] = c.infeasible_tolerance;
    return j;
}

/// Reads a scenario document; absent fields keep their defaults.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j, ScenarioConfig c = {}) {
    try {
        auto get = [&](const char* key, auto& out) {
            if (j.contains(key) && !j.at(key).is_null()) j.at(key).get_to(out);
        };
        get("id", c.id);
        get("description", c.description);
        get("num_antennas", c.num_antennas);
        get("num_users", c.num_users);
        get("alpha", c.alpha);
        get("eh_efficiency", c.eh_efficiency);
        if (j.contains("eh_threshold_dbm"))
            c.eh_threshold_dbm = j["eh_threshold_dbm"].is_null() ? std::nullopt : std::optional<double>(j["eh_threshold_dbm"].get<double>());
        get("xi", c.xi);
        get("weights", c.weights);
        if (j.contains("thresholds")) {
            const auto& t = j["thresholds"];
            const std::string rule = t.value("rule", std::string("power-family"));
            if (rule == "fixed") c.threshold_rule = ThresholdRule::Fixed;
            else if (rule == "power-family") c.threshold_rule = ThresholdRule::PowerFamily;
            else throw ConfigError("unknown threshold rule '" + rule + "'");
            if (t.contains("bps_hz")) t["bps_hz"].get_to(c.thresholds_bps_hz);
            if (t.contains("tag_bps_hz"))
                c.tag_threshold_bps_hz = t["tag_bps_hz"].is_null() ? std::nullopt : std::optional<double>(t["tag_bps_hz"].get<double>());
        }
        get("p_t_dbm", c.p_t_dbm);
        get("p_max_dbm", c.p_max_dbm);
        if (j.contains("geometry")) {
            const auto& g = j["geometry"];
            if (g.contains("d_h_m")) g["d_h_m"].get_to(c.geometry.d_h);
            if (g.contains("d_f_m")) g["d_f_m"].get_to(c.geometry.d_f);
            if (g.contains("d_q_m")) g["d_q_m"].get_to(c.geometry.d_q);
            if (g.contains("carrier_hz")) g["carrier_hz"].get_to(c.geometry.carrier_freq);
            if (g.contains("shadowing_std_db")) g["shadowing_std_db"].get_to(c.geometry.shadowing_std_db);
            if (g.contains("path_loss")) {
                const std::string m = g["path_loss"].get<std::string>();
                if (m == "umi-los") c.geometry.model = PathLossModel::UmiLos;
                else if (m == "umi-nlos") c.geometry.model = PathLossModel::UmiNlos;
                else throw ConfigError("unknown path-loss model '" + m + "'");
            }
        }
        if (j.contains("link_budget")) {
            const auto& l = j["link_budget"];
            if (l.contains("noise_psd_dbm_hz")) l["noise_psd_dbm_hz"].get_to(c.link_budget.noise_psd_dbm_hz);
            if (l.contains("bandwidth_hz")) l["bandwidth_hz"].get_to(c.link_budget.bandwidth_hz);
            if (l.contains("noise_figure_db")) l["noise_figure_db"].get_to(c.link_budget.noise_figure_db);
        }
        if (j.contains("sweep")) {
            c.sweep_axis = parse_axis(j["sweep"].at("axis").get<std::string>());
            j["sweep"].at("values").get_to(c.sweep_values);
        }
        if (j.contains("series")) {
            c.series_axis = parse_axis(j["series"].value("axis", std::string("none")));
            c.series_values = j["series"].value("values", std::vector<double>{});
        }
        if (j.contains("solvers")) {
            c.solvers.clear();
            for (const auto& s : j["solvers"]) c.solvers.push_back(parse_solver(s.get<std::string>()));
        }
        get("trials", c.trials);
        get("base_seed", c.base_seed);
        get("baseline_rho1", c.baseline_rho1);
        get("epsilon", c.epsilon);
        get("record_trace", c.record_trace);
        get("infeasible_tolerance", c.infeasible_tolerance);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scenario document: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Built-in scenarios

inline ScenarioConfig wsr_base(const std::string& id, const std::string& description) {
    ScenarioConfig c;
    c.id = id;
    c.description = description;
    c.num_users = 2;
    c.alpha = 0.6;
    c.geometry = Geometry{{12.0, 12.0}, 1.0, {8.0, 10.0}};
    c.solvers = {Solver::WsrDigital, Solver::WsrAnalog, Solver::BaselineMrt, Solver::BaselineRandom};
    return c;
}

inline ScenarioConfig tpmin_base(const std::string& id, const std::string& description, int K) {
    ScenarioConfig c;
    c.id = id;
    c.description = description;
    c.num_users = K;
    c.alpha = 0.5;
    c.threshold_rule = ThresholdRule::Fixed;
    c.thresholds_bps_hz = K == 3 ? std::vector<double>{0.3, 2.0, 1.0, 0.5} : std::vector<double>{0.5, 3.0, 1.0};
    c.p_max_dbm = 40.0;
    c.geometry = K == 3 ? Geometry{{10.0, 10.0, 10.0}, 1.0, {35.0, 38.0, 41.0}} : Geometry{{10.0, 10.0}, 1.0, {35.0, 38.0}};
    c.solvers = {Solver::Tpmin};
    return c;
}

inline std::vector<ScenarioConfig> builtin_scenarios() {
    std::vector<ScenarioConfig> out;
    std::vector<double> p_grid;
    for (int i = 0; i <= 9; ++i) p_grid.push_back(30.0 * i / 9.0);

    ScenarioConfig fig3 = wsr_base("fig3", "Tag harvested power / rate trade-off over alpha at 20 dBm");
    fig3.sweep_axis = Axis::Alpha;
    fig3.sweep_values = {0.001, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.999};
    fig3.eh_threshold_dbm.reset();  // the trade-off curve runs through EH-infeasible points
    fig3.tag_threshold_bps_hz = 0.0;
    out.push_back(fig3);

    ScenarioConfig fig4 = wsr_base("fig4", "User rates versus transmit power");
    fig4.sweep_values = p_grid;
    out.push_back(fig4);
    ScenarioConfig fig5 = fig4;
    fig5.id = "fig5";
    fig5.description = "Tag rate (exact and lower bound) versus transmit power";
    out.push_back(fig5);

    ScenarioConfig fig6 = tpmin_base("fig6", "Minimum transmit power versus tag rate threshold", 3);
    fig6.sweep_axis = Axis::TagThreshold;
    fig6.sweep_values = {0.1, 0.2, 0.3, 0.4, 0.5};
    fig6.series_axis = Axis::Alpha;
    fig6.series_values = {0.3, 0.5, 0.7};
    out.push_back(fig6);
    ScenarioConfig fig7 = fig6;
    fig7.id = "fig7";
    fig7.description = "User rates at minimum power versus tag rate threshold";
    out.push_back(fig7);
    ScenarioConfig fig8 = fig6;
    fig8.id = "fig8";
    fig8.description = "Tag rate at minimum power versus tag rate threshold";
    out.push_back(fig8);

    ScenarioConfig fig9 = wsr_base("fig9", "Weighted/sum rate versus SIC quality at 20 dBm");
    fig9.sweep_axis = Axis::Xi;
    fig9.sweep_values = {0.6, 0.7, 0.8, 0.9, 1.0};
    fig9.series_axis = Axis::Alpha;
    fig9.series_values = {0.3, 0.5, 0.7};
    fig9.threshold_rule = ThresholdRule::Fixed;
    fig9.thresholds_bps_hz = {0.0, 0.0, 0.0};
    fig9.solvers = {Solver::WsrDigital, Solver::BaselineMrt};
    out.push_back(fig9);

    ScenarioConfig fig10 = tpmin_base("fig10", "Minimum transmit power versus SIC quality", 2);
    fig10.sweep_axis = Axis::Xi;
    fig10.sweep_values = {0.6, 0.7, 0.8, 0.9, 1.0};
    fig10.series_axis = Axis::Alpha;
    fig10.series_values = {0.3, 0.5, 0.7};
    out.push_back(fig10);

    ScenarioConfig fig11 = wsr_base("fig11", "WSRMax convergence at 10/15/20 dBm");
    fig11.sweep_values = {10.0, 15.0, 20.0};
    fig11.solvers = {Solver::WsrDigital};
    fig11.record_trace = true;
    out.push_back(fig11);

    ScenarioConfig fig12 = tpmin_base("fig12", "TPMin convergence for three tag thresholds", 3);
    fig12.sweep_axis = Axis::TagThreshold;
    fig12.sweep_values = {0.2, 0.3, 0.4};
    fig12.record_trace = true;
    out.push_back(fig12);
    return out;
}

inline ScenarioConfig builtin_scenario(const std::string& id) {
    for (auto& c : builtin_scenarios())
        if (c.id == id) return c;
    throw ConfigError("unknown scenario '" + id + "'");
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
    std::string scenario;
    Solver solver = Solver::WsrDigital;
    double series = 0.0;
    double sweep = 0.0;
    int trial = 0;
    std::uint64_t seed = 0;
    std::string status;  // ok | max-iterations | infeasible | error
    bool feasible = false;
    int iterations = 0;
    double p_t_dbm = 0.0;
    std::optional<double> min_power_dbm;  // tpmin only
    double wsr = 0.0;
    double sum_rate = 0.0;  // users plus tag lower bound, unweighted
    double tag_rate = 0.0;
    double tag_rate_lb = 0.0;
    double harvested_dbm = 0.0;
    std::vector<double> user_rates;

    bool valid() const { return status == "ok" || status == "max-iterations"; }
};

struct TraceRow {
    Solver solver = Solver::WsrDigital;
    double series = 0.0;
    double sweep = 0.0;
    int trial = 0;
    int iteration = 0;
    double objective = 0.0;  // WSR, or p_t in dBm for tpmin
    bool accepted = true;
    bool rank_one = false;
    int randomizations = 0;
};

struct ScenarioResult {
    ScenarioConfig config;
    std::vector<ResultRow> rows;
    std::vector<TraceRow> trace;
    std::vector<SdrAudit> audits;

    /// Share of optimizer rows that failed (infeasible or error).
    double infeasible_fraction() const {
        int total = 0, failed = 0;
        for (const auto& r : rows) {
            if (!is_optimizer(r.solver)) continue;
            ++total;
            if (!r.valid()) ++failed;
        }
        return total == 0 ? 0.0 : static_cast<double>(failed) / total;
    }
};

namespace detail {

inline void fill_report(ResultRow& row, const RateReport& rep) {
    row.wsr = rep.wsr;
    row.tag_rate = rep.tag_rate_exact;
    row.tag_rate_lb = rep.tag_rate_lb;
    row.harvested_dbm = watts_to_dbm(std::max(rep.harvested_power, 1e-30));
    row.user_rates = rep.user_rates;
    row.sum_rate = rep.tag_rate_lb;
    for (double r : rep.user_rates) row.sum_rate += r;
}

struct TrialOutput {
    std::vector<ResultRow> rows;
    std::vector<TraceRow> trace;
    std::vector<SdrAudit> audits;
};

inline TrialOutput run_trial(const ScenarioConfig& c, double series, double sweep, int trial) {
    TrialOutput out;
    const std::uint64_t seed = trial_seed(c.base_seed, static_cast<std::uint64_t>(trial));
    const SystemParams params = c.params_at(sweep, series);
    const ChannelSet ch = sample_channels(seed, params, c.geometry);
    const double p_t = dbm_to_watts(c.p_t_at(sweep, series));
    for (Solver s : c.solvers) {
        ResultRow row;
        row.scenario = c.id;
        row.solver = s;
        row.series = series;
        row.sweep = sweep;
        row.trial = trial;
        row.seed = seed;
        row.p_t_dbm = watts_to_dbm(p_t);
        try {
            if (s == Solver::WsrDigital || s == Solver::WsrAnalog) {
                WsrOptions opt;
                opt.mode = s == Solver::WsrDigital ? BeamMode::Digital : BeamMode::ConstantModulus;
                opt.epsilon = c.epsilon;
                opt.seed = seed;
                const WsrResult r = solve_wsrmax(params, ch, p_t, opt);
                row.iterations = r.outer_iterations;
                if (r.status == WsrStatus::Infeasible) {
                    row.status = "infeasible";
                } else {
                    row.status = r.status == WsrStatus::Converged ? "ok" : "max-iterations";
                    row.feasible = check_constraints(params, ch, r.w.w, r.alloc.rho, p_t).ok();
                    fill_report(row, r.report);
                }
                if (c.record_trace)
                    for (const auto& t : r.trace)
                        out.trace.push_back({s, series, sweep, trial, t.iteration, t.wsr,
                                             t.beam_step == StepStatus::Accepted || t.power_step == StepStatus::Accepted});
            } else if (s == Solver::Tpmin) {
                TpminOptions opt;
                opt.epsilon = c.epsilon;
                opt.seed = seed;
                const TpminResult r = solve_tpmin(params, ch, opt);
                row.iterations = r.iterations;
                out.audits.insert(out.audits.end(), r.audits.begin(), r.audits.end());
                if (r.status == TpminStatus::Infeasible) {
                    row.status = "infeasible";
                } else {
                    row.status = r.status == TpminStatus::Converged ? "ok" : "max-iterations";
                    row.p_t_dbm = r.p_t_dbm;
                    row.min_power_dbm = r.p_t_dbm;
                    row.feasible = check_constraints(params, ch, r.w.w, r.alloc.rho, r.p_t).ok();
                    fill_report(row, evaluate(params, ch, r.w.w, r.alloc));
                }
                if (c.record_trace)
                    for (const auto& t : r.trace)
                        out.trace.push_back({s, series, sweep, trial, t.iteration, t.p_t_dbm, t.accepted, t.rank_one, t.randomizations});
            } else {
                const Beamformer w = s == Solver::BaselineMrt ? weighted_mrt(ch) : random_beamformer(seed, ch);
                const std::vector<double> rho = baseline_split(params.num_users, c.baseline_rho1);
                const PowerAllocation alloc(rho, p_t);
                row.status = "ok";
                row.feasible = check_constraints(params, ch, w.w, rho, p_t).ok();
                fill_report(row, evaluate(params, ch, w.w, alloc));
            }
        } catch (const std::exception&) {
            row.status = "error";
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

}  // namespace detail

/// Runs every (series, sweep, trial) point. Work is spread over `threads`
/// workers; results land in fixed slots, so the table does not depend on the
/// thread count or scheduling.
inline ScenarioResult run_scenario(const ScenarioConfig& config, int threads = 1) {
    config.validate();
    const std::vector<double> series = config.series_or_default();
    struct Task {
        double series, sweep;
        int trial;
    };
    std::vector<Task> tasks;
    for (double s : series)
        for (double x : config.sweep_values)
            for (int t = 0; t < config.trials; ++t) tasks.push_back({s, x, t});
    std::vector<detail::TrialOutput> slots(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++)
            slots[i] = detail::run_trial(config, tasks[i].series, tasks[i].sweep, tasks[i].trial);
    };
    const int n = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    ScenarioResult res;
    res.config = config;
    for (auto& s : slots) {
        res.rows.insert(res.rows.end(), s.rows.begin(), s.rows.end());
        res.trace.insert(res.trace.end(), s.trace.begin(), s.trace.end());
        res.audits.insert(res.audits.end(), s.audits.begin(), s.audits.end());
    }
    return res;
}

// ---------------------------------------------------------------------------
// Aggregation

struct MetricSummary {
    double mean = 0.0;
    double ci95 = 0.0;  // half-width, 1.96 * s / sqrt(n)
};

inline MetricSummary summarize(const std::vector<double>& v) {
    MetricSummary m;
    if (v.empty()) return m;
    double acc = 0.0;
    for (double x : v) acc += x;
    m.mean = acc / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.ci95 = 1.96 * std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
    return m;
}

struct SummaryRow {
    Solver solver = Solver::WsrDigital;
    double series = 0.0;
    double sweep = 0.0;
    int n = 0;         // rows entering the means
    int n_failed = 0;  // infeasible or error
    int n_feasible = 0;
    std::map<std::string, MetricSummary> metrics;
};

inline std::vector<std::string> metric_names(int K) {
    std::vector<std::string> names{"wsr", "sum_rate", "tag_rate", "tag_rate_lb", "harvested_dbm", "p_t_dbm", "iterations"};
    for (int k = 1; k <= K; ++k) names.push_back("rate_u" + std::to_string(k));
    return names;
}

inline double metric_value(const ResultRow& r, const std::string& name) {
    if (name == "wsr") return r.wsr;
    if (name == "sum_rate") return r.sum_rate;
    if (name == "tag_rate") return r.tag_rate;
    if (name == "tag_rate_lb") return r.tag_rate_lb;
    if (name == "harvested_dbm") return r.harvested_dbm;
    if (name == "p_t_dbm") return r.p_t_dbm;
    if (name == "iterations") return r.iterations;
    if (name.rfind("rate_u", 0) == 0) return r.user_rates.at(static_cast<std::size_t>(std::stoi(name.substr(6)) - 1));
    throw std::invalid_argument("unknown metric " + name);
}

/// Means and 95% CIs per (solver, series, sweep); failed rows are counted
/// but left out of the means. Order follows the configuration grids.
inline std::vector<SummaryRow> aggregate(const ScenarioResult& res) {
    std::vector<SummaryRow> out;
    const auto& c = res.config;
    const auto names = metric_names(c.num_users);
    for (Solver s : c.solvers)
        for (double se : c.series_or_default())
            for (double sw : c.sweep_values) {
                SummaryRow row{s, se, sw};
                std::map<std::string, std::vector<double>> values;
                for (const auto& r : res.rows) {
                    if (r.solver != s || r.series != se || r.sweep != sw) continue;
                    if (!r.valid()) {
                        ++row.n_failed;
                        continue;
                    }
                    ++row.n;
                    if (r.feasible) ++row.n_feasible;
                    for (const auto& m : names) values[m].push_back(metric_value(r, m));
                }
                for (const auto& m : names) row.metrics[m] = summarize(values[m]);
                out.push_back(std::move(row));
            }
    return out;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string results_header(int K) {
    std::string h = "scenario,solver,series_axis,series_value,sweep_axis,sweep_value,trial,seed,status,feasible,iterations,"
                    "p_t_dbm,min_power_dbm,wsr,sum_rate,tag_rate,tag_rate_lb,harvested_dbm";
    for (int k = 1; k <= K; ++k) h += ",rate_u" + std::to_string(k);
    return h;
}

inline std::string results_csv(const ScenarioResult& res) {
    const auto& c = res.config;
    std::ostringstream os;
    os << results_header(c.num_users) << '\n';
    for (const auto& r : res.rows) {
        const bool v = r.valid();
        os << r.scenario << ',' << to_string(r.solver) << ',' << to_string(c.series_axis) << ',' << fmt(r.series) << ','
           << to_string(c.sweep_axis) << ',' << fmt(r.sweep) << ',' << r.trial << ',' << r.seed << ',' << r.status << ','
           << (r.feasible ? 1 : 0) << ',' << r.iterations << ',' << (v ? fmt(r.p_t_dbm) : "") << ','
           << (r.min_power_dbm ? fmt(*r.min_power_dbm) : "") << ',';
        for (double x : {r.wsr, r.sum_rate, r.tag_rate, r.tag_rate_lb, r.harvested_dbm}) os << (v ? fmt(x) : "") << ',';
        for (int k = 0; k < c.num_users; ++k) {
            if (v) os << fmt(r.user_rates.at(static_cast<std::size_t>(k)));
            if (k + 1 < c.num_users) os << ',';
        }
        os << '\n';
    }
    return os.str();
}

inline std::string summary_csv(const ScenarioResult& res) {
    const auto& c = res.config;
    const auto names = metric_names(c.num_users);
    std::ostringstream os;
    os << "scenario,solver,series_axis,series_value,sweep_axis,sweep_value,n,n_failed,n_feasible";
    for (const auto& m : names) os << ',' << m << "_mean," << m << "_ci95";
    os << '\n';
    for (const auto& s : aggregate(res)) {
        os << c.id << ',' << to_string(s.solver) << ',' << to_string(c.series_axis) << ',' << fmt(s.series) << ','
           << to_string(c.sweep_axis) << ',' << fmt(s.sweep) << ',' << s.n << ',' << s.n_failed << ',' << s.n_feasible;
        for (const auto& m : names) {
            const auto& v = s.metrics.at(m);
            os << ',' << (s.n > 0 ? fmt(v.mean) : "") << ',' << (s.n > 0 ? fmt(v.ci95) : "");
        }
        os << '\n';
    }
    return os.str();
}

inline std::string trace_csv(const ScenarioResult& res) {
    const auto& c = res.config;
    std::ostringstream os;
    os << "scenario,solver,series_value,sweep_value,trial,iteration,objective,accepted,rank_one,randomizations\n";
    for (const auto& t : res.trace)
        os << c.id << ',' << to_string(t.solver) << ',' << fmt(t.series) << ',' << fmt(t.sweep) << ',' << t.trial << ','
           << t.iteration << ',' << fmt(t.objective) << ',' << (t.accepted ? 1 : 0) << ',' << (t.rank_one ? 1 : 0) << ','
           << t.randomizations << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Run comparison

/// Plain CSV table: header plus string cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            t.header = split_csv_line(line);
            first = false;
        } else {
            auto cells = split_csv_line(line);
            if (cells.size() != t.header.size()) throw ConfigError("CSV row width does not match its header");
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

struct CellChange {
    std::string key;
    std::string column;
    std::string a, b;
};

struct PointDelta {
    std::string series, sweep;
    int n = 0;
    double mean = 0.0;  // mean of (a - b)
    double min = 0.0;
};

struct DiffReport {
    std::vector<CellChange> changed;
    std::vector<std::string> only_in_a, only_in_b;
    std::vector<PointDelta> deltas;  // paired per sweep point, on the chosen column

    bool empty() const { return changed.empty() && only_in_a.empty() && only_in_b.empty(); }
};

struct CompareOptions {
    bool match_solver = true;       // false: pair rows of different solvers on matched seeds
    double tolerance = 0.0;         // relative, numeric cells
    std::string delta_column = "wsr";
};

/// Row-by-row comparison keyed on (solver, series, sweep, trial).
inline DiffReport compare_runs(const CsvTable& a, const CsvTable& b, const CompareOptions& opt = {}) {
    const std::vector<std::string> key_cols = opt.match_solver
                                                  ? std::vector<std::string>{"solver", "series_value", "sweep_value", "trial"}
                                                  : std::vector<std::string>{"series_value", "sweep_value", "trial"};
    auto index = [&](const CsvTable& t) {
        std::map<std::string, std::size_t> idx;
        std::vector<int> cols;
        for (const auto& k : key_cols) {
            const int c = t.column(k);
            if (c < 0) throw ConfigError("table lacks column " + k);
            cols.push_back(c);
        }
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            std::string key;
            for (int c : cols) key += t.rows[i][static_cast<std::size_t>(c)] + "|";
            if (!idx.emplace(key, i).second) throw ConfigError("duplicate row key " + key + " (filter by solver first)");
        }
        return idx;
    };
    const auto ia = index(a), ib = index(b);
    DiffReport rep;
    const std::vector<std::string> skip = opt.match_solver ? key_cols : std::vector<std::string>{"solver", "series_value", "sweep_value", "trial"};
    const int da = a.column(opt.delta_column), db = b.column(opt.delta_column);
    const int sa = a.column("series_value"), wa = a.column("sweep_value");
    std::map<std::pair<std::string, std::string>, std::vector<double>> paired;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& [key, i] : ia) {
        const auto it = ib.find(key);
        if (it == ib.end()) {
            rep.only_in_a.push_back(key);
            continue;
        }
        const auto& ra = a.rows[i];
        const auto& rb = b.rows[it->second];
        for (std::size_t c = 0; c < a.header.size(); ++c) {
            const std::string& name = a.header[c];
            if (std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
            const int cb = b.column(name);
            if (cb < 0) continue;
            const std::string& x = ra[c];
            const std::string& y = rb[static_cast<std::size_t>(cb)];
            if (x == y) continue;
            bool same = false;
            if (opt.tolerance > 0.0 && !x.empty() && !y.empty()) {
                try {
                    const double u = std::stod(x), v = std::stod(y);
                    same = std::abs(u - v) <= opt.tolerance * std::max({std::abs(u), std::abs(v), 1e-300});
                } catch (const std::exception&) {
                }
            }
            if (!same) rep.changed.push_back({key, name, x, y});
        }
        if (da >= 0 && db >= 0 && !ra[static_cast<std::size_t>(da)].empty() && !rb[static_cast<std::size_t>(db)].empty()) {
            const auto point = std::make_pair(ra[static_cast<std::size_t>(sa)], ra[static_cast<std::size_t>(wa)]);
            if (!paired.count(point)) order.push_back(point);
            paired[point].push_back(std::stod(ra[static_cast<std::size_t>(da)]) - std::stod(rb[static_cast<std::size_t>(db)]));
        }
    }
    for (const auto& [key, i] : ib)
        if (!ia.count(key)) rep.only_in_b.push_back(key);
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
        return std::make_pair(std::stod(x.first), std::stod(x.second)) < std::make_pair(std::stod(y.first), std::stod(y.second));
    });
    for (const auto& p : order) {
        const auto& v = paired[p];
        PointDelta d{p.first, p.second, static_cast<int>(v.size())};
        d.mean = summarize(v).mean;
        d.min = *std::min_element(v.begin(), v.end());
        rep.deltas.push_back(d);
    }
    return rep;
}

/// Rows of one solver only (for pairing different solvers on matched seeds).
inline CsvTable filter_solver(const CsvTable& t, const std::string& solver) {
    CsvTable out{t.header, {}};
    const int c = t.column("solver");
    if (c < 0) throw ConfigError("table lacks column solver");
    for (const auto& r : t.rows)
        if (r[static_cast<std::size_t>(c)] == solver) out.rows.push_back(r);
    return out;
}

inline std::string format_diff(const DiffReport& d, std::size_t max_changes = 50) {
    std::ostringstream os;
    os << "changed cells: " << d.changed.size() << ", only in a: " << d.only_in_a.size()
       << ", only in b: " << d.only_in_b.size() << '\n';
    for (std::size_t i = 0; i < d.changed.size() && i < max_changes; ++i)
        os << "  " << d.changed[i].key << ' ' << d.changed[i].column << ": " << d.changed[i].a << " -> " << d.changed[i].b << '\n';
    for (const auto& k : d.only_in_a) os << "  only in a: " << k << '\n';
    for (const auto& k : d.only_in_b) os << "  only in b: " << k << '\n';
    if (!d.deltas.empty()) {
        os << "paired deltas (a - b): series,sweep,n,mean,min\n";
        for (const auto& p : d.deltas)
            os << "  " << p.series << ',' << p.sweep << ',' << p.n << ',' << fmt(p.mean) << ',' << fmt(p.min) << '\n';
    }
    return os.str();
}

}  // namespace symbiotic

#pragma once

// Monte-Carlo experiment driver: configuration (TOML), presets, parallel
// execution over (grid point, drop) tasks, canonical CSV and JSON summary.

#include "mcbf/baselines.hpp"

#include <toml.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <charconv>
#include <fstream>
#include <sstream>
#include <thread>

namespace mcbf {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Experiment { fig_tx_sweep, fig_rx_sweep, fig_joint_sweep, fig_power_sweep, fig_mux_gain, custom };

inline const char* to_string(Experiment e) {
    switch (e) {
        case Experiment::fig_tx_sweep: return "fig_tx_sweep";
        case Experiment::fig_rx_sweep: return "fig_rx_sweep";
        case Experiment::fig_joint_sweep: return "fig_joint_sweep";
        case Experiment::fig_power_sweep: return "fig_power_sweep";
        case Experiment::fig_mux_gain: return "fig_mux_gain";
        case Experiment::custom: return "custom";
    }
    return "unknown";
}

inline Experiment parse_experiment(std::string_view s) {
    for (auto e : {Experiment::fig_tx_sweep, Experiment::fig_rx_sweep, Experiment::fig_joint_sweep,
                   Experiment::fig_power_sweep, Experiment::fig_mux_gain, Experiment::custom})
        if (s == to_string(e)) return e;
    throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

inline Strategy parse_strategy(std::string_view s) {
    for (auto e : {Strategy::maxmin_optimal, Strategy::distortion_ignoring, Strategy::tdma})
        if (s == to_string(e)) return e;
    throw ConfigError("unknown scheme '" + std::string(s) + "'");
}

struct ImpairmentPoint {
    double kappa1 = 0.0, kappa2 = kInf, kappa3 = 0.0;
    ImpairmentModel model() const { return ImpairmentModel::from_kappas(kappa1, kappa2, kappa3); }
};

struct ExperimentConfig {
    Experiment experiment = Experiment::custom;
    int drops = 50;
    std::uint64_t seed = 1;
    Index users_per_cell = 2;
    Index n_tx = 4;
    std::vector<double> power_dbm{18.2};
    std::vector<ImpairmentPoint> impairments{ImpairmentPoint{}};
    double delta = 1.0;
    std::vector<Strategy> schemes{Strategy::maxmin_optimal};
    bool rescale_distortion_ignoring = false;
    double bisection_tol = 1e-3;
    double solver_tol = 1e-8;
    std::string csv_path;
    std::string json_path;

    void validate() const {
        if (drops < 1) throw ConfigError("drops must be >= 1");
        if (users_per_cell < 1 || n_tx < 1) throw ConfigError("users_per_cell and n_tx must be >= 1");
        if (power_dbm.empty()) throw ConfigError("power grid is empty");
        for (double p : power_dbm)
            if (!std::isfinite(p)) throw ConfigError("power grid values must be finite");
        if (impairments.empty()) throw ConfigError("impairment grid is empty");
        for (const auto& m : impairments)
            if (!(m.kappa1 >= 0.0) || !(m.kappa3 >= 0.0) || !(m.kappa2 > 0.0) || std::isnan(m.kappa2))
                throw ConfigError("kappa1, kappa3 must be >= 0 and kappa2 > 0");
        if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
        if (schemes.empty()) throw ConfigError("no schemes selected");
        if (!(bisection_tol > 0.0) || !(solver_tol > 0.0)) throw ConfigError("tolerances must be positive");
    }

    FpoSettings fpo_settings() const {
        FpoSettings s;
        s.bisection_tol = bisection_tol;
        s.qos.tolerance = solver_tol;
        return s;
    }
};

/// kappa1 x kappa2 x kappa3, or kappa3 tied to kappa1 when joint.
inline std::vector<ImpairmentPoint> impairment_grid(const std::vector<double>& k1, const std::vector<double>& k2,
                                                    const std::vector<double>& k3, bool joint) {
    std::vector<ImpairmentPoint> out;
    for (double b : k2)
        for (double a : k1) {
            if (joint) {
                out.push_back({a, b, a});
                continue;
            }
            for (double c : k3) out.push_back({a, b, c});
        }
    return out;
}

/// Desk-scale presets. full_scale switches the power and multiplexing sweeps
/// to 8 antennas and 4 users per cell.
inline ExperimentConfig preset(Experiment e, bool full_scale = false) {
    ExperimentConfig c;
    c.experiment = e;
    const std::vector<Strategy> compare{Strategy::maxmin_optimal, Strategy::distortion_ignoring};
    switch (e) {
        case Experiment::fig_tx_sweep:
            c.impairments = impairment_grid({0, 3, 6, 9, 12, 15}, {kInf, 3.0}, {2.0}, false);
            c.schemes = compare;
            break;
        case Experiment::fig_rx_sweep:
            c.impairments = impairment_grid({2, 8}, {kInf}, {0, 3, 6, 9, 12, 15}, false);
            c.schemes = compare;
            break;
        case Experiment::fig_joint_sweep:
            c.impairments = impairment_grid({0, 3, 6, 9, 12, 15}, {kInf, 3.0}, {}, true);
            c.schemes = compare;
            break;
        case Experiment::fig_power_sweep:
        case Experiment::fig_mux_gain:
            c.power_dbm = {0, 10, 20, 30, 40, 50, 60, 70, 80};
            c.impairments = impairment_grid({0, 2, 4, 6, 8}, {kInf}, {}, true);
            c.schemes = compare;
            if (e == Experiment::fig_mux_gain) c.schemes.push_back(Strategy::tdma);
            if (full_scale) {
                c.users_per_cell = 4;
                c.n_tx = 8;
            }
            break;
        case Experiment::custom: break;
    }
    return c;
}

namespace detail {

inline double toml_number(const toml::node& n, const std::string& key) {
    if (auto v = n.value<double>()) return *v;
    if (auto s = n.value<std::string>()) {
        if (*s == "inf" || *s == "Inf" || *s == "infinity") return kInf;
    }
    throw ConfigError("'" + key + "' must be a number (or \"inf\")");
}

inline std::vector<double> toml_numbers(const toml::node* v, const std::string& key) {
    std::vector<double> out;
    if (!v) return out;
    if (const auto* arr = v->as_array()) {
        for (const auto& e : *arr) out.push_back(toml_number(e, key));
        return out;
    }
    out.push_back(toml_number(*v, key));
    return out;
}

template <class T>
std::optional<T> toml_get(const toml::table& t, std::string_view key) {
    const auto node = t[key];
    if (!node) return std::nullopt;
    if (auto v = node.value<T>()) return v;
    throw ConfigError("'" + std::string(key) + "' has the wrong type");
}

inline void check_keys(const toml::table& t, std::initializer_list<std::string_view> allowed, const std::string& where) {
    for (const auto& [k, v] : t) {
        (void)v;
        if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end())
            throw ConfigError("unknown key '" + std::string(k.str()) + "'" + (where.empty() ? "" : " in [" + where + "]"));
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(std::string_view text, const std::string& source = "config") {
    toml::table t;
    try {
        t = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
        throw ConfigError(os.str());
    }
    detail::check_keys(t, {"experiment", "full_scale", "drops", "seed", "users_per_cell", "n_tx", "delta", "power_dbm",
                            "rescale_distortion_ignoring", "schemes", "impairments", "tolerances", "output"}, "");
    const auto name = detail::toml_get<std::string>(t, "experiment").value_or("custom");
    const bool full = detail::toml_get<bool>(t, "full_scale").value_or(false);
    ExperimentConfig c = preset(parse_experiment(name), full);
    if (auto v = detail::toml_get<std::int64_t>(t, "drops")) c.drops = static_cast<int>(*v);
    if (auto v = detail::toml_get<std::int64_t>(t, "seed")) c.seed = static_cast<std::uint64_t>(*v);
    if (auto v = detail::toml_get<std::int64_t>(t, "users_per_cell")) c.users_per_cell = *v;
    if (auto v = detail::toml_get<std::int64_t>(t, "n_tx")) c.n_tx = *v;
    if (auto v = detail::toml_get<double>(t, "delta")) c.delta = *v;
    if (t["power_dbm"]) c.power_dbm = detail::toml_numbers(t.get("power_dbm"), "power_dbm");
    if (auto v = detail::toml_get<bool>(t, "rescale_distortion_ignoring")) c.rescale_distortion_ignoring = *v;
    if (const auto* arr = t["schemes"].as_array()) {
        c.schemes.clear();
        for (const auto& e : *arr) {
            auto s = e.value<std::string>();
            if (!s) throw ConfigError("'schemes' must list names");
            c.schemes.push_back(parse_strategy(*s));
        }
    } else if (t["schemes"]) {
        throw ConfigError("'schemes' must be an array");
    }
    if (t["impairments"] && !t["impairments"].is_table()) throw ConfigError("'impairments' must be a table");
    if (const auto* imp = t["impairments"].as_table()) {
        detail::check_keys(*imp, {"mode", "kappa1", "kappa2", "kappa3"}, "impairments");
        const auto mode = detail::toml_get<std::string>(*imp, "mode").value_or("product");
        if (mode != "product" && mode != "joint") throw ConfigError("impairments.mode must be product or joint");
        auto k1 = detail::toml_numbers(imp->get("kappa1"), "kappa1");
        auto k2 = detail::toml_numbers(imp->get("kappa2"), "kappa2");
        auto k3 = detail::toml_numbers(imp->get("kappa3"), "kappa3");
        if (k1.empty()) k1 = {0.0};
        if (k2.empty()) k2 = {kInf};
        if (k3.empty()) k3 = {0.0};
        c.impairments = impairment_grid(k1, k2, k3, mode == "joint");
    }
    if (const auto* tol = t["tolerances"].as_table()) {
        detail::check_keys(*tol, {"bisection", "solver"}, "tolerances");
        if (auto v = detail::toml_get<double>(*tol, "bisection")) c.bisection_tol = *v;
        if (auto v = detail::toml_get<double>(*tol, "solver")) c.solver_tol = *v;
    }
    if (const auto* out = t["output"].as_table()) {
        detail::check_keys(*out, {"csv", "json"}, "output");
        if (auto v = detail::toml_get<std::string>(*out, "csv")) c.csv_path = *v;
        if (auto v = detail::toml_get<std::string>(*out, "json")) c.json_path = *v;
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

struct ExperimentRecord {
    std::string experiment;
    int drop = 0;
    std::uint64_t seed = 0;
    double power_dbm = 0.0;
    double kappa1 = 0.0, kappa2 = kInf, kappa3 = 0.0;
    double delta = 0.0;
    Strategy scheme = Strategy::maxmin_optimal;
    std::string metric;
    double value = 0.0;
};

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"min_rate", "sum_rate", "used_power"};
    return names;
}

struct SummaryCell {
    std::size_t grid_index = 0;
    double power_dbm = 0.0;
    ImpairmentPoint impairment;
    Strategy scheme = Strategy::maxmin_optimal;
    std::string metric;
    int count = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
};

struct MuxGainCell {
    std::size_t grid_index = 0;
    double power_dbm = 0.0;
    ImpairmentPoint impairment;
    Strategy scheme = Strategy::maxmin_optimal;
    double value = 0.0;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<ExperimentRecord> records;
    std::vector<SummaryCell> summary;
    std::vector<MuxGainCell> mux_gain;
    std::vector<std::string> failures;  // one message per failed (grid point, drop, scheme)
    int solves = 0;
    int unresolved_steps = 0;

    double failure_rate() const { return solves ? static_cast<double>(failures.size()) / solves : 0.0; }
    bool too_many_failures() const { return failure_rate() > 0.2; }
};

/// Shortest round-trip decimal form; "inf" for infinity.
inline std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct GridPoint {
    double power_dbm;
    ImpairmentPoint impairment;
};

inline std::vector<GridPoint> experiment_grid(const ExperimentConfig& c) {
    std::vector<GridPoint> g;
    for (double p : c.power_dbm)
        for (const auto& m : c.impairments) g.push_back({p, m});
    return g;
}

inline std::uint64_t drop_seed(const ExperimentConfig& c, int drop) {
    return mix_seed(c.seed, static_cast<std::uint64_t>(drop));
}

namespace detail {

struct SchemeOutcome {
    bool ok = false;
    std::string message;
    double min_rate = 0.0, sum_rate = 0.0, used_power = 0.0;
    int unresolved = 0;
};

inline SchemeOutcome run_scheme(const Scenario& sc, const ImpairmentModel& model, Strategy s,
                                const ExperimentConfig& c) {
    SchemeOutcome out;
    try {
        const auto settings = c.fpo_settings();
        const auto measure = PerformanceMeasure::rate();
        StrategyResult r;
        switch (s) {
            case Strategy::maxmin_optimal: r = maxmin_optimal(sc, model, measure, settings); break;
            case Strategy::distortion_ignoring:
                r = distortion_ignoring(sc, model, measure, settings, c.rescale_distortion_ignoring);
                break;
            case Strategy::tdma: r = tdma_rate(sc, model, measure, settings); break;
        }
        out.min_rate = r.min_rate;
        out.sum_rate = r.sum_rate;
        out.used_power = r.used_power;
        out.unresolved = r.unresolved_steps;
        out.ok = std::isfinite(out.min_rate) && std::isfinite(out.sum_rate) && std::isfinite(out.used_power);
        if (!out.ok) out.message = "non-finite result";
    } catch (const std::exception& e) {
        out.message = e.what();
    }
    return out;
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1) {
    config.validate();
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    const auto grid = experiment_grid(config);
    const auto D = static_cast<std::size_t>(config.drops);

    DropConfig dc;
    dc.delta = config.delta;
    std::vector<Scenario> drops(D);
    for (std::size_t d = 0; d < D; ++d)
        drops[d] = drop_users(dc, config.users_per_cell, config.n_tx, drop_seed(config, static_cast<int>(d))).scenario;

    // task = (grid point, drop); each produces one outcome per scheme
    const std::size_t n_tasks = grid.size() * D;
    std::vector<std::vector<detail::SchemeOutcome>> outcomes(n_tasks);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < n_tasks; t = next++) {
            const auto& gp = grid[t / D];
            const Scenario sc =
                drops[t % D].with_constraints(per_array_constraints(gp.power_dbm, drops[t % D].n_cells(), config.n_tx));
            const auto model = gp.impairment.model();
            for (auto s : config.schemes) outcomes[t].push_back(detail::run_scheme(sc, model, s, config));
        }
    };
    const auto n_threads = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(jobs), n_tasks));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ExperimentResult res;
    res.config = config;
    const std::string name = to_string(config.experiment);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto& gp = grid[g];
        for (std::size_t d = 0; d < D; ++d) {
            const auto& per_scheme = outcomes[g * D + d];
            for (std::size_t k = 0; k < config.schemes.size(); ++k) {
                const auto& o = per_scheme[k];
                ExperimentRecord base{name, static_cast<int>(d), drop_seed(config, static_cast<int>(d)), gp.power_dbm,
                                      gp.impairment.kappa1, gp.impairment.kappa2, gp.impairment.kappa3, config.delta,
                                      config.schemes[k], "", 0.0};
                ++res.solves;
                res.unresolved_steps += o.unresolved;
                if (!o.ok) {
                    base.metric = "status";
                    base.value = 1.0;
                    res.records.push_back(base);
                    res.failures.push_back("power " + format_number(gp.power_dbm) + " dBm, kappa (" +
                                           format_number(gp.impairment.kappa1) + ", " +
                                           format_number(gp.impairment.kappa2) + ", " +
                                           format_number(gp.impairment.kappa3) + "), drop " + std::to_string(d) +
                                           ", " + to_string(config.schemes[k]) + ": " + o.message);
                    continue;
                }
                for (const auto& [metric, value] : {std::pair{"min_rate", o.min_rate}, std::pair{"sum_rate", o.sum_rate},
                                                    std::pair{"used_power", o.used_power}}) {
                    base.metric = metric;
                    base.value = value;
                    res.records.push_back(base);
                }
            }
        }
    }

    // summary: mean and sample std per (grid point, scheme, metric) over successful drops
    for (std::size_t g = 0; g < grid.size(); ++g)
        for (std::size_t k = 0; k < config.schemes.size(); ++k)
            for (std::size_t mi = 0; mi < metric_names().size(); ++mi) {
                std::vector<double> v;
                for (std::size_t d = 0; d < D; ++d) {
                    const auto& o = outcomes[g * D + d][k];
                    if (!o.ok) continue;
                    v.push_back(mi == 0 ? o.min_rate : mi == 1 ? o.sum_rate : o.used_power);
                }
                SummaryCell cell{g, grid[g].power_dbm, grid[g].impairment, config.schemes[k], metric_names()[mi],
                                 static_cast<int>(v.size()), std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::quiet_NaN()};
                if (!v.empty()) {
                    double s = 0.0;
                    for (double x : v) s += x;
                    cell.mean = s / static_cast<double>(v.size());
                    double ss = 0.0;
                    for (double x : v) ss += (x - cell.mean) * (x - cell.mean);
                    cell.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
                }
                res.summary.push_back(cell);
            }

    // finite-SNR multiplexing gain per grid point against TDMA
    const auto tdma = std::find(config.schemes.begin(), config.schemes.end(), Strategy::tdma);
    if (tdma != config.schemes.end()) {
        const std::size_t kt = static_cast<std::size_t>(tdma - config.schemes.begin());
        auto mean_sum = [&](std::size_t g, std::size_t k) {
            for (const auto& c : res.summary)
                if (c.grid_index == g && c.scheme == config.schemes[k] && c.metric == "sum_rate") return c.mean;
            return std::numeric_limits<double>::quiet_NaN();
        };
        for (std::size_t g = 0; g < grid.size(); ++g)
            for (std::size_t k = 0; k < config.schemes.size(); ++k) {
                if (k == kt) continue;
                const double t = mean_sum(g, kt), s = mean_sum(g, k);
                if (!(t > 0.0) || std::isnan(s)) continue;
                res.mux_gain.push_back({g, grid[g].power_dbm, grid[g].impairment, config.schemes[k],
                                        finite_snr_mux_gain(s, t)});
            }
    }
    return res;
}

inline constexpr const char* kCsvHeader = "experiment,drop,seed,power_dbm,kappa1,kappa2,kappa3,delta,scheme,metric,value";

inline void write_csv(std::ostream& os, const std::vector<ExperimentRecord>& records) {
    os << kCsvHeader << '\n';
    for (const auto& r : records)
        os << r.experiment << ',' << r.drop << ',' << r.seed << ',' << format_number(r.power_dbm) << ','
           << format_number(r.kappa1) << ',' << format_number(r.kappa2) << ',' << format_number(r.kappa3) << ','
           << format_number(r.delta) << ',' << to_string(r.scheme) << ',' << r.metric << ',' << format_number(r.value)
           << '\n';
}

inline std::string to_csv(const std::vector<ExperimentRecord>& records) {
    std::ostringstream os;
    write_csv(os, records);
    return os.str();
}

inline nlohmann::ordered_json summary_json(const ExperimentResult& r) {
    using json = nlohmann::ordered_json;
    auto num = [](double v) -> json {
        if (std::isfinite(v)) return v;
        return format_number(v);
    };
    auto imp = [&](const ImpairmentPoint& m) {
        return json{{"kappa1", num(m.kappa1)}, {"kappa2", num(m.kappa2)}, {"kappa3", num(m.kappa3)}};
    };
    json j;
    j["experiment"] = to_string(r.config.experiment);
    j["seed"] = r.config.seed;
    j["drops"] = r.config.drops;
    j["users_per_cell"] = r.config.users_per_cell;
    j["n_tx"] = r.config.n_tx;
    j["delta"] = r.config.delta;
    j["tdma_rule"] = "equal time share over all users, per-slot optimal single-user beamforming";
    j["solves"] = r.solves;
    j["failed"] = r.failures.size();
    j["failure_rate"] = r.failure_rate();
    j["unresolved_bisection_steps"] = r.unresolved_steps;
    j["failures"] = r.failures;
    json cells = json::array();
    for (const auto& c : r.summary)
        cells.push_back({{"power_dbm", c.power_dbm}, {"impairment", imp(c.impairment)}, {"scheme", to_string(c.scheme)},
                         {"metric", c.metric}, {"count", c.count}, {"mean", num(c.mean)}, {"std", num(c.std)}});
    j["summary"] = cells;
    if (!r.mux_gain.empty()) {
        json mg = json::array();
        for (const auto& c : r.mux_gain)
            mg.push_back({{"power_dbm", c.power_dbm}, {"impairment", imp(c.impairment)}, {"scheme", to_string(c.scheme)},
                          {"mux_gain", num(c.value)}});
        j["mux_gain"] = mg;
    }
    return j;
}

}  // namespace mcbf

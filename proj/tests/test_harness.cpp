#include <catch2/catch_amalgamated.hpp>

#include "mcbf/harness.hpp"

#include <map>

using namespace mcbf;
using Catch::Approx;

namespace {

ExperimentConfig tiny() {
    ExperimentConfig c;
    c.drops = 3;
    c.seed = 42;
    c.users_per_cell = 1;
    c.n_tx = 2;
    c.power_dbm = {18.2, 30.0};
    c.impairments = {ImpairmentPoint{}, ImpairmentPoint{4, kInf, 4}};
    c.schemes = {Strategy::maxmin_optimal, Strategy::distortion_ignoring, Strategy::tdma};
    return c;
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("number formatting") {
    CHECK(format_number(kInf) == "inf");
    CHECK(format_number(18.2) == "18.2");
    CHECK(format_number(0.0) == "0");
    CHECK(std::stod(format_number(0.1 + 0.2)) == 0.1 + 0.2);
}

TEST_CASE("config parsing") {
    const auto c = parse_config(R"(
experiment = "fig_power_sweep"
drops = 7
seed = 9
power_dbm = [10, 20.5]
schemes = ["maxmin_optimal", "tdma"]
[impairments]
mode = "joint"
kappa1 = [0, 4]
kappa2 = ["inf", 3.0]
[tolerances]
bisection = 1e-4
[output]
csv = "out.csv"
)");
    CHECK(c.experiment == Experiment::fig_power_sweep);
    CHECK(c.drops == 7);
    CHECK(c.seed == 9);
    CHECK(c.power_dbm == std::vector<double>{10, 20.5});
    CHECK(c.schemes == std::vector<Strategy>{Strategy::maxmin_optimal, Strategy::tdma});
    REQUIRE(c.impairments.size() == 4);
    CHECK(std::isinf(c.impairments[0].kappa2));
    CHECK(c.impairments[1].kappa1 == 4);
    CHECK(c.impairments[1].kappa3 == 4);
    CHECK(c.impairments[3].kappa2 == 3.0);
    CHECK(c.bisection_tol == 1e-4);
    CHECK(c.csv_path == "out.csv");

    const auto p = parse_config("experiment = \"fig_mux_gain\"\nfull_scale = true\n");
    CHECK(p.n_tx == 8);
    CHECK(p.users_per_cell == 4);
    CHECK(p.drops == 50);
    CHECK(p.schemes.back() == Strategy::tdma);
    CHECK(parse_config("[impairments]\nkappa2 = inf\n").impairments[0].kappa2 == kInf);
    CHECK_THROWS_WITH(parse_config("kappa = 1"), Catch::Matchers::ContainsSubstring("unknown key 'kappa'"));
    CHECK_THROWS_AS(parse_config("[impairments]\nkapa1 = 1"), ConfigError);

    CHECK_THROWS_AS(parse_config("experiment = \"fig_unknown\""), ConfigError);
    CHECK_THROWS_AS(parse_config("drops = 0"), ConfigError);
    CHECK_THROWS_AS(parse_config("drops = \"many\""), ConfigError);
    CHECK_THROWS_AS(parse_config("schemes = [\"zf\"]"), ConfigError);
    CHECK_THROWS_AS(parse_config("power_dbm = []"), ConfigError);
    CHECK_THROWS_AS(parse_config("[impairments]\nkappa1 = [-1]"), ConfigError);
    CHECK_THROWS_AS(parse_config("this is not toml"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/cfg.toml"), ConfigError);
}

TEST_CASE("experiment: canonical rows, conservation, aggregation") {
    const auto cfg = tiny();
    const auto r = run_experiment(cfg, 2);
    const std::size_t grid = cfg.power_dbm.size() * cfg.impairments.size();
    std::size_t status = 0;
    for (const auto& rec : r.records) status += rec.metric == "status";
    CHECK(status == r.failures.size());
    CHECK(r.records.size() ==
          (grid * cfg.drops * cfg.schemes.size() - status) * metric_names().size() + status);
    CHECK(r.solves == static_cast<int>(grid * cfg.drops * cfg.schemes.size()));

    // recompute means from raw rows
    std::map<std::tuple<double, double, double, std::string, std::string>, std::vector<double>> groups;
    for (const auto& rec : r.records)
        if (rec.metric != "status")
            groups[{rec.power_dbm, rec.kappa1, rec.kappa3, to_string(rec.scheme), rec.metric}].push_back(rec.value);
    for (const auto& c : r.summary) {
        const auto& v = groups[{c.power_dbm, c.impairment.kappa1, c.impairment.kappa3, to_string(c.scheme), c.metric}];
        REQUIRE(static_cast<int>(v.size()) == c.count);
        double s = 0.0;
        for (double x : v) s += x;
        CHECK(std::abs(c.mean - s / v.size()) <= 1e-12 * std::abs(c.mean));
    }

    // ordering: grid point, then drop, then scheme
    for (std::size_t k = 1; k < r.records.size(); ++k) {
        const auto& a = r.records[k - 1];
        const auto& b = r.records[k];
        if (a.power_dbm == b.power_dbm && a.kappa1 == b.kappa1) CHECK(a.drop <= b.drop);
    }
    CHECK(r.records.front().drop == 0);
    CHECK(r.records.front().power_dbm == 18.2);

    // ideal hardware: max-min and distortion ignoring coincide
    std::map<std::pair<double, int>, std::map<std::string, double>> ideal;
    for (const auto& rec : r.records)
        if (rec.kappa1 == 0 && rec.metric == "min_rate") ideal[{rec.power_dbm, rec.drop}][to_string(rec.scheme)] = rec.value;
    for (const auto& [key, v] : ideal)
        CHECK(std::abs(v.at("maxmin_optimal") - v.at("distortion_ignoring")) <= 2e-3);
    CHECK(r.mux_gain.size() == grid * 2);

    const auto j = summary_json(r);
    CHECK(j["summary"].size() == r.summary.size());
    CHECK(j["summary"][0]["impairment"]["kappa2"] == "inf");
}

TEST_CASE("experiment determinism across runs and job counts") {
    auto cfg = tiny();
    cfg.drops = 2;
    cfg.schemes = {Strategy::maxmin_optimal, Strategy::tdma};
    const auto a = to_csv(run_experiment(cfg, 1).records);
    const auto b = to_csv(run_experiment(cfg, 1).records);
    const auto c = to_csv(run_experiment(cfg, 3).records);
    CHECK(a == b);
    CHECK(a == c);
    CHECK(lines(a).front() == kCsvHeader);
    CHECK(a.find(",inf,") != std::string::npos);
}

TEST_CASE("seed isolation: extra drops leave earlier drops unchanged") {
    auto cfg = tiny();
    cfg.power_dbm = {18.2};
    cfg.schemes = {Strategy::maxmin_optimal};
    cfg.drops = 2;
    const auto few = run_experiment(cfg).records;
    cfg.drops = 3;
    const auto more = run_experiment(cfg).records;
    auto key = [](const ExperimentRecord& r) {
        return std::to_string(r.drop) + format_number(r.kappa1) + r.metric;
    };
    std::map<std::string, std::string> rows;
    for (const auto& r : more) rows[key(r)] = to_csv({r});
    for (const auto& r : few) CHECK(rows.at(key(r)) == to_csv({r}));
}

TEST_CASE("shipped configs parse") {
    for (const char* name : {"fig_tx_sweep", "fig_rx_sweep", "fig_joint_sweep", "fig_power_sweep", "fig_mux_gain", "smoke"}) {
        INFO(name);
        const auto c = load_config(std::string(MCBF_CONFIG_DIR) + "/" + name + ".toml");
        if (std::string(name) != "smoke") CHECK(to_string(c.experiment) == std::string(name));
    }
    const auto mux = load_config(std::string(MCBF_CONFIG_DIR) + "/fig_mux_gain.toml");
    CHECK(mux.power_dbm.size() == 9);
    CHECK(mux.impairments.size() == 5);
    CHECK(mux.schemes.back() == Strategy::tdma);
}

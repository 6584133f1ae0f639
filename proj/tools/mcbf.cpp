// mcbf: run experiments, check acceptance criteria, print oracle values.

#include "mcbf/acceptance.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

namespace {

using namespace mcbf;

constexpr int kOk = 0, kValidationFailure = 1, kConfigError = 2;

struct RunOptions {
    std::string config, experiment, out, json;
    bool full_scale = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> drops;
    int jobs = 0;
};

int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

int cmd_run(const RunOptions& o) {
    ExperimentConfig cfg;
    try {
        if (!o.config.empty() && !o.experiment.empty()) throw ConfigError("give either --config or --experiment");
        cfg = !o.config.empty()       ? load_config(o.config)
              : !o.experiment.empty() ? preset(parse_experiment(o.experiment), o.full_scale)
                                      : preset(Experiment::custom, o.full_scale);
        if (o.seed) cfg.seed = *o.seed;
        if (o.drops) cfg.drops = *o.drops;
        if (!o.out.empty()) cfg.csv_path = o.out;
        if (!o.json.empty()) cfg.json_path = o.json;
        cfg.validate();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    std::ofstream csv_file, json_file;
    if (!cfg.csv_path.empty() && cfg.csv_path != "-") {
        csv_file.open(cfg.csv_path);
        if (!csv_file) {
            std::cerr << "config error: cannot write '" << cfg.csv_path << "'\n";
            return kConfigError;
        }
    }
    if (!cfg.json_path.empty()) {
        json_file.open(cfg.json_path);
        if (!json_file) {
            std::cerr << "config error: cannot write '" << cfg.json_path << "'\n";
            return kConfigError;
        }
    }

    const int jobs = o.jobs > 0 ? o.jobs : default_jobs();
    const auto result = run_experiment(cfg, jobs);
    write_csv(csv_file.is_open() ? static_cast<std::ostream&>(csv_file) : std::cout, result.records);
    if (json_file.is_open()) json_file << summary_json(result).dump(2) << "\n";

    std::cerr << to_string(cfg.experiment) << ": " << result.solves << " solves, " << result.failures.size()
              << " failed, " << result.unresolved_steps << " unresolved bisection steps\n";
    for (const auto& f : result.failures) std::cerr << "  " << f << "\n";
    if (result.too_many_failures()) {
        std::cerr << "failure rate " << result.failure_rate() << " exceeds 0.2\n";
        return kValidationFailure;
    }
    return kOk;
}

int cmd_validate(const std::vector<int>& only, double tolerance_scale, int jobs) {
    for (int id : only)
        if (id < 1 || id > acceptance::kCriteria) {
            std::cerr << "config error: no criterion " << id << "\n";
            return kConfigError;
        }
    acceptance::Profile p;
    p.tolerance_scale = tolerance_scale;
    p.jobs = jobs > 0 ? jobs : default_jobs();
    int failed = 0;
    acceptance::run_all(p, [&](const acceptance::CriterionResult& r) {
        std::cout << acceptance::format_line(r) << std::endl;
        failed += !r.passed;
    }, only);
    return failed ? kValidationFailure : kOk;
}

void print_oracles(std::ostream& os, const std::string& kind, int points) {
    if (kind == "scalar" || kind == "all") {
        os << "# scalar: closed-form QoS beta and max-min rate\n"
              "kind,instance,gain,sigma2,q,kappa1,kappa3,delta,target_sinr,beta,rate\n";
        const auto inst = acceptance::scalar_instances();
        for (std::size_t k = 0; k < inst.size(); ++k) {
            const auto& s = inst[k];
            os << "scalar," << k;
            for (double v : {s.link.gain, s.link.sigma2, s.link.q, s.kappa1, s.kappa3, s.link.delta, s.target,
                             oracles::scalar_qos_beta(s.link, s.target), oracles::scalar_fpo_rate(s.link)})
                os << ',' << format_number(v);
            os << '\n';
        }
    }
    if (kind == "two_cell" || kind == "all") {
        os << "# two_cell: max-min fairness value by power-grid search, " << points << " x " << points << " points\n"
              "kind,instance,kappa1,kappa2,kappa3,delta,maxmin_value\n";
        const auto inst = acceptance::two_cell_instances();
        for (std::size_t k = 0; k < inst.size(); ++k) {
            const auto& m = inst[k].model;
            os << "two_cell," << k;
            for (double v : {m.kappa1, m.kappa2, m.kappa3, inst[k].oracle.delta,
                             oracles::two_cell_grid_maxmin(inst[k].oracle, points)})
                os << ',' << format_number(v);
            os << '\n';
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coordinated multicell beamforming under transceiver impairments"};
    app.require_subcommand(1);

    RunOptions ro;
    auto* run = app.add_subcommand("run", "Run a Monte-Carlo experiment and write per-drop CSV records");
    run->add_option("--config", ro.config, "TOML experiment file")->check(CLI::ExistingFile);
    run->add_option("--experiment", ro.experiment,
                    "Preset instead of a file: fig_tx_sweep, fig_rx_sweep, fig_joint_sweep, fig_power_sweep, "
                    "fig_mux_gain, custom");
    run->add_flag("--full-scale", ro.full_scale, "Preset at K = 4, N_t = 8");
    run->add_option("--seed", ro.seed, "Master seed");
    run->add_option("--drops", ro.drops, "Number of channel drops");
    run->add_option("--out", ro.out, "CSV output path, '-' for stdout (default)");
    run->add_option("--json", ro.json, "JSON summary path");
    run->add_option("--jobs", ro.jobs, "Worker threads (default: hardware threads)");

    std::vector<int> only;
    double tol_scale = 1.0;
    int vjobs = 0;
    auto* validate = app.add_subcommand("validate", "Check the acceptance criteria, one line each");
    validate->add_option("--criteria", only, "Criterion numbers to run (default: all)")->delimiter(',');
    validate->add_option("--tolerance-scale", tol_scale, "Multiply every threshold")->check(CLI::PositiveNumber);
    validate->add_option("--jobs", vjobs, "Worker threads for the determinism check");

    std::string kind = "all", oracle_out;
    int points = 2000;
    auto* oracle = app.add_subcommand("oracle", "Print the brute-force oracle values used by the tests");
    oracle->add_option("--kind", kind, "scalar, two_cell or all")
        ->check(CLI::IsMember({"scalar", "two_cell", "all"}));
    oracle->add_option("--points", points, "Grid points per axis for the two-cell search")
        ->check(CLI::Range(2, 100000));
    oracle->add_option("--out", oracle_out, "Output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*run) return cmd_run(ro);
        if (*validate) return cmd_validate(only, tol_scale, vjobs);
        if (oracle_out.empty()) {
            print_oracles(std::cout, kind, points);
        } else {
            std::ofstream f(oracle_out);
            if (!f) {
                std::cerr << "config error: cannot write '" << oracle_out << "'\n";
                return kConfigError;
            }
            print_oracles(f, kind, points);
        }
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
}

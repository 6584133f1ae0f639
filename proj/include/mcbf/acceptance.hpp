#pragma once

// Acceptance suite: oracle comparisons, structural checks and desk-scale
// reproductions of the qualitative experimental behavior. Each criterion
// returns a pass/fail line with the measured numbers.

#include "mcbf/harness.hpp"
#include "mcbf/oracles.hpp"

#include <algorithm>
#include <chrono>

namespace mcbf::acceptance {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct Profile {
    // Multiplies every acceptance threshold; < 1 tightens the suite.
    double tolerance_scale = 1.0;
    int jobs = 1;
};

// ---------------------------------------------------------------------------
// Instance generators shared by the criteria and the oracle command.

struct ScalarInstance {
    oracles::ScalarLink link;
    double kappa1, kappa3;
    double target;  // SINR target for the QoS check
};

inline std::vector<ScalarInstance> scalar_instances(std::size_t count = 100, std::uint64_t seed = 101) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<ScalarInstance> out;
    for (std::size_t k = 0; k < count; ++k) {
        ScalarInstance s{};
        s.kappa1 = 15.0 * U(rng);
        s.kappa3 = 15.0 * U(rng);
        s.link = {std::pow(10.0, 2.0 * U(rng) - 1.0), std::pow(10.0, 2.0 * U(rng) - 1.0),
                  std::pow(10.0, 2.0 * U(rng)), s.kappa1 / 100.0, s.kappa3 / 100.0, U(rng) < 0.5 ? 0.0 : 1.0};
        s.target = (0.05 + 0.9 * U(rng)) * oracles::scalar_sinr(s.link, 2.0 * s.link.q);
        out.push_back(s);
    }
    return out;
}

inline Scenario scalar_scenario(const oracles::ScalarLink& l) {
    using Channels = std::vector<std::vector<std::vector<VectorXc>>>;
    return make_manual_scenario(Channels{{{VectorXc::Constant(1, std::sqrt(l.gain))}}}, l.sigma2,
                                {{{MatrixXc::Identity(1, 1), l.q}}}, l.delta);
}

struct TwoCellInstance {
    oracles::TwoCellScalar oracle;
    ImpairmentModel model;
};

inline std::vector<TwoCellInstance> two_cell_instances(std::size_t count = 20, std::uint64_t seed = 202) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<TwoCellInstance> out;
    for (std::size_t k = 0; k < count; ++k) {
        ImpairmentModel model = ImpairmentModel::ideal();
        if (k % 2 == 1) {
            const double k2 = (k % 4 == 3) ? 1.0 + 2.0 * U(rng) : kInf;
            model = ImpairmentModel::from_kappas(2.0 + 8.0 * U(rng), k2, 2.0 + 8.0 * U(rng));
        }
        oracles::TwoCellScalar s{};
        for (int m = 0; m < 2; ++m)
            for (int i = 0; i < 2; ++i)
                s.g[m][i] = m == i ? std::pow(10.0, U(rng) - 0.5) : std::pow(10.0, -0.3 - 1.2 * U(rng));
        s.sigma2 = std::pow(10.0, -U(rng));
        s.q[0] = std::pow(10.0, 1.5 * U(rng));
        s.q[1] = std::pow(10.0, 1.5 * U(rng));
        s.delta = U(rng) < 0.5 ? 0.0 : 1.0;
        s.eta = [model](double x) { return model.eta(x); };
        s.nu = [model](double x) { return model.nu(x); };
        out.push_back({std::move(s), model});
    }
    return out;
}

inline Scenario two_cell_scenario(const oracles::TwoCellScalar& s) {
    using Channels = std::vector<std::vector<std::vector<VectorXc>>>;
    Channels h(2, std::vector<std::vector<VectorXc>>(2));
    for (int m = 0; m < 2; ++m)
        for (int i = 0; i < 2; ++i) h[m][i] = {VectorXc::Constant(1, std::sqrt(s.g[m][i]))};
    return make_manual_scenario(std::move(h), s.sigma2,
                                {{{MatrixXc::Identity(1, 1), s.q[0]}}, {{MatrixXc::Identity(1, 1), s.q[1]}}}, s.delta);
}

inline Scenario desk_drop(std::uint64_t base, int d, double power_dbm = 18.2, Index K = 2, Index Nt = 4) {
    DropConfig cfg;
    cfg.power_dbm = power_dbm;
    return drop_users(cfg, K, Nt, mix_seed(base, static_cast<std::uint64_t>(d)))
        .scenario.with_constraints(per_array_constraints(power_dbm, 2, Nt));
}

// ---------------------------------------------------------------------------
// Infeasibility certificate: dual z in the dual cone with sum_k z_k a_k = 0
// and sum_k z_k b_k < 0 over the rows a_k^T x + b_k.

struct CertificateCheck {
    double stationarity = kInf;  // ||sum z a|| / |sum z b|
    double cone = kInf;          // dual cone violation / |sum z b|
    double value = 0.0;          // sum z b, must be negative
    bool valid(double tol) const { return value < 0.0 && stationarity <= tol && cone <= tol; }
};

inline CertificateCheck check_certificate(const conic::ConicProgram& prog, const conic::SolveOutcome& out) {
    using conic::ConstraintKind;
    CertificateCheck c;
    if (out.duals.size() != prog.constraints().size()) return c;
    VectorXd a = VectorXd::Zero(prog.num_variables());
    double b = 0.0, viol = 0.0;
    for (std::size_t k = 0; k < prog.constraints().size(); ++k) {
        const auto& con = prog.constraints()[k];
        // equality duals are reported with the opposite sign (A^T y + G^T z + c = 0)
        const VectorXd z = con.kind == ConstraintKind::equality ? VectorXd(-out.duals[k]) : out.duals[k];
        for (std::size_t r = 0; r < con.rows.size(); ++r) {
            for (const auto& t : con.rows[r].terms) a[t.var] += z[static_cast<Index>(r)] * t.coef;
            b += z[static_cast<Index>(r)] * con.rows[r].constant;
        }
        switch (con.kind) {
            case ConstraintKind::equality: break;
            case ConstraintKind::nonnegative: viol = std::max(viol, -z[0]); break;
            case ConstraintKind::soc: viol = std::max(viol, z.tail(z.size() - 1).norm() - z[0]); break;
            case ConstraintKind::rotated_soc:
                viol = std::max({viol, -z[0], -z[1], z.tail(z.size() - 2).squaredNorm() - 2.0 * z[0] * z[1]});
                break;
        }
    }
    c.value = b;
    if (b != 0.0) {
        c.stationarity = a.norm() / std::abs(b);
        c.cone = std::max(viol, 0.0) / std::abs(b);
    }
    return c;
}

inline std::vector<std::pair<std::string, conic::ConicProgram>> infeasible_fixtures() {
    using namespace conic;
    std::vector<std::pair<std::string, ConicProgram>> out;
    {
        ConicProgram p;
        auto x = p.add_variable("x");
        p.add_nonnegative(AffineRow(x[0], 1.0).add(AffineRow(-1.0)));
        p.add_nonnegative(AffineRow(x[0], -1.0));
        p.set_objective(AffineRow(x[0], 1.0));
        out.emplace_back("lp: x >= 1, x <= 0", std::move(p));
    }
    {
        ConicProgram p;
        auto x = p.add_variable("x", 2);
        p.add_soc(AffineRow(1.0), {AffineRow(x[0], 1.0), AffineRow(x[1], 1.0)});
        p.add_nonnegative(AffineRow(x[0], 1.0).add(x[1], 1.0).add(AffineRow(-2.0)));
        p.set_objective(AffineRow(x[0], 1.0));
        out.emplace_back("soc: unit disc, x0 + x1 >= 2", std::move(p));
    }
    {
        ConicProgram p;
        auto v = p.add_variable("v");
        auto u = p.add_variable("u");
        p.add_rotated_soc(AffineRow(v[0], 1.0), AffineRow(1.0), {AffineRow(u[0], 1.0)});
        p.add_nonnegative(AffineRow(u[0], 1.0).add(AffineRow(-3.0)));
        p.add_nonnegative(AffineRow(v[0], -1.0).add(AffineRow(2.0)));
        p.set_objective(AffineRow(v[0], 1.0));
        out.emplace_back("rotated: u^2 <= 2v, u >= 3, v <= 2", std::move(p));
    }
    {
        ConicProgram p;
        auto x = p.add_variable("x", 3);
        p.add_equality(AffineRow(x[0], 1.0).add(x[1], 1.0).add(x[2], 1.0).add(AffineRow(-1.0)));
        p.add_soc(AffineRow(x[0], 1.0), {AffineRow(x[1], 1.0), AffineRow(x[2], 1.0)});
        p.add_nonnegative(AffineRow(x[0], -1.0).add(AffineRow(0.2)));
        p.set_objective(AffineRow(x[0], 1.0));
        out.emplace_back("equality + soc: sum = 1, ||(x1,x2)|| <= x0 <= 0.2", std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

struct Worst {
    double value = 0.0;
    std::string where;
    void update(double v, const std::string& w) {
        if (v > value || std::isnan(v)) {
            value = v;
            where = w;
        }
    }
};

inline FpoSettings fine_bisection(double tol) {
    FpoSettings s;
    s.bisection_tol = tol;
    return s;
}

// Residual checks shared by criterion 3.
struct ResidualTally {
    Worst feas, tight, phase;
    int solves = 0;
    void add(const Scenario& sc, const ImpairmentModel& m, const UserGrid& targets, const BeamformingSolution& sol,
             const std::string& where) {
        if (!sol.optimal()) return;
        const auto r = qos_residuals(sc, m, targets, sol);
        feas.update(std::max({r.power, r.sinr, r.eta, r.nu, -r.min_aux}), where);
        tight.update(r.tightness, where);
        phase.update(r.phase, where);
        ++solves;
    }
};

template <class F>
CriterionResult timed(int id, std::string name, F&& body, double time_limit = kInf) {
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    r.id = id;
    r.name = std::move(name);
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (std::isfinite(time_limit)) {
        r.detail += "; runtime " + fmt(r.seconds) + " s (limit " + fmt(time_limit) + " s)";
        if (r.seconds >= time_limit) r.passed = false;
    }
    return r;
}

}  // namespace detail

inline CriterionResult criterion1(const Profile& p) {
    return detail::timed(1, "scalar closed-form oracle", [&](CriterionResult& r) {
        const double tol = 1e-4 * p.tolerance_scale;
        detail::Worst beta_err, f_err;
        const auto inst = scalar_instances();
        for (std::size_t k = 0; k < inst.size(); ++k) {
            const auto& s = inst[k];
            const Scenario sc = scalar_scenario(s.link);
            const auto model = ImpairmentModel::from_kappas(s.kappa1, kInf, s.kappa3);
            const auto qos = solve_qos(sc, model, {{s.target}});
            const double ref_beta = oracles::scalar_qos_beta(s.link, s.target);
            beta_err.update(qos.optimal() ? detail::rel(qos.beta, ref_beta) : kInf, "instance " + std::to_string(k));
            const auto fpo = solve_maxmin(sc, model, PerformanceMeasure::rate(), detail::fine_bisection(1e-7));
            f_err.update(detail::rel(fpo.f_star, oracles::scalar_fpo_rate(s.link)), "instance " + std::to_string(k));
        }
        r.passed = beta_err.value <= tol && f_err.value <= tol;
        r.detail = "100 instances; max rel err beta " + detail::fmt(beta_err.value) + " (" + beta_err.where +
                   "), f* " + detail::fmt(f_err.value) + " (" + f_err.where + "); threshold " + detail::fmt(tol);
    }, 30.0);
}

inline CriterionResult criterion2(const Profile& p) {
    return detail::timed(2, "two-cell power-grid oracle", [&](CriterionResult& r) {
        const double tol = 1e-3 * p.tolerance_scale;
        detail::Worst err;
        int grid_above = 0;  // a grid value above f* would mean the bisection missed feasible points
        const auto inst = two_cell_instances();
        for (std::size_t k = 0; k < inst.size(); ++k) {
            const Scenario sc = two_cell_scenario(inst[k].oracle);
            const auto fpo = solve_maxmin(sc, inst[k].model, PerformanceMeasure::rate(), detail::fine_bisection(1e-7));
            const double ref = oracles::two_cell_grid_maxmin(inst[k].oracle, 2000);
            err.update(detail::rel(fpo.f_star, ref), "instance " + std::to_string(k));
            grid_above += ref > fpo.f_star * (1.0 + 1e-6);
        }
        r.passed = err.value <= tol;
        r.detail = "20 instances (10 ideal, 10 impaired); max rel err " + detail::fmt(err.value) + " (" + err.where +
                   "); threshold " + detail::fmt(tol) + "; grid value above f* on " + std::to_string(grid_above) +
                   " instances";
    }, 300.0);
}

inline CriterionResult criterion3(const Profile& p) {
    return detail::timed(3, "convex-program tightness and feasibility", [&](CriterionResult& r) {
        const double feas_tol = 1e-6 * p.tolerance_scale, tight_tol = 1e-5 * p.tolerance_scale,
                     phase_tol = 1e-8 * p.tolerance_scale;
        detail::ResidualTally tally;
        const auto measure = PerformanceMeasure::rate();
        const auto inst = scalar_instances();
        for (std::size_t k = 0; k < inst.size(); ++k) {
            const Scenario sc = scalar_scenario(inst[k].link);
            const auto model = ImpairmentModel::from_kappas(inst[k].kappa1, kInf, inst[k].kappa3);
            const UserGrid t{{inst[k].target}};
            tally.add(sc, model, t, solve_qos(sc, model, t), "scalar qos " + std::to_string(k));
            const auto fpo = solve_maxmin(sc, model, measure);
            tally.add(sc, model, fpo_targets(measure, user_grid(sc, 0), user_grid(sc, 1), fpo.f_star), fpo.solution,
                      "scalar fpo " + std::to_string(k));
        }
        const auto two = two_cell_instances();
        for (std::size_t k = 0; k < two.size(); ++k) {
            const Scenario sc = two_cell_scenario(two[k].oracle);
            const auto fpo = solve_maxmin(sc, two[k].model, measure);
            tally.add(sc, two[k].model, fpo_targets(measure, user_grid(sc, 0), user_grid(sc, 0.5), fpo.f_star),
                      fpo.solution, "two-cell fpo " + std::to_string(k));
        }
        for (int d = 0; d < 20; ++d) {
            const Scenario sc = desk_drop(303, d);
            const auto model = d % 2 ? ImpairmentModel::from_kappas(4, 3.0, 4) : ImpairmentModel::from_kappas(4, kInf, 4);
            const auto fpo = solve_maxmin(sc, model, measure);
            tally.add(sc, model, fpo_targets(measure, user_grid(sc, 0), user_grid(sc, 0.25), fpo.f_star), fpo.solution,
                      "drop fpo " + std::to_string(d));
            const UserGrid half = fpo_targets(measure, user_grid(sc, 0), user_grid(sc, 0.25), 0.5 * fpo.f_star);
            tally.add(sc, model, half, solve_qos(sc, model, half), "drop qos " + std::to_string(d));
        }
        r.passed = tally.solves > 0 && tally.feas.value <= feas_tol && tally.tight.value <= tight_tol &&
                   tally.phase.value <= phase_tol;
        r.detail = std::to_string(tally.solves) + " optimal solves; max feasibility residual " +
                   detail::fmt(tally.feas.value) + " (" + tally.feas.where + "), tightness " +
                   detail::fmt(tally.tight.value) + ", phase " + detail::fmt(tally.phase.value) + "; thresholds " +
                   detail::fmt(feas_tol) + ", " + detail::fmt(tight_tol) + ", " + detail::fmt(phase_tol);
    });
}

inline CriterionResult criterion4(const Profile& p) {
    return detail::timed(4, "bisection halving and dense f-scan", [&](CriterionResult& r) {
        const double btol = 1e-3;
        std::mt19937_64 rng(404);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        bool halving = true;
        detail::Worst err;
        for (int k = 0; k < 12; ++k) {
            const double gain = std::pow(10.0, 2.0 * U(rng) - 1.0), sigma2 = std::pow(10.0, -U(rng));
            const double q = std::pow(10.0, 2.0 * U(rng)), delta = k % 2;
            const double k2 = k % 3 == 0 ? kInf : 0.5 + 3.0 * U(rng);
            const auto model = ImpairmentModel::from_kappas(15.0 * U(rng), k2, 15.0 * U(rng));
            oracles::ScalarLink link{gain, sigma2, q, 0, 0, delta};
            const Scenario sc = scalar_scenario(link);
            const auto fpo = solve_maxmin(sc, model, PerformanceMeasure::rate(), detail::fine_bisection(btol));
            double w = fpo.f_upper_bound;
            for (const auto& st : fpo.trace) {
                halving = halving && st.width == w / 2.0;
                w = st.width;
            }
            halving = halving && w <= btol && !fpo.trace.empty();
            const double scan = oracles::scalar_dense_scan(
                gain, sigma2, q, delta, [&](double x) { return model.eta(x); }, [&](double x) { return model.nu(x); });
            err.update(std::abs(fpo.f_star - scan), "instance " + std::to_string(k));
        }
        const double limit = 2.0 * btol * p.tolerance_scale;
        r.passed = halving && err.value <= limit;
        r.detail = std::string("width halves exactly: ") + (halving ? "yes" : "no") + "; max |f* - scan| " +
                   detail::fmt(err.value) + " (" + err.where + "), limit " + detail::fmt(limit);
    });
}

inline CriterionResult criterion5(const Profile& p) {
    return detail::timed(5, "ideal hardware: optimal and distortion-ignoring coincide", [&](CriterionResult& r) {
        const FpoSettings fs;
        const double limit = 2.0 * fs.bisection_tol * p.tolerance_scale;
        detail::Worst diff;
        for (int d = 0; d < 20; ++d) {
            const Scenario sc = desk_drop(505, d);
            const auto ideal = ImpairmentModel::from_kappas(0, kInf, 0);
            const auto a = maxmin_optimal(sc, ideal, PerformanceMeasure::rate(), fs);
            const auto b = distortion_ignoring(sc, ideal, PerformanceMeasure::rate(), fs);
            diff.update(std::abs(a.min_rate - b.min_rate), "drop " + std::to_string(d));
        }
        r.passed = diff.value <= limit;
        r.detail = "20 drops; max |min-rate difference| " + detail::fmt(diff.value) + " (" + diff.where + "), limit " +
                   detail::fmt(limit);
    });
}

inline CriterionResult criterion6(const Profile& p) {
    return detail::timed(6, "max-min optimal dominates distortion-ignoring", [&](CriterionResult& r) {
        const FpoSettings fs;
        const double slack = fs.bisection_tol * p.tolerance_scale;
        bool every = true;
        std::string detail_text;
        double gap8 = 0.0;
        for (double kappa : {2.0, 4.0, 8.0}) {
            const auto model = ImpairmentModel::from_kappas(kappa, kInf, kappa);
            double sum_opt = 0.0, sum_ign = 0.0, worst = kInf;
            for (int d = 0; d < 50; ++d) {
                const Scenario sc = desk_drop(606, d);
                const auto opt = maxmin_optimal(sc, model, PerformanceMeasure::rate(), fs);
                const auto ign = distortion_ignoring(sc, model, PerformanceMeasure::rate(), fs);
                sum_opt += opt.min_rate;
                sum_ign += ign.min_rate;
                worst = std::min(worst, opt.min_rate - ign.min_rate);
                if (opt.min_rate < ign.min_rate - slack) every = false;
            }
            if (kappa == 8.0) gap8 = (sum_opt - sum_ign) / 50.0;
            detail_text += "kappa " + detail::fmt(kappa) + ": mean " + detail::fmt(sum_opt / 50) + " vs " +
                           detail::fmt(sum_ign / 50) + ", worst drop margin " + detail::fmt(worst) + "; ";
        }
        r.passed = every && gap8 > 0.0;
        r.detail = detail_text + "slack " + detail::fmt(slack);
    });
}

/// Least-squares slope of y against x.
inline double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k] / n;
        my += y[k] / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    return sxy / sxx;
}

inline CriterionResult criterion7(const Profile& p) {
    return detail::timed(7, "rate saturation and ideal multiplexing slope", [&](CriterionResult& r) {
        const auto impaired = ImpairmentModel::from_kappas(4, kInf, 4);
        const std::vector<double> grid{50, 60, 70, 80};
        double s60 = 0.0, s80 = 0.0;
        std::vector<double> ideal(grid.size(), 0.0);
        for (int d = 0; d < 50; ++d) {
            s60 += maxmin_optimal(desk_drop(707, d, 60.0), impaired).sum_rate / 50.0;
            s80 += maxmin_optimal(desk_drop(707, d, 80.0), impaired).sum_rate / 50.0;
            for (std::size_t g = 0; g < grid.size(); ++g)
                ideal[g] += maxmin_optimal(desk_drop(707, d, grid[g]), ImpairmentModel::ideal()).sum_rate / 50.0;
        }
        std::vector<double> log2p;
        for (double dbm : grid) log2p.push_back(std::log2(dbm_to_mw(dbm)));
        const double slope = regression_slope(log2p, ideal);
        const double change = std::abs(s80 - s60) / s60;
        const double expected = 4.0;  // min(N_t, N K) for N_t = 4, N = K = 2
        const bool sat = change < 0.02 * p.tolerance_scale;
        const bool slope_ok = std::abs(slope - expected) <= 0.15 * expected * p.tolerance_scale;
        r.passed = sat && slope_ok;
        r.detail = "impaired mean sum rate 60 dBm " + detail::fmt(s60) + ", 80 dBm " + detail::fmt(s80) +
                   " (relative change " + detail::fmt(change) + "); ideal slope " + detail::fmt(slope) +
                   " per log2(power), expected 4 +- 15%";
    });
}

inline CriterionResult criterion8(const Profile& p) {
    return detail::timed(8, "bounded used power under superlinear distortion", [&](CriterionResult& r) {
        const double p0 = 18.2;
        const double kappa2 = std::sqrt(dbm_to_mw(p0 - 10.0));
        const auto model = ImpairmentModel::from_kappas(4, kappa2, 4);
        const std::vector<double> grid{p0 - 10, p0, p0 + 10, p0 + 20, p0 + 30};
        int passed = 0;
        double worst_ratio = 0.0;
        std::string failures;
        for (int d = 0; d < 10; ++d) {
            const Scenario sc = desk_drop(808, d, p0);
            const auto rep = power_saturation_probe(sc, model, PerformanceMeasure::rate(), grid, {},
                                                    0.01 * p.tolerance_scale);
            if (rep.passes())
                ++passed;
            else
                failures += " " + std::to_string(d);
            worst_ratio = std::max(worst_ratio, rep.used_power.back() / rep.cap.back());
        }
        r.passed = passed == 10;
        r.detail = "kappa2^2 = " + detail::fmt(kappa2 * kappa2) + " mW; probe passes on " + std::to_string(passed) +
                   "/10 drops" + (failures.empty() ? "" : " (failed:" + failures + ")") +
                   "; max used/cap at the top of the grid " + detail::fmt(worst_ratio);
    });
}

inline CriterionResult criterion9(const Profile&) {
    return detail::timed(9, "finite-SNR multiplexing gain", [&](CriterionResult& r) {
        double m[2] = {0.0, 0.0};
        const ImpairmentModel models[2] = {ImpairmentModel::ideal(), ImpairmentModel::from_kappas(4, kInf, 4)};
        for (int k = 0; k < 2; ++k) {
            double coord = 0.0, tdma = 0.0;
            for (int d = 0; d < 50; ++d) {
                const Scenario sc = desk_drop(909, d, 18.2);
                coord += maxmin_optimal(sc, models[k]).sum_rate;
                tdma += tdma_rate(sc, models[k]).sum_rate;
            }
            m[k] = finite_snr_mux_gain(coord / 50, tdma / 50);
        }
        // single user: both strategies solve the same problem
        bool single = true;
        std::mt19937_64 rng(910);
        std::normal_distribution<double> nd;
        for (int k = 0; k < 5; ++k) {
            const Index nt = 1 + k % 3;
            VectorXc h(nt);
            for (Index n = 0; n < nt; ++n) h[n] = cplx(nd(rng), nd(rng));
            using Channels = std::vector<std::vector<std::vector<VectorXc>>>;
            const Scenario sc = make_manual_scenario(Channels{{{h}}}, 0.1, per_array_constraints(10.0, 1, nt), 1.0);
            const double g = finite_snr_mux_gain(maxmin_optimal(sc, models[1]).sum_rate, tdma_rate(sc, models[1]).sum_rate);
            single = single && g == 1.0;
        }
        r.passed = m[1] >= m[0] && single;
        r.detail = "50 drops at 18.2 dBm: M ideal " + detail::fmt(m[0]) + ", M impaired " + detail::fmt(m[1]) +
                   "; single-user M == 1: " + (single ? "yes" : "no");
    });
}

inline CriterionResult criterion10(const Profile& p) {
    return detail::timed(10, "conic backend cross-check", [&](CriterionResult& r) {
        const double tol = 1e-4 * p.tolerance_scale;
        detail::Worst err;
        const auto suite = oracles::socp_suite();
        for (std::size_t k = 0; k < suite.size(); ++k) {
            const auto out = conic::solve_conic(suite[k].program);
            const double ref = suite[k].optimal_value;
            err.update(out.optimal() ? std::abs(out.objective - ref) / std::max(1.0, std::abs(ref)) : kInf,
                       "problem " + std::to_string(k));
        }
        int certified = 0;
        std::string bad;
        const auto fixtures = infeasible_fixtures();
        for (const auto& [name, prog] : fixtures) {
            const auto out = conic::solve_conic(prog);
            if (out.status == conic::SolveStatus::primal_infeasible && check_certificate(prog, out).valid(1e-7))
                ++certified;
            else
                bad += " [" + name + ": " + conic::to_string(out.status) + "]";
        }
        r.passed = err.value <= tol && certified == static_cast<int>(fixtures.size());
        r.detail = std::to_string(suite.size()) + " planted problems, max rel err " + detail::fmt(err.value) + " (" +
                   err.where + "); infeasible fixtures certified " + std::to_string(certified) + "/" +
                   std::to_string(fixtures.size()) + bad;
    });
}

inline ExperimentConfig determinism_config() {
    ExperimentConfig c;
    c.drops = 3;
    c.seed = 1111;
    c.power_dbm = {18.2, 40.0};
    c.impairments = {ImpairmentPoint{0, kInf, 0}, ImpairmentPoint{4, kInf, 4}, ImpairmentPoint{4, 3.0, 4}};
    c.schemes = {Strategy::maxmin_optimal, Strategy::distortion_ignoring, Strategy::tdma};
    return c;
}

inline CriterionResult criterion11(const Profile& p) {
    return detail::timed(11, "determinism", [&](CriterionResult& r) {
        const auto cfg = determinism_config();
        const std::string a = to_csv(run_experiment(cfg, 1).records);
        const std::string b = to_csv(run_experiment(cfg, 1).records);
        const std::string c = to_csv(run_experiment(cfg, std::max(2, p.jobs)).records);
        r.passed = a == b && a == c && !a.empty();
        r.detail = std::to_string(a.size()) + " CSV bytes; rerun identical: " + (a == b ? "yes" : "no") +
                   "; parallel run identical: " + (a == c ? "yes" : "no");
    });
}

inline constexpr int kCriteria = 11;

/// Runs the criteria in `only` (all when empty) in ascending order.
inline std::vector<CriterionResult> run_all(const Profile& p = {},
                                            const std::function<void(const CriterionResult&)>& on_result = {},
                                            const std::vector<int>& only = {}) {
    using Fn = CriterionResult (*)(const Profile&);
    const Fn all[kCriteria] = {criterion1, criterion2, criterion3, criterion4, criterion5, criterion6,
                               criterion7, criterion8, criterion9, criterion10, criterion11};
    std::vector<CriterionResult> out;
    for (int id = 1; id <= kCriteria; ++id) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        out.push_back(all[id - 1](p));
        if (on_result) on_result(out.back());
    }
    return out;
}

inline std::string format_line(const CriterionResult& r) {
    char head[128];
    std::snprintf(head, sizeof head, "criterion %2d: %s  [%.1f s]  ", r.id, r.passed ? "PASS" : "FAIL", r.seconds);
    return head + r.name + ": " + r.detail;
}

}  // namespace mcbf::acceptance

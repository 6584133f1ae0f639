#pragma once

// Coordinated beamforming under transceiver impairments.
//
// solve_qos: minimal budget scaling beta meeting per-user SINR targets, as a
//            second-order cone program with auxiliary distortion magnitudes
//            t (transmit, per antenna) and r (receive, per user).
// solve_fpo: fairness-profile optimization by bisection over QoS problems.
//
// Internally every program is posed in normalized units: beamformers are
// divided by a = sqrt(max_i P_i) (P_i the single-user power cap) and channels
// are multiplied by a / sigma, which sets the noise power to one.

#include "mcbf/conic.hpp"
#include "mcbf/metrics.hpp"

#include <numeric>

namespace mcbf {

enum class QosStatus { optimal, infeasible, inaccurate };

inline const char* to_string(QosStatus s) {
    switch (s) {
        case QosStatus::optimal: return "optimal";
        case QosStatus::infeasible: return "infeasible";
        case QosStatus::inaccurate: return "inaccurate";
    }
    return "unknown";
}

using UserGrid = std::vector<std::vector<double>>;  // [i][j]

inline UserGrid user_grid(const Scenario& sc, double value) {
    return UserGrid(static_cast<std::size_t>(sc.n_cells()),
                    std::vector<double>(static_cast<std::size_t>(sc.users_per_cell()), value));
}

struct BeamformingSolution {
    QosStatus status = QosStatus::inaccurate;
    std::string message;
    Beamformers W;
    double beta = kInf;
    std::vector<VectorXd> t;               // [m] per antenna, sqrt(mW)
    std::vector<std::vector<double>> r;    // [i][j], sqrt(mW)
    std::vector<std::vector<double>> sinr; // achieved under the model
    std::vector<std::vector<double>> power_duals;  // [i][k]
    std::vector<std::vector<double>> sinr_duals;   // [i][j]
    conic::SolveStats stats;
    bool cutoff_reached = false;

    bool optimal() const { return status == QosStatus::optimal; }
};

struct QosSettings {
    double tolerance = 1e-8;
    double cut_tolerance = 1e-6;  // relative to the normalization magnitude a
    int max_rounds = 50;
    double objective_cutoff = kInf;
    // Optional explicit bound beta <= beta_cap. A capped problem is strongly
    // infeasible when beta* exceeds the cap, which the solver certifies
    // reliably; used by the fairness bisection and as a fallback.
    double beta_cap = kInf;
    double fallback_beta_cap = 100.0;
};

namespace detail {

struct Normalization {
    double a;      // beamformer scale, sqrt(mW)
    double sigma;  // noise magnitude, sqrt(mW)
};

// With a superlinear eta the useful magnitudes sit near its knee, so the scale
// is capped there to keep the cut slopes moderate.
inline Normalization normalization(const Scenario& sc, const ImpairmentModel& model) {
    double cap = 0.0;
    for (Index i = 0; i < sc.n_cells(); ++i) cap = std::max(cap, sc.power_cap(i));
    double a = std::sqrt(cap);
    if (model.eta.kind() == DistortionFunction::Kind::poly5) a = std::min(a, 2.0 * model.eta.knee());
    return {a, std::sqrt(sc.noise_power())};
}

inline conic::ConvexScalarFunction as_cut_function(const DistortionFunction& f) {
    return {[f](double x) { return f(std::max(x, 0.0)); }, [f](double x) { return f.derivative(std::max(x, 0.0)); },
            f.label()};
}

// Exact phase rotation making h^H w real and nonnegative.
inline void normalize_phase(VectorXc& w, const VectorXc& h) {
    const cplx s = h.dot(w);
    if (std::abs(s) > 0.0) w *= std::conj(s) / std::abs(s);
}

}  // namespace detail

/// Sets t, r to the distortion magnitudes of W and phase-normalizes the
/// beamformers of users with positive targets; fills achieved SINRs.
inline void tighten(const Scenario& sc, const ImpairmentModel& model, const UserGrid& targets, BeamformingSolution& sol) {
    const Index N = sc.n_cells(), K = sc.users_per_cell();
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j)
            if (targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] > 0.0) {
                VectorXc w = sol.W[static_cast<std::size_t>(i)].col(j);
                detail::normalize_phase(w, sc.h(i, i, j));
                sol.W[static_cast<std::size_t>(i)].col(j) = w;
            }
    sol.t.clear();
    for (Index m = 0; m < N; ++m) {
        VectorXd tm(sc.n_tx());
        for (Index n = 0; n < sc.n_tx(); ++n) tm[n] = model.eta(row_magnitude(sol.W[static_cast<std::size_t>(m)], n));
        sol.t.push_back(tm);
    }
    sol.r.assign(static_cast<std::size_t>(N), {});
    sol.sinr.assign(static_cast<std::size_t>(N), {});
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j) {
            sol.r[static_cast<std::size_t>(i)].push_back(model.nu(received_magnitude(sc, sol.W, i, j)));
            sol.sinr[static_cast<std::size_t>(i)].push_back(sinr(sc, sol.W, model, i, j));
        }
}

/// Minimal beta with SINR_{i,j} >= targets[i][j] and power usage <= beta q.
inline BeamformingSolution solve_qos(const Scenario& sc, const ImpairmentModel& model, const UserGrid& targets,
                                     const QosSettings& settings = {}) {
    using namespace conic;
    const Index N = sc.n_cells(), K = sc.users_per_cell(), Nt = sc.n_tx();
    if (static_cast<Index>(targets.size()) != N) throw InvalidInput("targets must list every cell");
    bool any_active = false;
    for (const auto& row : targets) {
        if (static_cast<Index>(row.size()) != K) throw InvalidInput("targets must list every user");
        for (double s : row) {
            if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidInput("SINR targets must be finite and nonnegative");
            any_active |= s > 0.0;
        }
    }

    BeamformingSolution sol;
    sol.W = zero_beamformers(sc);
    if (!any_active) {
        sol.status = QosStatus::optimal;
        sol.beta = 0.0;
        sol.power_duals.assign(static_cast<std::size_t>(N), {});
        sol.sinr_duals = user_grid(sc, 0.0);
        tighten(sc, model, targets, sol);
        return sol;
    }

    const auto nz = mcbf::detail::normalization(sc, model);
    const double chan_scale = nz.a / nz.sigma;
    const DistortionFunction eta = model.eta.rescaled(nz.a, nz.a);
    const DistortionFunction nu = model.nu.rescaled(nz.sigma, nz.sigma);
    auto hs = [&](Index m, Index i, Index j) -> VectorXc { return sc.h(m, i, j) * chan_scale; };
    auto active = [&](Index i, Index j) { return targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] > 0.0; };

    ConicProgram prog;
    std::vector<std::vector<ComplexBlock>> W(static_cast<std::size_t>(N));
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j)
            W[static_cast<std::size_t>(i)].push_back(
                ComplexBlock::from(prog.add_variable("W[" + std::to_string(i) + "][" + std::to_string(j) + "]", 2 * Nt)));
    const VarBlock beta = prog.add_variable("beta");

    const bool has_t = !eta.is_zero();
    const bool has_r = !nu.is_zero();
    std::vector<VarBlock> t, u;
    if (has_t)
        for (Index m = 0; m < N; ++m) t.push_back(prog.add_variable("t[" + std::to_string(m) + "]", Nt));
    if (has_t && !eta.is_linear())
        for (Index m = 0; m < N; ++m) u.push_back(prog.add_variable("u[" + std::to_string(m) + "]", Nt));
    std::map<std::pair<Index, Index>, Index> r, v;
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j)
            if (has_r && active(i, j)) {
                const std::string tag = "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
                r[{i, j}] = prog.add_variable("r" + tag)[0];
                if (!nu.is_linear()) v[{i, j}] = prog.add_variable("v" + tag)[0];
            }

    std::vector<ScalarConvexConstraint> scalars;

    // t >= 0, r >= 0, Im(h^H w) = 0
    for (const auto& tm : t)
        for (Index n = 0; n < Nt; ++n) prog.add_nonnegative(AffineRow(tm[n], 1.0), "t>=0");
    for (const auto& [key, idx] : r) prog.add_nonnegative(AffineRow(idx, 1.0), "r>=0");
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j)
            if (active(i, j)) {
                auto [re, im] = complex_linear(hs(i, i, j).conjugate(), W[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
                prog.add_equality(std::move(im), "phase");
            }

    // Power constraints.
    std::vector<std::vector<ConstraintId>> power_ids(static_cast<std::size_t>(N));
    const double a2 = nz.a * nz.a;
    for (Index i = 0; i < N; ++i) {
        const auto& cell = sc.constraints(i);
        for (std::size_t k = 0; k < cell.size(); ++k) {
            std::vector<WeightedScalar> extra;
            if (has_t && sc.delta() > 0.0)
                for (Index n = 0; n < Nt; ++n) {
                    const double wgt = sc.delta() * std::real(cell[k].Q(n, n));
                    if (wgt > 0.0) extra.push_back({t[static_cast<std::size_t>(i)][n], wgt});
                }
            power_ids[static_cast<std::size_t>(i)].push_back(embed_quadratic(
                prog, W[static_cast<std::size_t>(i)], cell[k].Q, extra, AffineRow(beta[0], cell[k].q / a2), "power"));
        }
    }

    // SINR cones: ||(interference, distortion, noise)|| <= Re(h^H w) / sqrt(s).
    std::map<std::pair<Index, Index>, ConstraintId> sinr_ids;
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j) {
            if (!active(i, j)) continue;
            const double s = targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            const VectorXc hii = hs(i, i, j);
            auto [head, head_im] = complex_linear(hii.conjugate(), W[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
            std::vector<AffineRow> tail;
            for (Index m = 0; m < N; ++m) {
                const VectorXc hm = hs(m, i, j);
                for (Index l = 0; l < K; ++l) {
                    if (m == i && l == j) continue;
                    auto [re, im] = complex_linear(hm.conjugate(), W[static_cast<std::size_t>(m)][static_cast<std::size_t>(l)]);
                    tail.push_back(std::move(re));
                    tail.push_back(std::move(im));
                }
                if (has_t)
                    for (Index n = 0; n < Nt; ++n) {
                        const double g = std::abs(hm[n]);
                        if (g > 0.0) tail.push_back(AffineRow(t[static_cast<std::size_t>(m)][n], g));
                    }
            }
            if (has_r) tail.push_back(AffineRow(r[{i, j}], 1.0));
            tail.push_back(AffineRow(1.0));
            sinr_ids[{i, j}] = prog.add_soc(head.scaled(1.0 / std::sqrt(s)), std::move(tail), "sinr");
        }

    // Transmit distortion: eta(||T_n W_m||) <= t_{m,n}.
    for (Index m = 0; m < N && has_t; ++m)
        for (Index n = 0; n < Nt; ++n) {
            std::vector<AffineRow> row;
            const double c = eta.is_linear() ? eta.slope() : 1.0;
            for (Index l = 0; l < K; ++l) {
                const auto& w = W[static_cast<std::size_t>(m)][static_cast<std::size_t>(l)];
                row.push_back(AffineRow(w.re(n), c));
                row.push_back(AffineRow(w.im(n), c));
            }
            if (eta.is_linear()) {
                prog.add_soc(AffineRow(t[static_cast<std::size_t>(m)][n], 1.0), std::move(row), "eta");
            } else {
                const Index un = u[static_cast<std::size_t>(m)][n];
                prog.add_soc(AffineRow(un, 1.0), std::move(row), "eta-arg");
                double hint = std::sqrt(sc.power_cap(m)) / nz.a;
                if (std::isfinite(eta.knee())) hint = std::min(hint, 2.0 * eta.knee());
                scalars.push_back({mcbf::detail::as_cut_function(eta), un, t[static_cast<std::size_t>(m)][n], hint});
            }
        }

    // Receive distortion: nu(sqrt(sum_m ||h^H W_m||^2)) <= r_{i,j}.
    for (const auto& [key, ridx] : r) {
        const auto [i, j] = key;
        const double c = nu.is_linear() ? nu.slope() : 1.0;
        std::vector<AffineRow> row;
        double mag_hint = 0.0;
        for (Index m = 0; m < N; ++m) {
            const VectorXc hm = hs(m, i, j);
            mag_hint += hm.squaredNorm() * sc.power_cap(m) / a2;
            for (Index l = 0; l < K; ++l) {
                auto [re, im] = complex_linear(hm.conjugate(), W[static_cast<std::size_t>(m)][static_cast<std::size_t>(l)]);
                row.push_back(re.scaled(c));
                row.push_back(im.scaled(c));
            }
        }
        if (nu.is_linear()) {
            prog.add_soc(AffineRow(ridx, 1.0), std::move(row), "nu");
        } else {
            const Index vi = v[key];
            prog.add_soc(AffineRow(vi, 1.0), std::move(row), "nu-arg");
            scalars.push_back({mcbf::detail::as_cut_function(nu), vi, ridx, std::sqrt(mag_hint)});
        }
    }

    prog.set_objective(AffineRow(beta[0], 1.0));

    auto run = [&](double cap, bool& cutoff) -> SolveOutcome {
        ConicProgram p = prog;
        if (std::isfinite(cap)) p.add_nonnegative(AffineRow(cap).add(beta[0], -1.0), "beta-cap");
        cutoff = false;
        if (scalars.empty()) {
            SolverSettings ss;
            ss.tolerance = settings.tolerance;
            return solve_conic(p, ss);
        }
        OuterApproxSettings os;
        os.cut_tolerance = settings.cut_tolerance;
        os.max_rounds = settings.max_rounds;
        os.solver.tolerance = settings.tolerance;
        os.objective_cutoff = settings.objective_cutoff;
        auto oa = outer_approx_solve(std::move(p), scalars, os);
        cutoff = oa.cutoff_reached;
        return oa;
    };

    bool cutoff = false;
    double cap = settings.beta_cap;
    SolveOutcome res = run(cap, cutoff);
    const bool settled = res.usable() || res.status == SolveStatus::primal_infeasible || cutoff;
    if (!settled && !std::isfinite(cap) && std::isfinite(settings.fallback_beta_cap)) {
        // No certificate exists when targets are only reachable asymptotically;
        // a capped problem is strictly infeasible there.
        cap = settings.fallback_beta_cap;
        res = run(cap, cutoff);
    }

    sol.stats = res.stats;
    sol.cutoff_reached = cutoff;
    switch (res.status) {
        case SolveStatus::optimal:
        case SolveStatus::optimal_reduced: sol.status = QosStatus::optimal; break;
        case SolveStatus::primal_infeasible:
            sol.status = QosStatus::infeasible;
            sol.message = std::isfinite(cap) ? "targets unreachable with beta <= " + std::to_string(cap)
                                             : "targets unreachable at any power";
            if (std::isfinite(cap) && !std::isfinite(settings.beta_cap))
                sol.message = "targets unreachable at any power (no point with beta <= " + std::to_string(cap) + ")";
            return sol;
        default:
            sol.status = QosStatus::inaccurate;
            sol.message = std::string("solver returned ") + to_string(res.status);
            if (res.x.size() == 0) return sol;
            break;
    }
    sol.beta = res.objective;
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j)
            sol.W[static_cast<std::size_t>(i)].col(j) =
                nz.a * W[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].value(res.x);
    sol.power_duals.assign(static_cast<std::size_t>(N), {});
    for (Index i = 0; i < N; ++i)
        for (auto id : power_ids[static_cast<std::size_t>(i)])
            sol.power_duals[static_cast<std::size_t>(i)].push_back(res.duals[id][0]);
    sol.sinr_duals = user_grid(sc, 0.0);
    for (const auto& [key, id] : sinr_ids)
        sol.sinr_duals[static_cast<std::size_t>(key.first)][static_cast<std::size_t>(key.second)] = res.duals[id][0];
    tighten(sc, model, targets, sol);
    return sol;
}

// ---------------------------------------------------------------------------
// Verification of the convex program's constraints at a physical solution.

struct ConstraintResiduals {
    double power = 0.0;      // max (lhs - beta q) / max(q beta, q)
    double sinr = 0.0;       // max relative violation of the cone
    double eta = 0.0;        // max eta(||T_n W||) - t
    double nu = 0.0;         // max nu(.) - r
    double phase = 0.0;      // max |Im(h^H w)| / (|h^H w| + sigma)
    double tightness = 0.0;  // max |t - eta| and |r - nu|
    double min_aux = 0.0;    // min of t and r (should be >= 0)
};

inline ConstraintResiduals qos_residuals(const Scenario& sc, const ImpairmentModel& model, const UserGrid& targets,
                                             const BeamformingSolution& sol) {
    ConstraintResiduals res;
    const Index N = sc.n_cells(), K = sc.users_per_cell();
    const double sigma = std::sqrt(sc.noise_power());
    for (Index i = 0; i < N; ++i) {
        const auto& Wi = sol.W[static_cast<std::size_t>(i)];
        const VectorXd& ti = sol.t[static_cast<std::size_t>(i)];
        for (const auto& pc : sc.constraints(i)) {
            double lhs = std::real((Wi.adjoint() * pc.Q * Wi).trace());
            for (Index n = 0; n < sc.n_tx(); ++n) lhs += sc.delta() * std::real(pc.Q(n, n)) * ti[n] * ti[n];
            res.power = std::max(res.power, (lhs - sol.beta * pc.q) / (pc.q * std::max(1.0, sol.beta)));
        }
        for (Index n = 0; n < sc.n_tx(); ++n) {
            const double e = model.eta(row_magnitude(Wi, n));
            res.eta = std::max(res.eta, e - ti[n]);
            res.tightness = std::max(res.tightness, std::abs(e - ti[n]));
            res.min_aux = std::min(res.min_aux, ti[n]);
        }
    }
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j) {
            const double rij = sol.r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            const double nv = model.nu(received_magnitude(sc, sol.W, i, j));
            res.nu = std::max(res.nu, nv - rij);
            res.tightness = std::max(res.tightness, std::abs(nv - rij));
            res.min_aux = std::min(res.min_aux, rij);
            const double s = targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (!(s > 0.0)) continue;
            const cplx sig = sc.h(i, i, j).dot(sol.W[static_cast<std::size_t>(i)].col(j));
            res.phase = std::max(res.phase, std::abs(sig.imag()) / (std::abs(sig) + sigma));
            double lhs2 = sc.noise_power() + rij * rij;
            for (Index m = 0; m < N; ++m) {
                const VectorXc& h = sc.h(m, i, j);
                lhs2 += (h.adjoint() * sol.W[static_cast<std::size_t>(m)]).squaredNorm();
                lhs2 += (h.cwiseAbs2().array() * sol.t[static_cast<std::size_t>(m)].array().square()).sum();
            }
            const double rhs = std::sqrt(1.0 + 1.0 / s) * sig.real();
            res.sinr = std::max(res.sinr, (std::sqrt(lhs2) - rhs) / std::max(rhs, sigma));
        }
    return res;
}

// ---------------------------------------------------------------------------
// Fairness-profile optimization.

struct FpoSettings {
    double bisection_tol = 1e-3;
    QosSettings qos;
};

struct BisectionStep {
    double candidate;
    double lower;  // interval after the update
    double width;
    bool feasible;
    double beta;
    QosStatus status;
};

/// Solver failure during bisection; carries the trace so far.
class FpoError : public SolverError {
public:
    FpoError(const std::string& what, std::vector<BisectionStep> trace) : SolverError(what), trace(std::move(trace)) {}
    std::vector<BisectionStep> trace;
};

struct FpoResult {
    double f_star = 0.0;         // largest candidate certified feasible
    double f_lower = 0.0, f_upper = 0.0;  // final interval
    double f_upper_bound = 0.0;  // initial bound
    BeamformingSolution solution;
    std::vector<BisectionStep> trace;
    // Candidates where the solver neither certified feasibility nor
    // infeasibility; they are treated as infeasible, so f_star stays a
    // certified lower bound.
    int unresolved_steps = 0;
};

inline void check_fairness_profile(const Scenario& sc, const UserGrid& a, const UserGrid& alpha) {
    const auto N = static_cast<std::size_t>(sc.n_cells()), K = static_cast<std::size_t>(sc.users_per_cell());
    if (a.size() != N || alpha.size() != N) throw InvalidInput("fairness profile must list every cell");
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (a[i].size() != K || alpha[i].size() != K) throw InvalidInput("fairness profile must list every user");
        for (std::size_t j = 0; j < K; ++j) {
            if (!(a[i][j] >= 0.0) || !(alpha[i][j] >= 0.0)) throw InvalidInput("a and alpha must be nonnegative");
            total += alpha[i][j];
        }
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("alpha must sum to one");
}

/// Upper bound on the fairness value ignoring interference and impairments.
inline double fpo_upper_bound(const Scenario& sc, const PerformanceMeasure& measure, const UserGrid& a,
                              const UserGrid& alpha) {
    check_fairness_profile(sc, a, alpha);
    double f = kInf;
    for (Index i = 0; i < sc.n_cells(); ++i) {
        const double P = sc.power_cap(i);
        for (Index j = 0; j < sc.users_per_cell(); ++j) {
            const double al = alpha[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (al == 0.0) continue;
            const double snr = sc.h(i, i, j).squaredNorm() * P / sc.noise_power();
            f = std::min(f, (measure.g(snr) - a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) / al);
        }
    }
    return std::max(f, 0.0);
}

inline UserGrid fpo_targets(const PerformanceMeasure& measure, const UserGrid& a, const UserGrid& alpha, double f) {
    UserGrid s = a;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) s[i][j] = std::max(0.0, measure.g_inverse(a[i][j] + alpha[i][j] * f));
    return s;
}

inline FpoResult solve_fpo(const Scenario& sc, const ImpairmentModel& model, const PerformanceMeasure& measure,
                           const UserGrid& a, const UserGrid& alpha, const FpoSettings& settings = {}) {
    if (!(settings.bisection_tol > 0.0)) throw InvalidInput("bisection tolerance must be positive");
    FpoResult out;
    out.f_upper_bound = fpo_upper_bound(sc, measure, a, alpha);

    // Feasible with beta <= 1 iff the problem capped at beta <= 2 has an
    // optimum <= 1; the cap turns hopeless candidates into certified
    // infeasibility instead of a diverging solve.
    QosSettings qs = settings.qos;
    qs.objective_cutoff = 1.0;
    qs.beta_cap = std::min(qs.beta_cap, 2.0);
    auto feasible = [&](const BeamformingSolution& s) {
        return s.status == QosStatus::optimal && !s.cutoff_reached && s.beta <= 1.0;
    };
    // Near the largest achievable f the feasible set can shrink to a point and
    // the solver may stall. Its best iterate is then accepted only if it meets
    // every target and budget when evaluated directly. At very high SINR the
    // iterate can miss a target by a relative 1e-6 while far inside the
    // budgets; the iterate scaled up to the budgets is tried as well.
    auto max_usage = [&](const Beamformers& W) {
        double worst = 0.0;
        for (Index i = 0; i < sc.n_cells(); ++i) {
            const auto& Wi = W[static_cast<std::size_t>(i)];
            const VectorXd c2 = tx_distortion_cov(Wi, model);
            for (const auto& pc : sc.constraints(i)) worst = std::max(worst, power_usage(Wi, c2, pc.Q, sc.delta()) / pc.q);
        }
        return worst;
    };
    auto meets = [&](const Beamformers& W, const UserGrid& targets) {
        for (Index i = 0; i < sc.n_cells(); ++i)
            for (Index j = 0; j < sc.users_per_cell(); ++j)
                if (!(sinr(sc, W, model, i, j) >= targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * (1.0 - 1e-6)))
                    return false;
        return max_usage(W) <= 1.0 + 1e-6;
    };
    auto verified = [&](BeamformingSolution& s, const UserGrid& targets) {
        if (s.status != QosStatus::inaccurate || s.cutoff_reached || s.W.empty()) return false;
        if (meets(s.W, targets)) return true;
        const double usage = max_usage(s.W);
        if (!(usage > 0.0 && usage < 1.0)) return false;
        double c = 1.0 / std::sqrt(usage);
        for (int k = 0; k < 20 && c > 1.0 + 1e-9; ++k, c = std::sqrt(c)) {
            Beamformers V = s.W;
            for (auto& Vi : V) Vi *= c;
            if (max_usage(V) > 1.0 + 1e-6) continue;
            if (!meets(V, targets)) return false;
            s.W = std::move(V);
            for (Index i = 0; i < sc.n_cells(); ++i)
                for (Index j = 0; j < sc.users_per_cell(); ++j)
                    s.sinr[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = sinr(sc, s.W, model, i, j);
            return true;
        }
        return false;
    };

    const UserGrid base_targets = fpo_targets(measure, a, alpha, 0.0);
    BeamformingSolution base = solve_qos(sc, model, base_targets, qs);
    if (!feasible(base) && !verified(base, base_targets)) {
        if (base.status == QosStatus::inaccurate && !base.cutoff_reached)
            throw FpoError("solver failure at the minimum QoS levels: " + base.message, out.trace);
        throw FpoError("minimum QoS levels infeasible", out.trace);
    }
    out.solution = std::move(base);

    double lower = 0.0, width = out.f_upper_bound;
    while (width > settings.bisection_tol) {
        width /= 2.0;
        const double cand = lower + width;
        const UserGrid targets = fpo_targets(measure, a, alpha, cand);
        BeamformingSolution s = solve_qos(sc, model, targets, qs);
        const bool ok = feasible(s) || verified(s, targets);
        if (!ok && s.status == QosStatus::inaccurate && !s.cutoff_reached) ++out.unresolved_steps;
        const double beta = s.beta;
        const QosStatus status = s.status;
        if (ok) {
            lower = cand;
            out.solution = std::move(s);
        }
        out.trace.push_back({cand, lower, width, ok, beta, status});
    }
    out.f_star = lower;
    out.f_lower = lower;
    out.f_upper = lower + width;
    return out;
}

/// Max-min fairness profile: a = 0, alpha = 1/(NK).
inline FpoResult solve_maxmin(const Scenario& sc, const ImpairmentModel& model,
                              const PerformanceMeasure& measure = PerformanceMeasure::rate(),
                              const FpoSettings& settings = {}) {
    const double share = 1.0 / static_cast<double>(sc.n_users());
    return solve_fpo(sc, model, measure, user_grid(sc, 0.0), user_grid(sc, share), settings);
}

// ---------------------------------------------------------------------------
// Structure of the optimal beamforming directions.

struct CellStructureFit {
    VectorXd lambda;  // per power constraint of the cell
    VectorXd mu;      // per user (m, l), flattened m * K + l
    VectorXd tau;     // per antenna
    std::vector<double> angle;  // per user j of the cell, radians
    double residual = 0.0;      // least-squares residual of the fit
    bool ridge_added = false;
};

struct StructureFitReport {
    std::vector<CellStructureFit> cells;
    double max_angle = 0.0;
};

/// Fits nonnegative (lambda, mu, tau) so that the regularized channel
/// inversion (sum lambda Q + sum mu h h^H + sum tau T_n)^{-1} h_{i,i,j}
/// reproduces each optimal direction. Diagnostic only.
inline StructureFitReport structure_fit(const BeamformingSolution& sol, const Scenario& sc, int sweeps = 20000) {
    if (!sol.optimal()) throw InvalidInput("structure_fit needs an optimal solution");
    const Index N = sc.n_cells(), K = sc.users_per_cell(), Nt = sc.n_tx();
    StructureFitReport rep;
    for (Index i = 0; i < N; ++i) {
        const auto& cell = sc.constraints(i);
        const Index L = static_cast<Index>(cell.size());
        std::vector<MatrixXc> basis;
        for (const auto& pc : cell) basis.push_back(pc.Q);
        for (Index m = 0; m < N; ++m)
            for (Index l = 0; l < K; ++l) {
                const VectorXc& h = sc.h(i, m, l);
                basis.push_back(h * h.adjoint());
            }
        for (Index n = 0; n < Nt; ++n) {
            MatrixXc T = MatrixXc::Zero(Nt, Nt);
            T(n, n) = 1.0;
            basis.push_back(T);
        }
        const Index P = static_cast<Index>(basis.size());
        VectorXd bnorm(P);
        for (Index k = 0; k < P; ++k) {
            bnorm[k] = basis[static_cast<std::size_t>(k)].norm();
            if (bnorm[k] > 0.0) basis[static_cast<std::size_t>(k)] /= bnorm[k];
        }

        // Columns: projection of B_k v_j orthogonal to h_{i,i,j}, stacked over j.
        std::vector<Index> users;
        for (Index j = 0; j < K; ++j)
            if (sol.W[static_cast<std::size_t>(i)].col(j).norm() > 0.0) users.push_back(j);
        MatrixXd C = MatrixXd::Zero(2 * Nt * static_cast<Index>(users.size()), P);
        for (std::size_t uj = 0; uj < users.size(); ++uj) {
            const Index j = users[uj];
            VectorXc vj = sol.W[static_cast<std::size_t>(i)].col(j).normalized();
            const VectorXc hh = sc.h(i, i, j).normalized();
            for (Index k = 0; k < P; ++k) {
                VectorXc col = basis[static_cast<std::size_t>(k)] * vj;
                col -= hh * hh.dot(col);
                C.block(2 * Nt * static_cast<Index>(uj), k, Nt, 1) = col.real();
                C.block(2 * Nt * static_cast<Index>(uj) + Nt, k, Nt, 1) = col.imag();
            }
        }

        // Initialization from the duals (scaled to the normalized basis).
        VectorXd theta = VectorXd::Zero(P);
        for (Index k = 0; k < L; ++k)
            theta[k] = std::max(0.0, sol.power_duals.empty() || sol.power_duals[static_cast<std::size_t>(i)].size() <= static_cast<std::size_t>(k)
                                         ? 0.0
                                         : sol.power_duals[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]) * bnorm[k];
        for (Index m = 0; m < N; ++m)
            for (Index l = 0; l < K; ++l) {
                const double d = sol.sinr_duals.empty() ? 0.0 : sol.sinr_duals[static_cast<std::size_t>(m)][static_cast<std::size_t>(l)];
                theta[L + m * K + l] = std::max(0.0, d) * bnorm[L + m * K + l];
            }
        if (theta.sum() <= 0.0) theta.setConstant(1.0);
        theta /= theta.sum();

        // Projected coordinate descent on ||C theta||^2 + rho (1^T theta - 1)^2.
        const MatrixXd H0 = C.transpose() * C;
        const double rho = std::max(1.0, H0.diagonal().maxCoeff());
        MatrixXd H = H0;
        H.array() += rho;
        VectorXd grad = H * theta - VectorXd::Constant(P, rho);
        for (int sw = 0; sw < sweeps; ++sw) {
            double change = 0.0;
            for (Index k = 0; k < P; ++k) {
                if (H(k, k) <= 0.0) continue;
                const double nv = std::max(0.0, theta[k] - grad[k] / H(k, k));
                const double d = nv - theta[k];
                if (d != 0.0) {
                    grad += d * H.col(k);
                    theta[k] = nv;
                    change = std::max(change, std::abs(d));
                }
            }
            if (change < 1e-16) break;
        }

        CellStructureFit fit;
        fit.residual = std::sqrt(std::max(0.0, theta.dot(H0 * theta)));
        VectorXd params = theta.cwiseQuotient(bnorm.cwiseMax(1e-300));
        MatrixXc M = MatrixXc::Zero(Nt, Nt);
        for (Index k = 0; k < P; ++k) M += theta[k] * basis[static_cast<std::size_t>(k)];
        {
            Eigen::SelfAdjointEigenSolver<MatrixXc> es(M, Eigen::EigenvaluesOnly);
            const double top = es.eigenvalues().cwiseAbs().maxCoeff();
            if (!(es.eigenvalues().minCoeff() > 1e-12 * top)) {
                M += MatrixXc::Identity(Nt, Nt) * (1e-12 * std::max(top, 1e-300));
                fit.ridge_added = true;
            }
        }
        Eigen::FullPivLU<MatrixXc> lu(M);
        for (Index j = 0; j < K; ++j) {
            const VectorXc w = sol.W[static_cast<std::size_t>(i)].col(j);
            if (w.norm() == 0.0) {
                fit.angle.push_back(0.0);
                continue;
            }
            const VectorXc dir = lu.solve(sc.h(i, i, j));
            fit.angle.push_back(direction_angle(dir, w));
            rep.max_angle = std::max(rep.max_angle, fit.angle.back());
        }
        const double top = params.maxCoeff();
        if (top > 0.0) params /= top;
        fit.lambda = params.head(L);
        fit.mu = params.segment(L, N * K);
        fit.tau = params.tail(Nt);
        rep.cells.push_back(std::move(fit));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Bounded optimal power under superlinear distortion.

struct SaturationReport {
    std::vector<double> power_dbm;
    std::vector<double> used_power;  // sum_{i,j} ||w_{i,j}||^2, mW
    std::vector<double> cap;         // sum_i P_i at each grid point, mW
    std::vector<double> f_star;
    bool nondecreasing = false;
    bool plateau = false;
    Index plateau_from = -1;
    bool below_cap_at_top = false;
    bool passes() const { return nondecreasing && plateau && below_cap_at_top; }
};

/// Fills the shape flags of a report from its used power and cap series.
inline void classify_saturation(SaturationReport& rep, double plateau_tol) {
    const std::size_t G = rep.used_power.size();
    // Earliest grid point after which every value stays within tol of the last.
    const double last = rep.used_power.back();
    std::size_t from = G - 1;
    while (from > 0 && std::abs(rep.used_power[from - 1] - last) <= plateau_tol * last) --from;
    // Nondecreasing up to the plateau; on the plateau only the band applies.
    rep.nondecreasing = true;
    for (std::size_t k = 1; k <= from; ++k)
        if (rep.used_power[k] < rep.used_power[k - 1] * (1.0 - plateau_tol)) rep.nondecreasing = false;
    rep.plateau = from + 1 < G;
    rep.plateau_from = rep.plateau ? static_cast<Index>(from) : -1;
    rep.below_cap_at_top = last < rep.cap.back() * (1.0 - plateau_tol);
}

/// Rescales every q_{i,k} so that the largest equals each grid power, solves
/// the max-min profile, and checks that used power levels off below the cap.
inline SaturationReport power_saturation_probe(const Scenario& sc, const ImpairmentModel& model,
                                               const PerformanceMeasure& measure, const std::vector<double>& power_grid_dbm,
                                               const FpoSettings& settings = {}, double plateau_tol = 0.01) {
    if (power_grid_dbm.size() < 2) throw InvalidInput("saturation probe needs at least two grid points");
    double qmax = 0.0;
    for (const auto& cell : sc.all_constraints())
        for (const auto& pc : cell) qmax = std::max(qmax, pc.q);
    SaturationReport rep;
    const double share = 1.0 / static_cast<double>(sc.n_users());
    for (double p : power_grid_dbm) {
        const Scenario scaled = sc.with_scaled_budgets(dbm_to_mw(p) / qmax);
        auto res = solve_fpo(scaled, model, measure, user_grid(scaled, 0.0), user_grid(scaled, share), settings);
        double used = 0.0;
        for (const auto& Wi : res.solution.W) used += Wi.squaredNorm();
        double cap = 0.0;
        for (Index i = 0; i < scaled.n_cells(); ++i) cap += scaled.power_cap(i);
        rep.power_dbm.push_back(p);
        rep.used_power.push_back(used);
        rep.cap.push_back(cap);
        rep.f_star.push_back(res.f_star);
    }
    classify_saturation(rep, plateau_tol);
    return rep;
}

}  // namespace mcbf

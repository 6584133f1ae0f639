#pragma once

// Outer approximation for scalar constraints phi(u) <= t with phi convex and
// increasing. Each constraint is replaced by supporting-hyperplane cuts
//   phi(u0) + phi'(u0) (u - u0) <= t
// which are valid for every feasible (u, t) because phi is convex, so each
// relaxation contains the true feasible set.

#include "mcbf/conic/solver.hpp"

#include <functional>

namespace mcbf::conic {

struct ConvexScalarFunction {
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    std::string label;
};

struct ScalarConvexConstraint {
    ConvexScalarFunction phi;
    Index argument;        // u; the program must bound it below by a norm
    Index bound;           // t
    double upper_hint = 0; // > 0: extra initial cut at this argument value
};

struct OuterApproxSettings {
    double cut_tolerance = 1e-6;
    int max_rounds = 50;
    SolverSettings solver;
    // Stop as soon as a relaxation's objective exceeds this value; the true
    // optimum is then certified to exceed it as well.
    double objective_cutoff = kInf;
};

struct OuterApproxOutcome : SolveOutcome {
    bool cutoff_reached = false;
    std::size_t cuts_added = 0;
};

inline AffineRow supporting_cut(const ScalarConvexConstraint& c, double u0) {
    // t - phi'(u0) u - (phi(u0) - phi'(u0) u0) >= 0
    const double f = c.phi.value(u0), d = c.phi.derivative(u0);
    AffineRow r(-(f - d * u0));
    r.add(c.bound, 1.0).add(c.argument, -d);
    return r;
}

inline OuterApproxOutcome outer_approx_solve(ConicProgram program, const std::vector<ScalarConvexConstraint>& scalars,
                                             const OuterApproxSettings& settings = {}) {
    if (!(settings.cut_tolerance > 0.0)) throw InvalidInput("cut tolerance must be positive");
    for (const auto& c : scalars) {
        if (!c.phi.value || !c.phi.derivative) throw InvalidInput("scalar constraint without value/derivative");
        if (c.phi.value(0.0) < 0.0) throw InvalidInput("scalar constraint function must satisfy phi(0) >= 0");
    }
    OuterApproxOutcome out;
    for (const auto& c : scalars) {
        program.add_nonnegative(supporting_cut(c, 0.0), "cut");
        ++out.cuts_added;
        if (c.upper_hint > 0.0) {
            program.add_nonnegative(supporting_cut(c, c.upper_hint), "cut");
            ++out.cuts_added;
        }
    }
    std::vector<double> history;
    int total_iterations = 0;
    for (int round = 1; round <= settings.max_rounds; ++round) {
        SolveOutcome res = solve_conic(program, settings.solver);
        total_iterations += res.stats.iterations;
        static_cast<SolveOutcome&>(out) = res;
        out.stats.rounds = round;
        out.stats.iterations = total_iterations;
        if (!res.usable()) {
            out.stats.round_objectives = history;
            return out;
        }
        history.push_back(res.objective);
        out.stats.round_objectives = history;
        if (res.objective > settings.objective_cutoff) {
            out.cutoff_reached = true;
            out.status = SolveStatus::inaccurate;
            return out;
        }
        double worst = 0.0;
        for (const auto& c : scalars) {
            const double u = res.x[c.argument], t = res.x[c.bound];
            const double viol = c.phi.value(std::max(u, 0.0)) - t;
            worst = std::max(worst, viol);
            if (viol > settings.cut_tolerance) {
                program.add_nonnegative(supporting_cut(c, std::max(u, 0.0)), "cut");
                ++out.cuts_added;
            }
        }
        out.stats.max_cut_violation = worst;
        if (worst <= settings.cut_tolerance) return out;
    }
    out.status = SolveStatus::inaccurate;
    return out;
}

}  // namespace mcbf::conic

#pragma once

// Reference strategies: max-min optimal, distortion-ignoring beamforming and
// equal-share TDMA with per-slot optimal single-user beamforming. All rates
// are realized rates under the true impairment model.

#include "mcbf/beamforming.hpp"

namespace mcbf {

enum class Strategy { maxmin_optimal, distortion_ignoring, tdma };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::maxmin_optimal: return "maxmin_optimal";
        case Strategy::distortion_ignoring: return "distortion_ignoring";
        case Strategy::tdma: return "tdma";
    }
    return "unknown";
}

struct StrategyResult {
    Strategy label = Strategy::maxmin_optimal;
    Beamformers W;                         // empty for tdma
    std::vector<Beamformers> slot_W;       // tdma: slot (i,j) at index i*K + j, each 1 user x 1 cell
    std::vector<std::vector<double>> slot_rate;  // tdma: rate inside the slot
    std::vector<std::vector<double>> rate; // realized, time-share weighted for tdma
    double sum_rate = 0.0;
    double min_rate = 0.0;
    double used_power = 0.0;               // average over time for tdma
    int unresolved_steps = 0;
};

namespace detail {

inline void fill_rates(StrategyResult& r, std::vector<std::vector<double>> rate) {
    r.rate = std::move(rate);
    r.sum_rate = 0.0;
    r.min_rate = kInf;
    for (const auto& row : r.rate)
        for (double v : row) {
            r.sum_rate += v;
            r.min_rate = std::min(r.min_rate, v);
        }
}

inline bool within_budgets(const Scenario& sc, const Beamformers& W, const ImpairmentModel& model) {
    for (Index i = 0; i < sc.n_cells(); ++i) {
        const auto& Wi = W[static_cast<std::size_t>(i)];
        const VectorXd c2 = tx_distortion_cov(Wi, model);
        for (const auto& pc : sc.constraints(i))
            if (power_usage(Wi, c2, pc.Q, sc.delta()) > pc.q) return false;
    }
    return true;
}

}  // namespace detail

inline StrategyResult maxmin_optimal(const Scenario& sc, const ImpairmentModel& model,
                                     const PerformanceMeasure& measure = PerformanceMeasure::rate(),
                                     const FpoSettings& settings = {}) {
    const FpoResult fpo = solve_maxmin(sc, model, measure, settings);
    StrategyResult r;
    r.label = Strategy::maxmin_optimal;
    r.W = fpo.solution.W;
    r.unresolved_steps = fpo.unresolved_steps;
    const auto ev = evaluate(sc, r.W, model, measure);
    detail::fill_rates(r, ev.rate);
    r.used_power = ev.used_power;
    return r;
}

/// Largest c in [0, 1] with c W inside the true power budgets.
inline double budget_scaling(const Scenario& sc, const Beamformers& W, const ImpairmentModel& model) {
    if (detail::within_budgets(sc, W, model)) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 100 && hi - lo > 1e-15; ++k) {
        const double c = 0.5 * (lo + hi);
        Beamformers V = W;
        for (auto& Vi : V) Vi *= c;
        (detail::within_budgets(sc, V, model) ? lo : hi) = c;
    }
    return lo;
}

/// Max-min beamforming designed for ideal hardware, evaluated under the true
/// model. The design ignores distortion power in the budgets (delta = 0); with
/// rescale the result is shrunk into the true budgets.
inline StrategyResult distortion_ignoring(const Scenario& sc, const ImpairmentModel& model,
                                          const PerformanceMeasure& measure = PerformanceMeasure::rate(),
                                          const FpoSettings& settings = {}, bool rescale = false) {
    const FpoResult fpo = solve_maxmin(sc.with_delta(0.0), ImpairmentModel::ideal(), measure, settings);
    StrategyResult r;
    r.label = Strategy::distortion_ignoring;
    r.W = fpo.solution.W;
    r.unresolved_steps = fpo.unresolved_steps;
    if (rescale) {
        const double c = budget_scaling(sc, r.W, model);
        for (auto& Wi : r.W) Wi *= c;
    }
    const auto ev = evaluate(sc, r.W, model, measure);
    detail::fill_rates(r, ev.rate);
    r.used_power = ev.used_power;
    return r;
}

/// Single-user, single-cell scenario for user (i, j)'s TDMA slot.
inline Scenario tdma_slot_scenario(const Scenario& sc, Index i, Index j) {
    using Channels = std::vector<std::vector<std::vector<VectorXc>>>;
    Channels h{{{sc.h(i, i, j)}}};
    return make_manual_scenario(std::move(h), sc.noise_power(), {sc.constraints(i)}, sc.delta());
}

inline StrategyResult tdma_rate(const Scenario& sc, const ImpairmentModel& model,
                                const PerformanceMeasure& measure = PerformanceMeasure::rate(),
                                const FpoSettings& settings = {}) {
    const Index N = sc.n_cells(), K = sc.users_per_cell();
    const double share = 1.0 / static_cast<double>(sc.n_users());
    StrategyResult r;
    r.label = Strategy::tdma;
    std::vector<std::vector<double>> rate(static_cast<std::size_t>(N), std::vector<double>(static_cast<std::size_t>(K)));
    r.slot_rate = rate;
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < K; ++j) {
            const Scenario slot = tdma_slot_scenario(sc, i, j);
            const FpoResult fpo = solve_fpo(slot, model, measure, user_grid(slot, 0.0), user_grid(slot, 1.0), settings);
            r.unresolved_steps += fpo.unresolved_steps;
            const auto ev = evaluate(slot, fpo.solution.W, model, measure);
            const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
            r.slot_rate[ui][uj] = ev.rate[0][0];
            rate[ui][uj] = share * ev.rate[0][0];
            r.used_power += share * ev.used_power;
            r.slot_W.push_back(fpo.solution.W);
        }
    detail::fill_rates(r, std::move(rate));
    return r;
}

}  // namespace mcbf

#pragma once

// Evaluation of beamforming matrices under the true impairment model:
// SINR with transmit/receive distortion, rates, power usage, EVM and the
// finite-SNR multiplexing gain.

#include "mcbf/impairments.hpp"

namespace mcbf {

/// Strictly increasing performance map g with g(0) = 0 and its inverse.
struct PerformanceMeasure {
    std::function<double(double)> g;
    std::function<double(double)> g_inverse;
    std::string label;

    static PerformanceMeasure rate() {
        return {[](double x) { return std::log2(1.0 + x); }, [](double y) { return std::exp2(y) - 1.0; }, "log2(1+sinr)"};
    }
};

using Beamformers = std::vector<MatrixXc>;  // W[i] is n_tx x K, column j = w_{i,j}

inline Beamformers zero_beamformers(const Scenario& sc) {
    return Beamformers(static_cast<std::size_t>(sc.n_cells()), MatrixXc::Zero(sc.n_tx(), sc.users_per_cell()));
}

inline void check_dimensions(const Scenario& sc, const Beamformers& W) {
    if (static_cast<Index>(W.size()) != sc.n_cells()) throw InvalidInput("one beamforming matrix per cell required");
    for (const auto& Wi : W)
        if (Wi.rows() != sc.n_tx() || Wi.cols() != sc.users_per_cell())
            throw InvalidInput("beamforming matrix must be n_tx x users_per_cell");
}

/// Denominator terms of the SINR, reported separately.
struct SinrTerms {
    double signal = 0.0;
    double intra_cell = 0.0;  // sum_{l != j} |h_{i,i,j}^H w_{i,l}|^2
    double inter_cell = 0.0;  // sum_{m != i} ||h_{m,i,j}^H W_m||^2
    double tx_distortion = 0.0;  // sum_m h^H C_m h
    double rx_variance = 0.0;    // sigma^2 + nu(.)^2

    double denominator() const { return intra_cell + inter_cell + tx_distortion + rx_variance; }
    double sinr() const { return signal / denominator(); }
};

inline SinrTerms sinr_terms(const Scenario& sc, const Beamformers& W, const ImpairmentModel& model, Index i, Index j) {
    SinrTerms t;
    const auto ui = static_cast<std::size_t>(i);
    const VectorXc& hii = sc.h(i, i, j);
    for (Index l = 0; l < sc.users_per_cell(); ++l) {
        const double v = std::norm(hii.dot(W[ui].col(l)));
        (l == j ? t.signal : t.intra_cell) += v;
    }
    for (Index m = 0; m < sc.n_cells(); ++m) {
        const auto um = static_cast<std::size_t>(m);
        const VectorXc& h = sc.h(m, i, j);
        if (m != i) t.inter_cell += (h.adjoint() * W[um]).squaredNorm();
        const VectorXd c2 = tx_distortion_cov(W[um], model);
        t.tx_distortion += (h.cwiseAbs2().array() * c2.array()).sum();
    }
    t.rx_variance = rx_distortion_var(sc, W, i, j, model);
    return t;
}

inline double sinr(const Scenario& sc, const Beamformers& W, const ImpairmentModel& model, Index i, Index j) {
    return sinr_terms(sc, W, model, i, j).sinr();
}

/// tr(W^H Q W) + delta tr(Q C) for one constraint.
inline double power_usage(const MatrixXc& Wi, const VectorXd& c2, const MatrixXc& Q, double delta) {
    const double sig = std::real((Wi.adjoint() * Q * Wi).trace());
    double dist = 0.0;
    for (Index n = 0; n < Q.rows(); ++n) dist += std::real(Q(n, n)) * c2[n];
    return sig + delta * dist;
}

struct EvaluationReport {
    std::vector<std::vector<double>> sinr;  // [i][j]
    std::vector<std::vector<double>> rate;
    double min_rate = 0.0;
    double sum_rate = 0.0;
    std::vector<std::vector<double>> power_usage;  // [i][k]
    std::vector<std::vector<bool>> power_feasible;
    std::vector<std::vector<double>> evm_percent;  // [m][n], NaN where the antenna is silent
    double used_power = 0.0;                       // sum_{i,j} ||w_{i,j}||^2
};

inline EvaluationReport evaluate(const Scenario& sc, const Beamformers& W, const ImpairmentModel& model,
                                 const PerformanceMeasure& measure = PerformanceMeasure::rate(),
                                 double feasibility_tol = 1e-9) {
    check_dimensions(sc, W);
    EvaluationReport r;
    r.min_rate = kInf;
    for (Index i = 0; i < sc.n_cells(); ++i) {
        std::vector<double> s, g;
        for (Index j = 0; j < sc.users_per_cell(); ++j) {
            const double v = sinr(sc, W, model, i, j);
            s.push_back(v);
            g.push_back(measure.g(v));
            r.min_rate = std::min(r.min_rate, g.back());
            r.sum_rate += g.back();
        }
        r.sinr.push_back(std::move(s));
        r.rate.push_back(std::move(g));
    }
    for (Index i = 0; i < sc.n_cells(); ++i) {
        const auto& Wi = W[static_cast<std::size_t>(i)];
        const VectorXd c2 = tx_distortion_cov(Wi, model);
        std::vector<double> use;
        std::vector<bool> ok;
        for (const auto& pc : sc.constraints(i)) {
            use.push_back(power_usage(Wi, c2, pc.Q, sc.delta()));
            ok.push_back(use.back() <= pc.q * (1.0 + feasibility_tol));
        }
        r.power_usage.push_back(std::move(use));
        r.power_feasible.push_back(std::move(ok));
        std::vector<double> evm;
        for (Index n = 0; n < sc.n_tx(); ++n)
            evm.push_back(row_magnitude(Wi, n) > 0.0 ? evm_percent(evm_tx(Wi, n, model))
                                                     : std::numeric_limits<double>::quiet_NaN());
        r.evm_percent.push_back(std::move(evm));
        r.used_power += Wi.squaredNorm();
    }
    return r;
}

/// Average coordinated sum rate over average TDMA rate.
inline double finite_snr_mux_gain(double coordinated_avg_sum_rate, double tdma_avg_rate) {
    if (!(tdma_avg_rate > 0.0)) throw InvalidInput("multiplexing gain undefined for zero TDMA rate");
    return coordinated_avg_sum_rate / tdma_avg_rate;
}

}  // namespace mcbf

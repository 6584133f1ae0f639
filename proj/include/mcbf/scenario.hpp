#pragma once

// System instances: channels, noise, power-constraint sets and delta.
//
// Channels are indexed h(m, i, j): transmitter (base station) m to user j of
// cell i. All link gains are folded into the channel, units sqrt(mW) per unit
// symbol amplitude. Powers are linear mW throughout.

#include "mcbf/core.hpp"

#include <random>
#include <sstream>

namespace mcbf {

struct PowerConstraint {
    MatrixXc Q;  // Hermitian PSD, n_tx x n_tx
    double q;    // mW
};

using CellConstraints = std::vector<PowerConstraint>;

class Scenario {
public:
    Scenario() = default;

    /// channels[m][i][j] is h_{m,i,j}.
    Scenario(std::vector<std::vector<std::vector<VectorXc>>> channels, double noise_power,
             std::vector<CellConstraints> constraints, double delta, double psd_tol = 1e-10)
        : channels_(std::move(channels)), noise_(noise_power), constraints_(std::move(constraints)), delta_(delta) {
        validate(psd_tol);
    }

    Index n_cells() const { return static_cast<Index>(channels_.size()); }
    Index users_per_cell() const { return channels_.empty() ? 0 : static_cast<Index>(channels_[0][0].size()); }
    Index n_tx() const { return n_tx_; }
    Index n_users() const { return n_cells() * users_per_cell(); }

    const VectorXc& h(Index m, Index i, Index j) const {
        return channels_[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    double noise_power() const { return noise_; }
    double delta() const { return delta_; }
    const CellConstraints& constraints(Index i) const { return constraints_[static_cast<std::size_t>(i)]; }
    const std::vector<CellConstraints>& all_constraints() const { return constraints_; }
    const auto& channels() const { return channels_; }

    /// Copy with different power constraints (same channels, noise, delta).
    Scenario with_constraints(std::vector<CellConstraints> constraints) const {
        return Scenario(channels_, noise_, std::move(constraints), delta_);
    }
    Scenario with_delta(double delta) const { return Scenario(channels_, noise_, constraints_, delta); }
    /// Copy with every q_{i,k} multiplied by `factor`.
    Scenario with_scaled_budgets(double factor) const {
        auto c = constraints_;
        for (auto& cell : c)
            for (auto& pc : cell) pc.q *= factor;
        return with_constraints(std::move(c));
    }

    /// Single-user power cap of cell i: sum_k q_{i,k} / lambda_min(sum_k Q_{i,k}).
    double power_cap(Index i) const {
        const auto& cell = constraints(i);
        MatrixXc S = MatrixXc::Zero(n_tx_, n_tx_);
        double q = 0.0;
        for (const auto& pc : cell) {
            S += pc.Q;
            q += pc.q;
        }
        return q / min_eigenvalue(S);
    }

private:
    void validate(double tol) {
        const std::size_t N = channels_.size();
        if (N == 0) throw InvalidInput("scenario needs at least one cell");
        if (channels_[0].size() != N) throw InvalidInput("channels[0] must list every cell");
        if (channels_[0][0].empty()) throw InvalidInput("scenario needs at least one user per cell");
        const std::size_t K = channels_[0][0].size();
        n_tx_ = channels_[0][0][0].size();
        if (n_tx_ < 1) throw InvalidInput("scenario needs at least one transmit antenna");
        for (std::size_t m = 0; m < N; ++m) {
            if (channels_[m].size() != N)
                throw InvalidInput("dimension mismatch: transmitter " + std::to_string(m) + " lists " +
                                   std::to_string(channels_[m].size()) + " cells, expected " + std::to_string(N));
            for (std::size_t i = 0; i < N; ++i) {
                if (channels_[m][i].size() != K)
                    throw InvalidInput("dimension mismatch: h[" + std::to_string(m) + "][" + std::to_string(i) +
                                       "] lists " + std::to_string(channels_[m][i].size()) + " users, expected " +
                                       std::to_string(K));
                for (std::size_t j = 0; j < K; ++j) {
                    const auto& v = channels_[m][i][j];
                    if (v.size() != n_tx_)
                        throw InvalidInput("dimension mismatch: h[" + std::to_string(m) + "][" + std::to_string(i) +
                                           "][" + std::to_string(j) + "] has length " + std::to_string(v.size()) +
                                           ", expected " + std::to_string(n_tx_));
                    if (!v.allFinite()) throw InvalidInput("non-finite channel entry");
                }
            }
        }
        if (!(noise_ > 0.0) || !std::isfinite(noise_)) throw InvalidInput("noise power must be positive");
        if (!(delta_ >= 0.0 && delta_ <= 1.0)) throw InvalidInput("delta must lie in [0, 1]");
        if (constraints_.size() != N)
            throw InvalidInput("dimension mismatch: power constraints given for " + std::to_string(constraints_.size()) +
                               " cells, expected " + std::to_string(N));
        for (std::size_t i = 0; i < N; ++i) {
            const auto& cell = constraints_[i];
            if (cell.empty()) throw InvalidInput("cell " + std::to_string(i) + " has no power constraint");
            MatrixXc S = MatrixXc::Zero(n_tx_, n_tx_);
            for (std::size_t k = 0; k < cell.size(); ++k) {
                const auto& pc = cell[k];
                const std::string where = "Q[" + std::to_string(i) + "][" + std::to_string(k) + "]";
                if (pc.Q.rows() != n_tx_ || pc.Q.cols() != n_tx_)
                    throw InvalidInput("dimension mismatch: " + where + " is not " + std::to_string(n_tx_) + "x" +
                                       std::to_string(n_tx_));
                const double scale = std::max(1.0, pc.Q.norm());
                if ((pc.Q - pc.Q.adjoint()).norm() > tol * scale) throw InvalidInput(where + " is not Hermitian");
                if (min_eigenvalue(pc.Q) < -tol * scale) throw InvalidInput(where + " is not positive semi-definite");
                if (!(pc.q > 0.0)) throw InvalidInput("q[" + std::to_string(i) + "][" + std::to_string(k) + "] must be positive");
                S += pc.Q;
            }
            if (!(min_eigenvalue(S) > tol * std::max(1.0, S.norm())))
                throw InvalidInput("sum_k Q not positive definite for cell " + std::to_string(i));
        }
    }

    std::vector<std::vector<std::vector<VectorXc>>> channels_;
    double noise_ = 1.0;
    std::vector<CellConstraints> constraints_;
    double delta_ = 0.0;
    Index n_tx_ = 0;
};

/// Validated scenario from explicit data (fixtures and oracles).
inline Scenario make_manual_scenario(std::vector<std::vector<std::vector<VectorXc>>> channels, double noise_power,
                                     std::vector<CellConstraints> constraints, double delta) {
    return Scenario(std::move(channels), noise_power, std::move(constraints), delta);
}

/// One constraint per cell: Q = I, q = 10^(dBm/10) mW.
inline std::vector<CellConstraints> per_array_constraints(double power_dbm, Index n_cells, Index n_tx) {
    if (!std::isfinite(power_dbm)) throw InvalidInput("power must be finite");
    std::vector<CellConstraints> out(static_cast<std::size_t>(n_cells));
    for (auto& cell : out) cell.push_back({MatrixXc::Identity(n_tx, n_tx), dbm_to_mw(power_dbm)});
    return out;
}

/// N_t constraints per cell: Q = selector of antenna k, q = power_mw.
inline std::vector<CellConstraints> per_antenna_constraints(double power_mw, Index n_cells, Index n_tx) {
    if (!(power_mw > 0.0)) throw InvalidInput("per-antenna power must be positive");
    std::vector<CellConstraints> out(static_cast<std::size_t>(n_cells));
    for (auto& cell : out)
        for (Index k = 0; k < n_tx; ++k) {
            MatrixXc T = MatrixXc::Zero(n_tx, n_tx);
            T(k, k) = 1.0;
            cell.push_back({T, power_mw});
        }
    return out;
}

/// Power per subcarrier when `total_dbm` is spread uniformly.
inline double per_subcarrier_dbm(double total_dbm, int subcarriers) {
    return total_dbm - 10.0 * std::log10(static_cast<double>(subcarriers));
}

// ---------------------------------------------------------------------------
// Random drops: two base stations in opposite corners of a square.

struct DropConfig {
    double square_diagonal_m = 500.0;
    double min_bs_distance_m = 35.0;
    double shadowing_std_db = 8.0;
    double penetration_loss_db = 20.0;
    double pathloss_intercept_db = 128.1;
    double pathloss_slope_db = 37.6;
    double antenna_gain_max_db = 14.0;
    double antenna_gain_curvature_db = 8.0;
    double rx_gain_db = 0.0;
    double noise_dbm = -127.0;
    double power_dbm = 18.2;
    double delta = 1.0;
    std::uint64_t rng_seed = 0;
    int max_redraws = 10000;

    void validate() const {
        if (!(square_diagonal_m > 0.0) || !(min_bs_distance_m > 0.0))
            throw InvalidInput("drop geometry lengths must be positive");
        if (!(min_bs_distance_m < square_diagonal_m))
            throw InvalidInput("minimum base-station distance must be below the square diagonal");
        if (!(shadowing_std_db >= 0.0)) throw InvalidInput("shadowing std must be nonnegative");
        if (!(delta >= 0.0 && delta <= 1.0)) throw InvalidInput("delta must lie in [0, 1]");
    }
};

/// Path loss in dB at distance d (km).
inline double path_loss_db(const DropConfig& c, double d_km) {
    return c.pathloss_intercept_db + c.pathloss_slope_db * std::log10(d_km);
}

/// Transmit antenna pattern in dB; clamped at the +-pi/4 edge value.
inline double tx_antenna_gain_db(const DropConfig& c, double theta) {
    const double th = std::min(std::abs(theta), kPi / 4.0);
    return c.antenna_gain_max_db - c.antenna_gain_curvature_db * th * th;
}

struct Point {
    double x, y;
};

struct DropGeometry {
    std::vector<Point> bs;                    // one per cell
    std::vector<std::vector<Point>> users;    // users[i][j]
    std::vector<std::vector<std::vector<double>>> gain;  // gain[m][i][j], linear
};

struct Drop {
    Scenario scenario;
    DropGeometry geometry;
};

/// Random two-cell drop. BS 0 sits at (0,0), BS 1 at (L,L) with L the side
/// length; both boresights point along the diagonal toward the centre. Each
/// cell's users are uniform in the half-square on its side of the
/// anti-diagonal, at least min_bs_distance_m from their own base station.
inline Drop drop_users(const DropConfig& config, Index users_per_cell, Index n_tx, std::uint64_t seed) {
    config.validate();
    if (users_per_cell < 1 || n_tx < 1) throw InvalidInput("drop dimensions must be positive");
    constexpr Index N = 2;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double L = config.square_diagonal_m / std::sqrt(2.0);
    DropGeometry geo;
    geo.bs = {{0.0, 0.0}, {L, L}};
    const double boresight[2] = {kPi / 4.0, -3.0 * kPi / 4.0};

    geo.users.resize(N);
    for (Index i = 0; i < N; ++i) {
        for (Index j = 0; j < users_per_cell; ++j) {
            int tries = 0;
            for (;;) {
                if (++tries > config.max_redraws) throw SolverError("user placement exceeded the redraw cap");
                Point p{unif(rng) * L, unif(rng) * L};
                const bool near_bs0 = p.x + p.y < L;
                if (near_bs0 != (i == 0)) {
                    // reflect through the anti-diagonal into the right half
                    p = {L - p.y, L - p.x};
                }
                const Point& b = geo.bs[static_cast<std::size_t>(i)];
                if (std::hypot(p.x - b.x, p.y - b.y) < config.min_bs_distance_m) continue;
                geo.users[static_cast<std::size_t>(i)].push_back(p);
                break;
            }
        }
    }

    std::vector<std::vector<std::vector<VectorXc>>> h(N, std::vector<std::vector<VectorXc>>(N));
    geo.gain.assign(N, std::vector<std::vector<double>>(N));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (Index m = 0; m < N; ++m) {
        const Point& b = geo.bs[static_cast<std::size_t>(m)];
        for (Index i = 0; i < N; ++i) {
            for (Index j = 0; j < users_per_cell; ++j) {
                const Point& u = geo.users[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                const double d_km = std::max(std::hypot(u.x - b.x, u.y - b.y), 1.0) / 1000.0;
                double theta = std::atan2(u.y - b.y, u.x - b.x) - boresight[m];
                theta = std::remainder(theta, 2.0 * kPi);
                const double shadow = config.shadowing_std_db * normal(rng);
                const double g_db = tx_antenna_gain_db(config, theta) + config.rx_gain_db - path_loss_db(config, d_km) -
                                    config.penetration_loss_db - shadow;
                const double g = db_to_linear(g_db);
                geo.gain[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)].push_back(g);
                VectorXc e(n_tx);
                for (Index n = 0; n < n_tx; ++n) e[n] = cplx(normal(rng), normal(rng)) * inv_sqrt2;
                h[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)].push_back(std::sqrt(g) * e);
            }
        }
    }
    Scenario sc(std::move(h), dbm_to_mw(config.noise_dbm), per_array_constraints(config.power_dbm, N, n_tx),
                config.delta);
    return {std::move(sc), std::move(geo)};
}

}  // namespace mcbf

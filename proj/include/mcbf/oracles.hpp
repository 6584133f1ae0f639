#pragma once

// Independent reference computations used by the test and acceptance suites
// and by the `oracle` CLI subcommand. Nothing here calls the conic solver or
// the beamforming programs; each value comes from a closed form, a brute-force
// scan, or a problem constructed with a known optimum.

#include "mcbf/conic/program.hpp"

#include <functional>
#include <random>

namespace mcbf::oracles {

// ---------------------------------------------------------------------------
// Random SOCPs with a planted optimum.
//
// A primal point x*, a dual point (y*, z*) and complementary slacks s* are
// drawn first; the data (b, h, c) are then chosen so that the pair satisfies
// the KKT conditions, making c^T x* the exact optimal value.

struct PlantedSocp {
    conic::ConicProgram program;
    double optimal_value;
    VectorXd x_star;
};

inline PlantedSocp planted_socp(std::mt19937_64& rng, Index n, Index n_eq, Index n_lp,
                                const std::vector<Index>& soc_sizes) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.5, 2.0);
    auto randn = [&](Index r, Index c) {
        MatrixXd M(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) M(i, j) = N(rng);
        return M;
    };
    Index m = n_lp;
    for (auto q : soc_sizes) m += q;
    MatrixXd A = randn(n_eq, n), G = randn(m, n);
    VectorXd x = randn(n, 1), y = randn(n_eq, 1);
    VectorXd s = VectorXd::Zero(m), z = VectorXd::Zero(m);
    std::bernoulli_distribution coin(0.5);
    for (Index k = 0; k < n_lp; ++k) (coin(rng) ? s[k] : z[k]) = U(rng);
    Index off = n_lp;
    for (auto q : soc_sizes) {
        const int mode = static_cast<int>(rng() % 3);
        VectorXd u = randn(q - 1, 1);
        u.normalize();
        if (mode == 0) {  // both on the boundary, opposite rays
            const double a = U(rng), b = U(rng);
            s[off] = a;
            s.segment(off + 1, q - 1) = a * u;
            z[off] = b;
            z.segment(off + 1, q - 1) = -b * u;
        } else if (mode == 1) {  // s interior, z = 0
            s[off] = 2.0 * U(rng);
            s.segment(off + 1, q - 1) = 0.5 * u;
        } else {  // z interior, s = 0
            z[off] = 2.0 * U(rng);
            z.segment(off + 1, q - 1) = 0.5 * u;
        }
        off += q;
    }
    const VectorXd b = A * x;
    const VectorXd h = G * x + s;
    const VectorXd c = -(A.transpose() * y + G.transpose() * z);

    PlantedSocp out{conic::ConicProgram{}, c.dot(x), x};
    auto& prog = out.program;
    auto v = prog.add_variable("x", n);
    auto row_of = [&](const MatrixXd& M, Index i, double rhs) {
        // s_i = h_i - G_i x  ->  affine row  -G_i x + h_i
        conic::AffineRow r(rhs);
        for (Index j = 0; j < n; ++j) r.add(v[j], -M(i, j));
        return r;
    };
    for (Index i = 0; i < n_eq; ++i) {
        conic::AffineRow r(-b[i]);
        for (Index j = 0; j < n; ++j) r.add(v[j], A(i, j));
        prog.add_equality(r);
    }
    for (Index i = 0; i < n_lp; ++i) prog.add_nonnegative(row_of(G, i, h[i]));
    off = n_lp;
    for (auto q : soc_sizes) {
        std::vector<conic::AffineRow> tail;
        for (Index k = 1; k < q; ++k) tail.push_back(row_of(G, off + k, h[off + k]));
        prog.add_soc(row_of(G, off, h[off]), std::move(tail));
        off += q;
    }
    conic::AffineRow obj;
    for (Index j = 0; j < n; ++j) obj.add(v[j], c[j]);
    prog.set_objective(obj);
    return out;
}

/// The fixed 20-problem cross-check suite (dimensions <= 50).
inline std::vector<PlantedSocp> socp_suite(std::uint64_t seed = 20240601) {
    std::mt19937_64 rng(seed);
    std::vector<PlantedSocp> suite;
    for (int k = 0; k < 20; ++k) {
        const Index n = 3 + static_cast<Index>(rng() % 30);
        const Index n_eq = static_cast<Index>(rng() % std::max<Index>(1, n / 3));
        const Index n_lp = static_cast<Index>(rng() % 8);
        std::vector<Index> socs;
        Index total = n_lp;
        const Index n_soc = 1 + static_cast<Index>(rng() % 5);
        for (Index i = 0; i < n_soc; ++i) {
            const Index q = 2 + static_cast<Index>(rng() % 8);
            if (total + q > 50) break;
            socs.push_back(q);
            total += q;
        }
        suite.push_back(planted_socp(rng, n, n_eq, n_lp, socs));
    }
    return suite;
}

// ---------------------------------------------------------------------------
// Scalar (N = K = N_t = 1) closed forms with linear impairments.
//
// SINR(p) = G p / (G (k1^2 + k3^2) p + sigma2), power usage p (1 + delta k1^2).

struct ScalarLink {
    double gain;    // |h|^2
    double sigma2;  // noise power
    double q;       // power budget
    double k1;      // kappa1 / 100
    double k3;      // kappa3 / 100
    double delta;
};

inline double scalar_sinr(const ScalarLink& s, double p) {
    return s.gain * p / (s.gain * (s.k1 * s.k1 + s.k3 * s.k3) * p + s.sigma2);
}

/// Supremum of the SINR over all powers.
inline double scalar_sinr_ceiling(const ScalarLink& s) {
    const double d = s.k1 * s.k1 + s.k3 * s.k3;
    return d > 0.0 ? 1.0 / d : kInf;
}

/// Minimal budget scaling beta for SINR target `target`; +inf if unreachable.
inline double scalar_qos_beta(const ScalarLink& s, double target) {
    if (target <= 0.0) return 0.0;
    const double d = s.k1 * s.k1 + s.k3 * s.k3;
    if (target * d >= 1.0) return kInf;
    const double p = target * s.sigma2 / (s.gain * (1.0 - target * d));
    return p * (1.0 + s.delta * s.k1 * s.k1) / s.q;
}

/// Max-min (single user) rate: full power is optimal as SINR(p) increases.
inline double scalar_fpo_rate(const ScalarLink& s) {
    const double p = s.q / (1.0 + s.delta * s.k1 * s.k1);
    return std::log2(1.0 + scalar_sinr(s, p));
}

// ---------------------------------------------------------------------------
// Two cells, one single-antenna user each: brute-force max-min over a power
// grid. `eta` and `nu` map magnitudes (sqrt mW) to distortion magnitudes.

struct TwoCellScalar {
    double g[2][2];  // g[m][i] = |h_{m,i,1}|^2, transmitter m -> user of cell i
    double sigma2;
    double q[2];
    double delta;
    std::function<double(double)> eta;
    std::function<double(double)> nu;
};

inline double two_cell_sinr(const TwoCellScalar& s, int i, double p0, double p1) {
    const double p[2] = {p0, p1};
    const int o = 1 - i;
    const double sig = s.g[i][i] * p[i];
    double rx_mag2 = s.g[0][i] * p[0] + s.g[1][i] * p[1];
    const double nu = s.nu(std::sqrt(rx_mag2));
    double den = s.g[o][i] * p[o] + s.sigma2 + nu * nu;
    for (int m = 0; m < 2; ++m) {
        const double e = s.eta(std::sqrt(p[m]));
        den += s.g[m][i] * e * e;
    }
    return sig / den;
}

/// Largest p with p + delta eta(sqrt p)^2 <= q (bisection on a monotone map).
inline double two_cell_power_cap(const TwoCellScalar& s, int m) {
    auto use = [&](double p) {
        const double e = s.eta(std::sqrt(p));
        return p + s.delta * e * e;
    };
    double lo = 0.0, hi = s.q[m];
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (use(mid) <= s.q[m] ? lo : hi) = mid;
    }
    return lo;
}

/// max over a points x points grid of min_i log2(1 + SINR_i), returned as
/// the fairness value min_i rate_i / alpha_i with alpha_i = 1/2.
inline double two_cell_grid_maxmin(const TwoCellScalar& s, int points = 2000) {
    const double c0 = two_cell_power_cap(s, 0), c1 = two_cell_power_cap(s, 1);
    double best = 0.0;
    for (int a = 0; a <= points; ++a) {
        const double p0 = c0 * a / points;
        for (int b = 0; b <= points; ++b) {
            const double p1 = c1 * b / points;
            const double r = std::min(std::log2(1.0 + two_cell_sinr(s, 0, p0, p1)),
                                      std::log2(1.0 + two_cell_sinr(s, 1, p0, p1)));
            best = std::max(best, r);
        }
    }
    return 2.0 * best;
}

// ---------------------------------------------------------------------------
// Ideal-hardware, two scalar cells: QoS beta on a power grid.
inline double two_cell_grid_beta(const TwoCellScalar& s, double t0, double t1, int points = 2000,
                                 double beta_max = 4.0) {
    double best = kInf;
    for (int a = 0; a <= points; ++a) {
        const double p0 = beta_max * s.q[0] * a / points;
        for (int b = 0; b <= points; ++b) {
            const double p1 = beta_max * s.q[1] * b / points;
            if (two_cell_sinr(s, 0, p0, p1) >= t0 && two_cell_sinr(s, 1, p0, p1) >= t1)
                best = std::min(best, std::max(p0 / s.q[0], p1 / s.q[1]));
        }
    }
    return best;
}

/// Dense scan of the single-user fairness value over a power grid, for any
/// impairment pair: max over p of log2(1 + SINR(p)) with p + delta eta^2 <= q.
inline double scalar_dense_scan(double gain, double sigma2, double q, double delta,
                                const std::function<double(double)>& eta,
                                const std::function<double(double)>& nu, int points = 200000) {
    TwoCellScalar s{{{gain, 0.0}, {0.0, 0.0}}, sigma2, {q, q}, delta, eta, nu};
    const double cap = two_cell_power_cap(s, 0);
    double best = 0.0;
    for (int a = 0; a <= points; ++a) {
        const double p = cap * a / points;
        const double e = eta(std::sqrt(p));
        const double v = nu(std::sqrt(gain * p));
        const double sinr = gain * p / (gain * e * e + sigma2 + v * v);
        best = std::max(best, std::log2(1.0 + sinr));
    }
    return best;
}

}  // namespace mcbf::oracles

#pragma once

// Dense primal-dual interior-point solver for linear/second-order cone
// programs. Homogeneous self-dual embedding, Nesterov-Todd scaling,
// Mehrotra predictor-corrector. Standard form:
//
//   minimize c^T x  s.t.  A x = b,  G x + s = h,  s in K
//
// with K a product of a nonnegative orthant and second-order cones.

#include "mcbf/conic/program.hpp"

#include <algorithm>
#include <optional>
#include <memory>

namespace mcbf::conic {

enum class SolveStatus { optimal, optimal_reduced, primal_infeasible, dual_infeasible, inaccurate, iteration_limit };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::optimal_reduced: return "optimal_reduced";
        case SolveStatus::primal_infeasible: return "primal_infeasible";
        case SolveStatus::dual_infeasible: return "dual_infeasible";
        case SolveStatus::inaccurate: return "inaccurate";
        case SolveStatus::iteration_limit: return "iteration_limit";
    }
    return "unknown";
}

struct SolveStats {
    int iterations = 0;
    double primal_residual = kInf;
    double dual_residual = kInf;
    double gap = kInf;
    int rounds = 1;                        // outer-approximation rounds
    double max_cut_violation = 0.0;        // outer approximation only
    std::vector<double> round_objectives;  // outer approximation only
};

struct SolveOutcome {
    SolveStatus status = SolveStatus::inaccurate;
    VectorXd x;                  // primal values, indexed by variable
    // One per constraint, sized like its rows. Cone duals z lie in the dual cone
    // and equality duals y satisfy c = sum z_k a_k - sum y_e a_e over the row
    // coefficient vectors a.
    std::vector<VectorXd> duals;
    double objective = kInf;
    double tolerance = 0.0;
    SolveStats stats;

    bool optimal() const { return status == SolveStatus::optimal; }
    // optimal, or the best iterate of a stalled run meets the reduced tolerance
    bool usable() const { return status == SolveStatus::optimal || status == SolveStatus::optimal_reduced; }
    double value(Index var) const { return x[var]; }
    VectorXd value(const VarBlock& b) const { return x.segment(b.offset, b.size); }
};

struct SolverSettings {
    double tolerance = 1e-8;
    double reduced_tolerance = 1e-6;
    int max_iterations = 120;
    int stall_iterations = 8;
    int refinement_steps = 3;
    int equilibration_passes = 12;
};

namespace detail {

struct ConeLayout {
    Index lp = 0;                  // leading nonnegative rows
    std::vector<Index> soc_sizes;  // following SOC blocks
    Index dim() const {
        Index d = lp;
        for (auto q : soc_sizes) d += q;
        return d;
    }
    Index degree() const { return lp + static_cast<Index>(soc_sizes.size()); }
};

inline double soc_residual(const double* v, Index n) {
    double t = 0.0;
    for (Index k = 1; k < n; ++k) t += v[k] * v[k];
    return v[0] - std::sqrt(t);
}

// Smallest "eigenvalue" of v in the cone's Jordan algebra.
// x0^2 - ||x1||^2 without cancellation near the cone boundary.
inline double jnorm2(double x0, double x1norm) { return (x0 - x1norm) * (x0 + x1norm); }

inline double min_cone_value(const ConeLayout& K, const VectorXd& v) {
    double m = kInf;
    for (Index k = 0; k < K.lp; ++k) m = std::min(m, v[k]);
    Index off = K.lp;
    for (auto q : K.soc_sizes) {
        m = std::min(m, soc_residual(v.data() + off, q));
        off += q;
    }
    return m;
}

inline void add_identity(const ConeLayout& K, VectorXd& v, double a) {
    for (Index k = 0; k < K.lp; ++k) v[k] += a;
    Index off = K.lp;
    for (auto q : K.soc_sizes) {
        v[off] += a;
        off += q;
    }
}

// Largest alpha with v + alpha*d in K (v interior).
inline double max_step(const ConeLayout& K, const VectorXd& v, const VectorXd& d) {
    double alpha = kInf;
    for (Index k = 0; k < K.lp; ++k)
        if (d[k] < 0.0) alpha = std::min(alpha, -v[k] / d[k]);
    Index off = K.lp;
    for (auto q : K.soc_sizes) {
        const double v0 = v[off], d0 = d[off];
        double vv = 0.0, vd = 0.0, dd = 0.0;
        for (Index k = 1; k < q; ++k) {
            vv += v[off + k] * v[off + k];
            vd += v[off + k] * d[off + k];
            dd += d[off + k] * d[off + k];
        }
        const double a = d0 * d0 - dd;
        const double b = v0 * d0 - vd;
        const double c = std::max(jnorm2(v0, std::sqrt(vv)), 0.0);
        double af = kInf;
        if (std::abs(a) <= 1e-14 * (d0 * d0 + dd)) {
            if (b < 0.0) af = -c / (2.0 * b);
        } else {
            const double disc = b * b - a * c;
            if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                const double qq = -(b + (b >= 0.0 ? sq : -sq));
                const double r1 = qq / a;
                const double r2 = qq != 0.0 ? c / qq : kInf;
                for (double r : {r1, r2})
                    if (r > 0.0) af = std::min(af, r);
                if (c == 0.0 && b < 0.0) af = 0.0;
            }
        }
        if (d0 < 0.0) af = std::min(af, -v0 / d0);
        alpha = std::min(alpha, af);
        off += q;
    }
    return alpha;
}

// Jordan product u o v.
inline VectorXd cone_product(const ConeLayout& K, const VectorXd& u, const VectorXd& v) {
    VectorXd r(u.size());
    for (Index k = 0; k < K.lp; ++k) r[k] = u[k] * v[k];
    Index off = K.lp;
    for (auto q : K.soc_sizes) {
        r[off] = u.segment(off, q).dot(v.segment(off, q));
        for (Index k = 1; k < q; ++k) r[off + k] = u[off] * v[off + k] + v[off] * u[off + k];
        off += q;
    }
    return r;
}

// Solves u o x = v for x.
inline VectorXd cone_division(const ConeLayout& K, const VectorXd& u, const VectorXd& v) {
    VectorXd x(u.size());
    for (Index k = 0; k < K.lp; ++k) x[k] = v[k] / u[k];
    Index off = K.lp;
    for (auto q : K.soc_sizes) {
        const double u0 = u[off], v0 = v[off];
        double uu = 0.0, uv = 0.0;
        for (Index k = 1; k < q; ++k) {
            uu += u[off + k] * u[off + k];
            uv += u[off + k] * v[off + k];
        }
        const double det = jnorm2(u0, std::sqrt(uu));
        const double x0 = (u0 * v0 - uv) / det;
        x[off] = x0;
        for (Index k = 1; k < q; ++k) x[off + k] = (v[off + k] - x0 * u[off + k]) / u0;
        off += q;
    }
    return x;
}

// Nesterov-Todd scaling W (symmetric) with W z = W^{-1} s = lambda.
class NtScaling {
public:
    NtScaling(const ConeLayout& K, const VectorXd& s, const VectorXd& z) : K_(K) {
        d_.resize(K.lp);
        for (Index k = 0; k < K.lp; ++k) d_[k] = std::sqrt(s[k] / z[k]);
        Index off = K.lp;
        for (auto q : K.soc_sizes) {
            const double sn = std::sqrt(std::max(jnorm2(s[off], s.segment(off + 1, q - 1).norm()), 1e-300));
            const double zn = std::sqrt(std::max(jnorm2(z[off], z.segment(off + 1, q - 1).norm()), 1e-300));
            VectorXd sb = s.segment(off, q) / sn;
            VectorXd zb = z.segment(off, q) / zn;
            const double gamma = std::sqrt(std::max((1.0 + sb.dot(zb)) / 2.0, 1e-300));
            VectorXd w(q);
            w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
            w.tail(q - 1) = (sb.tail(q - 1) - zb.tail(q - 1)) / (2.0 * gamma);
            // Re-normalize so w^T J w = 1 exactly.
            const double wn = std::sqrt(std::max(jnorm2(w[0], w.tail(q - 1).norm()), 1e-300));
            w /= wn;
            socw_.push_back(std::move(w));
            beta_.push_back(std::sqrt(sn / zn));
            off += q;
        }
    }

    VectorXd apply(const VectorXd& x) const { return apply_impl(x, false); }
    VectorXd apply_inv(const VectorXd& x) const { return apply_impl(x, true); }

    MatrixXd apply_inv_rows(const MatrixXd& G) const {
        MatrixXd R(G.rows(), G.cols());
        for (Index k = 0; k < K_.lp; ++k) R.row(k) = G.row(k) / d_[k];
        Index off = K_.lp;
        for (std::size_t b = 0; b < socw_.size(); ++b) {
            const Index q = K_.soc_sizes[b];
            const VectorXd& w = socw_[b];
            const double inv = 1.0 / beta_[b];
            auto Gb = G.middleRows(off, q);
            // w1^T x1 for every column
            Eigen::RowVectorXd w1x1 = w.tail(q - 1).transpose() * Gb.bottomRows(q - 1);
            Eigen::RowVectorXd x0 = Gb.row(0);
            R.row(off) = inv * (w[0] * x0 - w1x1);
            Eigen::RowVectorXd coef = (-x0 + w1x1 / (1.0 + w[0])) * inv;
            R.middleRows(off + 1, q - 1) = inv * Gb.bottomRows(q - 1) + w.tail(q - 1) * coef;
            off += q;
        }
        return R;
    }

private:
    VectorXd apply_impl(const VectorXd& x, bool inverse) const {
        VectorXd y(x.size());
        for (Index k = 0; k < K_.lp; ++k) y[k] = inverse ? x[k] / d_[k] : x[k] * d_[k];
        Index off = K_.lp;
        for (std::size_t b = 0; b < socw_.size(); ++b) {
            const Index q = K_.soc_sizes[b];
            const VectorXd& w = socw_[b];
            const double sgn = inverse ? -1.0 : 1.0;
            const double sc = inverse ? 1.0 / beta_[b] : beta_[b];
            const double x0 = x[off];
            const double w1x1 = w.tail(q - 1).dot(x.segment(off + 1, q - 1));
            y[off] = sc * (w[0] * x0 + sgn * w1x1);
            const double coef = sgn * x0 + w1x1 / (1.0 + w[0]);
            y.segment(off + 1, q - 1) = sc * (x.segment(off + 1, q - 1) + coef * w.tail(q - 1));
            off += q;
        }
        return y;
    }

    ConeLayout K_;
    VectorXd d_;
    std::vector<VectorXd> socw_;
    std::vector<double> beta_;
};

// Standard-form data compiled from a ConicProgram.
struct StandardForm {
    MatrixXd A, G;
    VectorXd b, h, c;
    double c0 = 0.0;
    ConeLayout cones;
    // per constraint: offset into y (equality) or s/z (cones) and size
    struct Slot {
        bool equality;
        Index offset;
        Index size;
        bool rotated;
    };
    std::vector<Slot> slots;
};

inline StandardForm compile(const ConicProgram& prog) {
    StandardForm sf;
    const Index n = prog.num_variables();
    Index p = 0, lp = 0, socdim = 0;
    for (const auto& c : prog.constraints()) {
        switch (c.kind) {
            case ConstraintKind::equality: ++p; break;
            case ConstraintKind::nonnegative: ++lp; break;
            case ConstraintKind::soc: socdim += static_cast<Index>(c.rows.size()); break;
            case ConstraintKind::rotated_soc: socdim += static_cast<Index>(c.rows.size()); break;
        }
    }
    const Index m = lp + socdim;
    sf.A = MatrixXd::Zero(p, n);
    sf.b = VectorXd::Zero(p);
    sf.G = MatrixXd::Zero(m, n);
    sf.h = VectorXd::Zero(m);
    sf.c = VectorXd::Zero(n);
    for (const auto& t : prog.objective().terms) sf.c[t.var] += t.coef;
    sf.c0 = prog.objective().constant;
    sf.cones.lp = lp;

    auto put_cone_row = [&](Index row, const AffineRow& r, double scale) {
        for (const auto& t : r.terms) sf.G(row, t.var) -= scale * t.coef;
        sf.h[row] += scale * r.constant;
    };

    Index ip = 0, il = 0, is = lp;
    const double rs = 1.0 / std::sqrt(2.0);
    for (const auto& c : prog.constraints()) {
        switch (c.kind) {
            case ConstraintKind::equality: {
                for (const auto& t : c.rows[0].terms) sf.A(ip, t.var) += t.coef;
                sf.b[ip] = -c.rows[0].constant;
                sf.slots.push_back({true, ip, 1, false});
                ++ip;
                break;
            }
            case ConstraintKind::nonnegative: {
                put_cone_row(il, c.rows[0], 1.0);
                sf.slots.push_back({false, il, 1, false});
                ++il;
                break;
            }
            case ConstraintKind::soc: {
                const Index q = static_cast<Index>(c.rows.size());
                for (Index k = 0; k < q; ++k) put_cone_row(is + k, c.rows[static_cast<std::size_t>(k)], 1.0);
                sf.cones.soc_sizes.push_back(q);
                sf.slots.push_back({false, is, q, false});
                is += q;
                break;
            }
            case ConstraintKind::rotated_soc: {
                // (v, w, u) -> ((v+w)/sqrt2, (v-w)/sqrt2, u)
                const Index q = static_cast<Index>(c.rows.size());
                put_cone_row(is, c.rows[0], rs);
                put_cone_row(is, c.rows[1], rs);
                put_cone_row(is + 1, c.rows[0], rs);
                put_cone_row(is + 1, c.rows[1], -rs);
                for (Index k = 2; k < q; ++k) put_cone_row(is + k, c.rows[static_cast<std::size_t>(k)], 1.0);
                sf.cones.soc_sizes.push_back(q);
                sf.slots.push_back({false, is, q, true});
                is += q;
                break;
            }
        }
    }
    return sf;
}

// Ruiz equilibration; cone blocks share one row factor.
struct Scaling {
    VectorXd col, eq_row, cone_row;
};

inline Scaling equilibrate(StandardForm& sf, int passes) {
    const Index n = sf.A.cols(), p = sf.A.rows(), m = sf.G.rows();
    Scaling sc{VectorXd::Ones(n), VectorXd::Ones(p), VectorXd::Ones(m)};
    auto clampf = [](double v) { return std::clamp(v, 1e-4, 1e4); };
    for (int pass = 0; pass < passes; ++pass) {
        VectorXd cn = VectorXd::Zero(n);
        for (Index j = 0; j < n; ++j) {
            double v = 0.0;
            if (p) v = sf.A.col(j).cwiseAbs().maxCoeff();
            if (m) v = std::max(v, sf.G.col(j).cwiseAbs().maxCoeff());
            cn[j] = v > 0.0 ? clampf(1.0 / std::sqrt(v)) : 1.0;
        }
        sf.A = sf.A * cn.asDiagonal();
        sf.G = sf.G * cn.asDiagonal();
        sc.col.array() *= cn.array();

        VectorXd rn(p);
        for (Index i = 0; i < p; ++i) {
            const double v = sf.A.row(i).cwiseAbs().maxCoeff();
            rn[i] = v > 0.0 ? clampf(1.0 / std::sqrt(v)) : 1.0;
        }
        sf.A = rn.asDiagonal() * sf.A;
        sc.eq_row.array() *= rn.array();

        VectorXd gn(m);
        for (Index i = 0; i < sf.cones.lp; ++i) {
            const double v = sf.G.row(i).cwiseAbs().maxCoeff();
            gn[i] = v > 0.0 ? clampf(1.0 / std::sqrt(v)) : 1.0;
        }
        Index off = sf.cones.lp;
        for (auto q : sf.cones.soc_sizes) {
            const double v = sf.G.middleRows(off, q).cwiseAbs().maxCoeff();
            gn.segment(off, q).setConstant(v > 0.0 ? clampf(1.0 / std::sqrt(v)) : 1.0);
            off += q;
        }
        sf.G = gn.asDiagonal() * sf.G;
        sc.cone_row.array() *= gn.array();
    }
    sf.c.array() *= sc.col.array();
    sf.b.array() *= sc.eq_row.array();
    sf.h.array() *= sc.cone_row.array();
    return sc;
}

// KKT system [0 A' G'; A 0 0; G 0 -W^2] solved through the reduced
// [G'W^-2 G  A'; A 0] form with iterative refinement on the full system.
// When refinement stalls (late iterations, extreme scalings) the solver
// switches to the full system in scaled variables z~ = W z,
// [0 A' G~'; A 0 0; G~ 0 -I] with G~ = W^-1 G, whose conditioning is not
// squared by the normal-equations product.
class KktSolver {
public:
    KktSolver(const StandardForm& sf, const NtScaling& W, int refine)
        : sf_(sf), W_(W), refine_(refine) {
        const Index n = sf.A.cols(), p = sf.A.rows();
        Gs_ = W.apply_inv_rows(sf.G);
        MatrixXd M = MatrixXd::Zero(n + p, n + p);
        M.topLeftCorner(n, n).noalias() = Gs_.transpose() * Gs_;
        const double scale = 1.0 + (n ? M.topLeftCorner(n, n).diagonal().cwiseAbs().maxCoeff() : 0.0);
        reg_ = 1e-13 * scale;
        M.topLeftCorner(n, n).diagonal().array() += reg_;
        M.topRightCorner(n, p) = sf.A.transpose();
        M.bottomLeftCorner(p, n) = sf.A;
        M.bottomRightCorner(p, p).diagonal().setConstant(-reg_);
        lu_.compute(M);
    }

    void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz,
               VectorXd& ux, VectorXd& uy, VectorXd& uz) const {
        // z-row handled in scaled units: W^-1 (bz - G x) + W z = 0 row-wise
        const VectorXd bzs = W_.apply_inv(bz);
        const double ref = 1.0 + std::max({bx.lpNorm<Eigen::Infinity>(), by.size() ? by.lpNorm<Eigen::Infinity>() : 0.0,
                                           bzs.size() ? bzs.lpNorm<Eigen::Infinity>() : 0.0});
        if (!full_) {
            solve_reduced(bx, by, bzs, ux, uy, uz);
            const double e = refine(bx, by, bzs, ux, uy, uz, ref, false);
            if (e <= 1e-11 * ref) return;
        }
        if (!full_) factor_full();
        solve_full(bx, by, bzs, ux, uy, uz);
        refine(bx, by, bzs, ux, uy, uz, ref, true);
    }

    bool used_full() const { return static_cast<bool>(full_); }

private:
    double residual(const VectorXd& bx, const VectorXd& by, const VectorXd& bzs, const VectorXd& ux,
                    const VectorXd& uy, const VectorXd& uz, VectorXd& ex, VectorXd& ey, VectorXd& ezs) const {
        ex = bx - sf_.A.transpose() * uy - sf_.G.transpose() * uz;
        ey = by - sf_.A * ux;
        ezs = bzs - Gs_ * ux + W_.apply(uz);
        return std::max({ex.lpNorm<Eigen::Infinity>(), ey.size() ? ey.lpNorm<Eigen::Infinity>() : 0.0,
                         ezs.size() ? ezs.lpNorm<Eigen::Infinity>() : 0.0});
    }

    double refine(const VectorXd& bx, const VectorXd& by, const VectorXd& bzs, VectorXd& ux, VectorXd& uy,
                  VectorXd& uz, double ref, bool full) const {
        VectorXd ex, ey, ez;
        double err = residual(bx, by, bzs, ux, uy, uz, ex, ey, ez);
        for (int it = 0; it < refine_ && err > 1e-15 * ref; ++it) {
            VectorXd dx, dy, dz;
            if (full)
                solve_full(ex, ey, ez, dx, dy, dz);
            else
                solve_reduced(ex, ey, ez, dx, dy, dz);
            VectorXd nx = ux + dx, ny = uy + dy, nz = uz + dz;
            VectorXd fx, fy, fz;
            const double e2 = residual(bx, by, bzs, nx, ny, nz, fx, fy, fz);
            if (!(e2 < err)) break;
            ux = std::move(nx);
            uy = std::move(ny);
            uz = std::move(nz);
            ex = std::move(fx);
            ey = std::move(fy);
            ez = std::move(fz);
            err = e2;
        }
        return err;
    }

    void solve_reduced(const VectorXd& bx, const VectorXd& by, const VectorXd& bzs,
                       VectorXd& ux, VectorXd& uy, VectorXd& uz) const {
        const Index n = sf_.A.cols(), p = sf_.A.rows();
        VectorXd rhs(n + p);
        rhs.head(n) = bx + Gs_.transpose() * bzs;
        rhs.tail(p) = by;
        VectorXd sol = lu_.solve(rhs);
        ux = sol.head(n);
        uy = sol.tail(p);
        uz = W_.apply_inv(Gs_ * ux - bzs);
    }

    void factor_full() const {
        const Index n = sf_.A.cols(), p = sf_.A.rows(), m = Gs_.rows();
        MatrixXd M = MatrixXd::Zero(n + p + m, n + p + m);
        M.block(0, 0, n, n).diagonal().setConstant(reg_);
        M.block(0, n, n, p) = sf_.A.transpose();
        M.block(0, n + p, n, m) = Gs_.transpose();
        M.block(n, 0, p, n) = sf_.A;
        M.block(n, n, p, p).diagonal().setConstant(-reg_);
        M.block(n + p, 0, m, n) = Gs_;
        M.block(n + p, n + p, m, m).diagonal().setConstant(-1.0);
        full_ = std::make_shared<Eigen::PartialPivLU<MatrixXd>>(M);
    }

    // Unknowns (x, y, z~) with z = W^-1 z~.
    void solve_full(const VectorXd& bx, const VectorXd& by, const VectorXd& bzs,
                    VectorXd& ux, VectorXd& uy, VectorXd& uz) const {
        const Index n = sf_.A.cols(), p = sf_.A.rows(), m = Gs_.rows();
        VectorXd rhs(n + p + m);
        rhs.head(n) = bx;
        rhs.segment(n, p) = by;
        rhs.tail(m) = bzs;
        const VectorXd sol = full_->solve(rhs);
        ux = sol.head(n);
        uy = sol.segment(n, p);
        uz = W_.apply_inv(sol.tail(m));
    }

    const StandardForm& sf_;
    const NtScaling& W_;
    int refine_;
    MatrixXd Gs_;
    double reg_ = 0.0;
    Eigen::PartialPivLU<MatrixXd> lu_;
    mutable std::shared_ptr<Eigen::PartialPivLU<MatrixXd>> full_;
};

}  // namespace detail

/// Solves a conic program. Never throws for numerical trouble: the status
/// reports it and the best iterate is returned.
inline SolveOutcome solve_conic(const ConicProgram& prog, const SolverSettings& settings = {}) {
    using namespace detail;
    if (!(settings.tolerance > 0.0 && settings.tolerance <= 1e-2))
        throw InvalidInput("solver tolerance must lie in (0, 1e-2]");
    prog.validate();

    const StandardForm orig = compile(prog);
    StandardForm sf = orig;
    const Scaling scal = equilibrate(sf, settings.equilibration_passes);
    const ConeLayout& K = sf.cones;
    const Index n = sf.A.cols(), p = sf.A.rows(), m = sf.G.rows();
    const double tol = settings.tolerance;

    SolveOutcome out;
    out.tolerance = tol;

    VectorXd x, y, z, s;
    double tau = 1.0, kappa = 1.0;

    {
        // Initial point from the two least-squares problems with W = I.
        VectorXd ones_s = VectorXd::Ones(m);
        ConeLayout lpK{m, {}};
        NtScaling I(lpK, ones_s, ones_s);
        KktSolver kkt(sf, I, settings.refinement_steps);
        VectorXd ux, uy, uz;
        kkt.solve(VectorXd::Zero(n), sf.b, sf.h, ux, uy, uz);
        x = ux;
        s = -uz;
        const double ts = -min_cone_value(K, s);
        if (m && ts >= -1e-8 * std::max(1.0, s.norm())) add_identity(K, s, 1.0 + ts);
        kkt.solve(-sf.c, VectorXd::Zero(p), VectorXd::Zero(m), ux, uy, uz);
        y = uy;
        z = uz;
        const double tz = -min_cone_value(K, z);
        if (m && tz >= -1e-8 * std::max(1.0, z.norm())) add_identity(K, z, 1.0 + tz);
    }

    const double nb = std::max(1.0, orig.b.size() ? orig.b.norm() : 0.0);
    const double nh = std::max(1.0, orig.h.size() ? orig.h.norm() : 0.0);
    const double nc = std::max(1.0, orig.c.norm());
    const double degree = static_cast<double>(K.degree()) + 1.0;

    struct Iterate {
        VectorXd x, y, z, s;
        double tau, kappa;
        double pres, dres, gap, pcost, dcost;
    };
    std::optional<Iterate> best;
    double best_merit = kInf;
    int best_iter = 0, last_iter = 0;

    auto unscale = [&](const VectorXd& xs, const VectorXd& ys, const VectorXd& zs, const VectorXd& ss,
                       VectorXd& xo, VectorXd& yo, VectorXd& zo, VectorXd& so) {
        xo = scal.col.cwiseProduct(xs);
        yo = scal.eq_row.cwiseProduct(ys);
        zo = scal.cone_row.cwiseProduct(zs);
        so = ss.cwiseQuotient(scal.cone_row);
    };

    auto finish = [&](SolveStatus st, const VectorXd& xs, const VectorXd& ys, const VectorXd& zs, const VectorXd& ss,
                      double div_primal, double div_dual, double pres, double dres, double gap, int iters) {
        VectorXd xo, yo, zo, so;
        unscale(xs, ys, zs, ss, xo, yo, zo, so);
        out.status = st;
        out.x = xo / div_primal;
        yo /= div_dual;
        zo /= div_dual;
        out.objective = orig.c.dot(out.x) + orig.c0;
        out.stats.iterations = iters;
        out.stats.primal_residual = pres;
        out.stats.dual_residual = dres;
        out.stats.gap = gap;
        out.duals.clear();
        const double rs = 1.0 / std::sqrt(2.0);
        for (const auto& slot : orig.slots) {
            VectorXd d = slot.equality ? VectorXd(yo.segment(slot.offset, slot.size))
                                       : VectorXd(zo.segment(slot.offset, slot.size));
            if (slot.rotated) {
                const double a = d[0], b = d[1];
                d[0] = rs * (a + b);
                d[1] = rs * (a - b);
            }
            out.duals.push_back(std::move(d));
        }
        return out;
    };

    for (int iter = 0; iter <= settings.max_iterations; ++iter) {
        last_iter = iter;
        // Residuals of the embedding (scaled problem).
        VectorXd rx = -sf.A.transpose() * y - sf.G.transpose() * z - sf.c * tau;
        VectorXd ry = sf.A * x - sf.b * tau;
        VectorXd rz = s + sf.G * x - sf.h * tau;
        const double rt = kappa + sf.c.dot(x) + sf.b.dot(y) + sf.h.dot(z);

        // Convergence tests on the unscaled problem.
        VectorXd xo, yo, zo, so;
        unscale(x, y, z, s, xo, yo, zo, so);
        // Residuals relative to the largest term they are built from.
        double pres = 0.0;
        if (p) {
            const VectorXd Ax = orig.A * xo;
            pres = (Ax - orig.b * tau).norm() / std::max({nb * tau, Ax.norm(), tau});
        }
        if (m) {
            const VectorXd Gx = orig.G * xo;
            pres = std::max(pres, (Gx + so - orig.h * tau).norm() / std::max({nh * tau, Gx.norm(), so.norm(), tau}));
        }
        const VectorXd Aty = orig.A.transpose() * yo, Gtz = orig.G.transpose() * zo;
        const double dres = (Aty + Gtz + orig.c * tau).norm() / std::max({nc * tau, Aty.norm(), Gtz.norm(), tau});
        const double pcost = orig.c.dot(xo) / tau;
        const double dcost = -(orig.b.dot(yo) + orig.h.dot(zo)) / tau;
        const double gap = so.dot(zo) / (tau * tau);
        const double relgap = (std::min(std::abs(pcost), std::abs(dcost)) > 0.0)
                                  ? gap / std::min(std::abs(pcost), std::abs(dcost))
                                  : kInf;
        const double gap_measure = std::min(std::abs(gap), relgap);

        if (pres <= tol && dres <= tol && gap_measure <= tol)
            return finish(SolveStatus::optimal, x, y, z, s, tau, tau, pres, dres, gap, iter);

        const double merit = std::max({pres, dres, gap_measure});
        if (merit < best_merit) {
            best_merit = merit;
            best_iter = iter;
            best = Iterate{x, y, z, s, tau, kappa, pres, dres, gap, pcost, dcost};
        }
        // Late in the run the gap can keep shrinking while the residuals drift up;
        // further steps do not improve on the best iterate.
        if (best_merit <= settings.reduced_tolerance && iter - best_iter >= settings.stall_iterations) break;

        // Infeasibility certificates.
        const double hz_by = orig.h.dot(zo) + orig.b.dot(yo);
        if (hz_by < 0.0) {
            const double res = (orig.A.transpose() * yo + orig.G.transpose() * zo).norm() / (-hz_by);
            if (res <= tol && kappa > tau * 1e-2)
                return finish(SolveStatus::primal_infeasible, x, y, z, s, 1.0, -hz_by, res, dres, gap, iter);
        }
        const double cx = orig.c.dot(xo);
        if (cx < 0.0) {
            const double res = std::max(p ? (orig.A * xo).norm() : 0.0, m ? (orig.G * xo + so).norm() : 0.0) / (-cx);
            if (res <= tol && kappa > tau * 1e-2)
                return finish(SolveStatus::dual_infeasible, x, y, z, s, -cx, 1.0, pres, res, gap, iter);
        }

        if (iter == settings.max_iterations) break;

        const double mu = (s.dot(z) + tau * kappa) / degree;
        NtScaling W(K, s, z);
        const VectorXd lambda = W.apply(z);
        KktSolver kkt(sf, W, settings.refinement_steps);

        VectorXd x1, y1, z1;
        kkt.solve(-sf.c, sf.b, sf.h, x1, y1, z1);
        const double denom = -kappa / tau + sf.c.dot(x1) + sf.b.dot(y1) + sf.h.dot(z1);

        auto direction = [&](double dg, const VectorXd& rc, double rtc, VectorXd& dx, VectorXd& dy, VectorXd& dz,
                             VectorXd& ds, double& dtau, double& dkappa) {
            const VectorXd q = cone_division(K, lambda, rc);
            VectorXd x2, y2, z2;
            kkt.solve(dg * rx, -dg * ry, -dg * rz - W.apply(q), x2, y2, z2);
            dtau = (-dg * rt - rtc / tau - sf.c.dot(x2) - sf.b.dot(y2) - sf.h.dot(z2)) / denom;
            dx = x2 + dtau * x1;
            dy = y2 + dtau * y1;
            dz = z2 + dtau * z1;
            // from the linearized primal equation; algebraically W (q - W dz)
            // but without the loss of precision of the double scaling
            ds = -dg * rz - sf.G * dx + sf.h * dtau;
            dkappa = (rtc - kappa * dtau) / tau;
        };

        auto step_length = [&](const VectorXd& ds, const VectorXd& dz, double dtau, double dkappa) {
            double a = std::min(max_step(K, s, ds), max_step(K, z, dz));
            if (dtau < 0.0) a = std::min(a, -tau / dtau);
            if (dkappa < 0.0) a = std::min(a, -kappa / dkappa);
            return a;
        };

        // Predictor.
        VectorXd dxa, dya, dza, dsa;
        double dtaua, dkappaa;
        VectorXd rc_aff = -cone_product(K, lambda, lambda);
        direction(1.0, rc_aff, -tau * kappa, dxa, dya, dza, dsa, dtaua, dkappaa);
        const double alpha_aff = std::min(1.0, step_length(dsa, dza, dtaua, dkappaa));
        const double sigma = std::pow(1.0 - alpha_aff, 3);

        // Corrector.
        VectorXd rc = rc_aff - cone_product(K, W.apply_inv(dsa), W.apply(dza));
        add_identity(K, rc, sigma * mu);
        const double rtc = -tau * kappa - dtaua * dkappaa + sigma * mu;
        VectorXd dx, dy, dz, ds;
        double dtau, dkappa;
        direction(1.0 - sigma, rc, rtc, dx, dy, dz, ds, dtau, dkappa);
        const double amax = step_length(ds, dz, dtau, dkappa);
        const double alpha = std::min(1.0, 0.99 * amax);
        if (!(alpha > 1e-12) || !dx.allFinite()) {
            out.stats.iterations = iter;
            break;
        }
        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        // keep the HSDE scale bounded
        const double scale = std::max(tau, 1.0);
        if (scale > 1e8) {
            x /= scale; y /= scale; z /= scale; s /= scale; tau /= scale; kappa /= scale;
        }
    }

    // No convergence: report the best iterate with reduced-accuracy status.
    if (best) {
        const auto& b = *best;
        const double loose = std::sqrt(tol);
        SolveStatus st = SolveStatus::iteration_limit;
        if (best_merit <= settings.reduced_tolerance)
            st = SolveStatus::optimal_reduced;
        else if (b.pres <= loose && b.dres <= loose)
            st = SolveStatus::inaccurate;
        return finish(st, b.x, b.y, b.z, b.s, b.tau, b.tau,
                      b.pres, b.dres, b.gap, last_iter);
    }
    out.status = SolveStatus::iteration_limit;
    out.x = VectorXd::Zero(n);
    return out;
}

}  // namespace mcbf::conic

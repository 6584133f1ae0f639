#pragma once

// Transmitter and receiver distortion models.
//
// eta maps the transmit magnitude at one antenna (sqrt mW) to the magnitude
// of the additive transmit distortion there; nu maps the aggregate received
// signal magnitude to the receiver distortion magnitude. Both must be
// nondecreasing, convex and vanish at zero.

#include "mcbf/scenario.hpp"

#include <functional>

namespace mcbf {

/// A nondecreasing convex scalar map with its derivative.
class DistortionFunction {
public:
    enum class Kind { zero, linear, poly5, custom };

    static DistortionFunction zero() { return DistortionFunction(Kind::zero, 0.0, kInf); }
    /// x -> slope * x
    static DistortionFunction linear(double slope) {
        if (!(slope >= 0.0)) throw InvalidInput("linear distortion slope must be nonnegative");
        return slope == 0.0 ? zero() : DistortionFunction(Kind::linear, slope, kInf);
    }
    /// x -> (kappa1/100) x (1 + (x/kappa2)^4); kappa2 = inf gives the linear map.
    static DistortionFunction poly5(double kappa1, double kappa2) {
        if (!(kappa1 >= 0.0)) throw InvalidInput("kappa1 must be nonnegative");
        if (!(kappa2 > 0.0)) throw InvalidInput("kappa2 must be positive (inf allowed)");
        if (kappa1 == 0.0) return zero();
        if (std::isinf(kappa2)) return linear(kappa1 / 100.0);
        return DistortionFunction(Kind::poly5, kappa1 / 100.0, kappa2);
    }
    static DistortionFunction custom(std::function<double(double)> f, std::function<double(double)> df,
                                     std::string label) {
        DistortionFunction d(Kind::custom, 0.0, kInf);
        d.f_ = std::move(f);
        d.df_ = std::move(df);
        d.label_ = std::move(label);
        return d;
    }

    double operator()(double x) const {
        if (x < 0.0) throw InvalidInput("distortion functions take nonnegative magnitudes");
        switch (kind_) {
            case Kind::zero: return 0.0;
            case Kind::linear: return slope_ * x;
            case Kind::poly5: {
                const double r = x / knee_;
                const double r2 = r * r;
                return slope_ * x * (1.0 + r2 * r2);
            }
            case Kind::custom: return f_(x);
        }
        return 0.0;
    }
    double derivative(double x) const {
        switch (kind_) {
            case Kind::zero: return 0.0;
            case Kind::linear: return slope_;
            case Kind::poly5: {
                const double r = x / knee_;
                const double r2 = r * r;
                return slope_ * (1.0 + 5.0 * r2 * r2);
            }
            case Kind::custom: return df_(x);
        }
        return 0.0;
    }

    Kind kind() const { return kind_; }
    bool is_zero() const { return kind_ == Kind::zero; }
    /// Exactly linear (including zero): SOC-representable without cuts.
    bool is_linear() const { return kind_ == Kind::zero || kind_ == Kind::linear; }
    double slope() const { return slope_; }
    double knee() const { return knee_; }
    std::string label() const {
        switch (kind_) {
            case Kind::zero: return "zero";
            case Kind::linear: return "linear(" + std::to_string(slope_) + ")";
            case Kind::poly5: return "poly5(" + std::to_string(slope_) + "," + std::to_string(knee_) + ")";
            case Kind::custom: return label_;
        }
        return {};
    }

    /// x -> f(a x) / b, used to move the model into normalized units.
    DistortionFunction rescaled(double a, double b) const {
        switch (kind_) {
            case Kind::zero: return zero();
            case Kind::linear: return linear(slope_ * a / b);
            case Kind::poly5: {
                DistortionFunction d(Kind::poly5, slope_ * a / b, knee_ / a);
                return d;
            }
            case Kind::custom: {
                auto f = f_;
                auto df = df_;
                return custom([f, a, b](double x) { return f(a * x) / b; },
                              [df, a, b](double x) { return df(a * x) * a / b; }, label_ + " (rescaled)");
            }
        }
        return zero();
    }

private:
    DistortionFunction(Kind k, double slope, double knee) : kind_(k), slope_(slope), knee_(knee) {}

    Kind kind_;
    double slope_;
    double knee_;
    std::function<double(double)> f_, df_;
    std::string label_;
};

/// Spot-checks the contract of a distortion map on [0, x_max]: f(0) = 0,
/// nondecreasing, midpoint convex, derivative matching finite differences.
/// Throws InvalidInput naming the first violated property.
inline void check_distortion_function(const DistortionFunction& f, double x_max, int points = 200) {
    if (std::abs(f(0.0)) > 1e-12) throw InvalidInput(f.label() + ": f(0) must be 0");
    double prev = 0.0;
    for (int k = 1; k <= points; ++k) {
        const double x = x_max * k / points;
        const double v = f(x);
        if (v < prev - 1e-12 * (1.0 + std::abs(v))) throw InvalidInput(f.label() + ": not nondecreasing");
        prev = v;
        const double h = 1e-6 * std::max(1.0, x);
        const double fd = (f(x + h) - f(x - std::min(h, x))) / (h + std::min(h, x));
        const double d = f.derivative(x);
        if (std::abs(d - fd) > 1e-4 * (1.0 + std::abs(d))) throw InvalidInput(f.label() + ": derivative mismatch");
    }
    for (int a = 0; a <= 20; ++a)
        for (int b = a + 1; b <= 20; ++b) {
            const double x = x_max * a / 20.0, y = x_max * b / 20.0;
            const double lhs = f(0.5 * (x + y)), rhs = 0.5 * (f(x) + f(y));
            if (lhs > rhs + 1e-12 * (1.0 + std::abs(rhs))) throw InvalidInput(f.label() + ": not convex");
        }
}

struct ImpairmentModel {
    DistortionFunction eta = DistortionFunction::zero();
    DistortionFunction nu = DistortionFunction::zero();
    double kappa1 = 0.0, kappa2 = kInf, kappa3 = 0.0;

    /// eta from the fifth-order amplifier model, nu linear with EVM kappa3 %.
    static ImpairmentModel from_kappas(double kappa1, double kappa2, double kappa3) {
        if (!(kappa3 >= 0.0)) throw InvalidInput("kappa3 must be nonnegative");
        ImpairmentModel m{DistortionFunction::poly5(kappa1, kappa2), DistortionFunction::linear(kappa3 / 100.0),
                          kappa1, kappa2, kappa3};
        return m;
    }
    static ImpairmentModel ideal() { return from_kappas(0.0, kInf, 0.0); }

    bool eta_is_linear() const { return eta.is_linear(); }
    bool nu_is_linear() const { return nu.is_linear(); }
    bool is_ideal() const { return eta.is_zero() && nu.is_zero(); }
};

/// (kappa1/100) x (1 + (x/kappa2)^4)
inline double eta_poly(double x, double kappa1, double kappa2) {
    return DistortionFunction::poly5(kappa1, kappa2)(x);
}

/// (kappa3/100) x
inline double nu_linear(double x, double kappa3) { return DistortionFunction::linear(kappa3 / 100.0)(x); }

/// Euclidean norm of row n of W (transmit magnitude at antenna n).
inline double row_magnitude(const MatrixXc& W, Index n) { return W.row(n).norm(); }

/// Diagonal of the transmit distortion covariance: c^2_{m,n} = eta(||T_n W||)^2.
inline VectorXd tx_distortion_cov(const MatrixXc& W, const ImpairmentModel& model) {
    VectorXd c2(W.rows());
    for (Index n = 0; n < W.rows(); ++n) {
        const double c = model.eta(row_magnitude(W, n));
        c2[n] = c * c;
    }
    return c2;
}

/// EVM of antenna n (ratio, not percent).
inline double evm_tx(const MatrixXc& W, Index n, const ImpairmentModel& model) {
    const double x = row_magnitude(W, n);
    if (!(x > 0.0)) throw InvalidInput("EVM undefined for zero transmit magnitude on antenna " + std::to_string(n));
    const double r = model.eta(x) / x;
    return r * r;
}

inline double evm_percent(double evm) { return 100.0 * std::sqrt(evm); }

/// Aggregate received magnitude sqrt(sum_m ||h_{m,i,j}^H W_m||^2).
inline double received_magnitude(const Scenario& sc, const std::vector<MatrixXc>& W, Index i, Index j) {
    double acc = 0.0;
    for (Index m = 0; m < sc.n_cells(); ++m) acc += (sc.h(m, i, j).adjoint() * W[static_cast<std::size_t>(m)]).squaredNorm();
    return std::sqrt(acc);
}

/// sigma_{i,j}^2 = sigma^2 + nu(received magnitude)^2
inline double rx_distortion_var(const Scenario& sc, const std::vector<MatrixXc>& W, Index i, Index j,
                                const ImpairmentModel& model) {
    const double v = model.nu(received_magnitude(sc, W, i, j));
    return sc.noise_power() + v * v;
}

struct DistortionState {
    std::vector<VectorXd> tx_cov_diag;       // per cell
    std::vector<std::vector<double>> rx_var; // [i][j]
};

inline DistortionState distortion_state(const Scenario& sc, const std::vector<MatrixXc>& W,
                                        const ImpairmentModel& model) {
    DistortionState st;
    for (Index m = 0; m < sc.n_cells(); ++m) st.tx_cov_diag.push_back(tx_distortion_cov(W[static_cast<std::size_t>(m)], model));
    st.rx_var.resize(static_cast<std::size_t>(sc.n_cells()));
    for (Index i = 0; i < sc.n_cells(); ++i)
        for (Index j = 0; j < sc.users_per_cell(); ++j)
            st.rx_var[static_cast<std::size_t>(i)].push_back(rx_distortion_var(sc, W, i, j, model));
    return st;
}

}  // namespace mcbf

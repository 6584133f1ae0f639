#pragma once

// Helpers for writing complex-valued expressions into a real ConicProgram.
// A complex vector w in C^n is stored as a real block [Re w; Im w].

#include "mcbf/conic/program.hpp"

#include <span>

namespace mcbf::conic {

struct ComplexBlock {
    Index offset;  // start of the real parts; imaginary parts follow
    Index size;

    static ComplexBlock from(const VarBlock& b) {
        if (b.size % 2 != 0) throw InvalidInput("complex block '" + b.name + "' needs an even size");
        return {b.offset, b.size / 2};
    }
    Index re(Index k) const { return offset + k; }
    Index im(Index k) const { return offset + size + k; }

    VectorXc value(const VectorXd& x) const {
        VectorXc w(size);
        for (Index k = 0; k < size; ++k) w[k] = cplx(x[re(k)], x[im(k)]);
        return w;
    }
};

/// Real and imaginary parts of g^T w as two affine rows.
inline std::pair<AffineRow, AffineRow> complex_linear(const VectorXc& g, const ComplexBlock& w) {
    if (g.size() != w.size) throw InvalidInput("complex_linear: coefficient length mismatch");
    AffineRow re, im;
    for (Index k = 0; k < w.size; ++k) {
        const double a = g[k].real(), b = g[k].imag();
        re.add(w.re(k), a).add(w.im(k), -b);
        im.add(w.re(k), b).add(w.im(k), a);
    }
    return {re, im};
}

/// Rows of L^H with Q = L L^H, dropping directions with negligible weight.
inline MatrixXc psd_factor_rows(const MatrixXc& Q, double tol = 1e-10) {
    if (Q.rows() != Q.cols()) throw InvalidInput("Q must be square");
    if ((Q - Q.adjoint()).norm() > tol * std::max(1.0, Q.norm())) throw InvalidInput("Q must be Hermitian");
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(Q);
    const VectorXd& ev = es.eigenvalues();
    const double top = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
    if (ev.minCoeff() < -tol * std::max(1.0, top))
        throw InvalidInput("Q has a negative eigenvalue " + std::to_string(ev.minCoeff()));
    std::vector<Index> keep;
    for (Index k = 0; k < ev.size(); ++k)
        if (ev[k] > tol * top) keep.push_back(k);
    MatrixXc L(static_cast<Index>(keep.size()), Q.cols());
    for (std::size_t r = 0; r < keep.size(); ++r)
        L.row(static_cast<Index>(r)) = std::sqrt(ev[keep[r]]) * es.eigenvectors().col(keep[r]).adjoint();
    return L;
}

struct WeightedScalar {
    Index var;
    double weight;  // contributes weight * x^2
};

/// Emits  sum_j w_j^H Q w_j + sum_n a_n t_n^2 <= rhs  as the rotated cone
/// ||(L^H w_1, ..., L^H w_K, sqrt(a) t)||^2 <= 2 (rhs / 2) 1.
inline ConstraintId embed_quadratic(ConicProgram& prog, std::span<const ComplexBlock> columns, const MatrixXc& Q,
                                    std::span<const WeightedScalar> extra, const AffineRow& rhs,
                                    std::string label = {}) {
    const MatrixXc Lh = psd_factor_rows(Q);
    std::vector<AffineRow> u;
    for (const auto& w : columns) {
        if (w.size != Q.cols()) throw InvalidInput("embed_quadratic: column length does not match Q");
        for (Index r = 0; r < Lh.rows(); ++r) {
            auto [re, im] = complex_linear(Lh.row(r).transpose(), w);
            u.push_back(std::move(re));
            u.push_back(std::move(im));
        }
    }
    for (const auto& e : extra) {
        if (e.weight < 0.0) throw InvalidInput("embed_quadratic: negative weight");
        if (e.weight > 0.0) u.push_back(AffineRow(e.var, std::sqrt(e.weight)));
    }
    if (u.empty()) u.push_back(AffineRow(0.0));
    return prog.add_rotated_soc(rhs.scaled(0.5), AffineRow(1.0), std::move(u), std::move(label));
}

}  // namespace mcbf::conic

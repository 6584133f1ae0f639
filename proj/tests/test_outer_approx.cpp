#include <catch2/catch_amalgamated.hpp>

#include "mcbf/conic.hpp"

#include <random>

using namespace mcbf;
using namespace mcbf::conic;
using Catch::Approx;

namespace {

ConvexScalarFunction quintic() {
    return {[](double u) { return u + std::pow(u, 5); }, [](double u) { return 1.0 + 5.0 * std::pow(u, 4); }, "u+u^5"};
}
ConvexScalarFunction square() {
    return {[](double u) { return u * u; }, [](double u) { return 2.0 * u; }, "u^2"};
}

}  // namespace

TEST_CASE("outer approximation: fixed argument u = 1 with u + u^5 gives t = 2") {
    ConicProgram prog;
    auto u = prog.add_variable("u");
    auto t = prog.add_variable("t");
    prog.add_equality(AffineRow(u[0], 1.0).add(AffineRow(-1.0)));
    prog.set_objective(AffineRow(t[0], 1.0));
    auto out = outer_approx_solve(prog, {{quintic(), u[0], t[0]}});
    REQUIRE(out.optimal());
    CHECK(out.objective == Approx(2.0).margin(1e-6));
    CHECK(out.stats.max_cut_violation <= 1e-6);
}

TEST_CASE("outer approximation: u >= 2 with u^2 <= t gives t = 4") {
    ConicProgram prog;
    auto u = prog.add_variable("u");
    auto t = prog.add_variable("t");
    prog.add_nonnegative(AffineRow(u[0], 1.0).add(AffineRow(-2.0)));
    prog.set_objective(AffineRow(t[0], 1.0));
    OuterApproxSettings st;
    auto out = outer_approx_solve(prog, {{square(), u[0], t[0]}}, st);
    REQUIRE(out.optimal());
    CHECK(std::abs(out.objective - 4.0) <= st.cut_tolerance + 1e-7);
    // tighter cut tolerance moves the answer closer
    st.cut_tolerance = 1e-9;
    auto tight = outer_approx_solve(prog, {{square(), u[0], t[0]}}, st);
    REQUIRE(tight.optimal());
    CHECK(std::abs(tight.objective - 4.0) <= 1e-7);
}

TEST_CASE("outer approximation: linear functions converge in one round") {
    const double slope = 0.3;
    ConvexScalarFunction lin{[=](double u) { return slope * u; }, [=](double) { return slope; }, "linear"};
    ConicProgram prog;
    auto x = prog.add_variable("x", 2);
    auto u = prog.add_variable("u");
    auto t = prog.add_variable("t");
    // u >= ||x||, x fixed, minimize t + u
    prog.add_soc(AffineRow(u[0], 1.0), {AffineRow(x[0], 1.0), AffineRow(x[1], 1.0)});
    prog.add_equality(AffineRow(x[0], 1.0).add(AffineRow(-3.0)));
    prog.add_equality(AffineRow(x[1], 1.0).add(AffineRow(-4.0)));
    prog.set_objective(AffineRow(t[0], 1.0).add(u[0], 1.0));
    auto oa = outer_approx_solve(prog, {{lin, u[0], t[0]}});
    REQUIRE(oa.optimal());
    CHECK(oa.stats.rounds == 1);

    ConicProgram direct = prog;
    direct.add_nonnegative(AffineRow(t[0], 1.0).add(u[0], -slope));
    auto ref = solve_conic(direct);
    REQUIRE(ref.optimal());
    CHECK(oa.objective == Approx(ref.objective).epsilon(1e-8));
    CHECK(oa.objective == Approx(5.0 * 1.3).epsilon(1e-7));
}

TEST_CASE("outer approximation: cuts are valid and relaxations are monotone") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.0, 3.0);
    const auto phi = quintic();
    ScalarConvexConstraint c{phi, 0, 1};
    // every cut is satisfied by any (u, t) with t >= phi(u)
    for (int k = 0; k < 200; ++k) {
        const double u0 = U(rng), u = U(rng);
        const double t = phi.value(u) + U(rng);
        VectorXd x(2);
        x << u, t;
        CHECK(supporting_cut(c, u0).evaluate(x) >= -1e-9);
    }

    ConicProgram prog;
    auto uu = prog.add_variable("u");
    auto tt = prog.add_variable("t");
    prog.add_nonnegative(AffineRow(uu[0], 1.0).add(AffineRow(-1.3)));
    prog.set_objective(AffineRow(tt[0], 1.0));
    auto out = outer_approx_solve(prog, {{phi, uu[0], tt[0]}});
    REQUIRE(out.optimal());
    const auto& h = out.stats.round_objectives;
    REQUIRE(h.size() >= 2);
    for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k] >= h[k - 1] - 1e-8);
    const double truth = phi.value(1.3);
    for (double v : h) CHECK(v <= truth + 1e-7);
}

TEST_CASE("outer approximation: infeasible relaxations certify infeasibility") {
    // u >= 2, t <= 3, u^2 <= t  has no solution
    ConicProgram prog;
    auto u = prog.add_variable("u");
    auto t = prog.add_variable("t");
    prog.add_nonnegative(AffineRow(u[0], 1.0).add(AffineRow(-2.0)));
    prog.add_nonnegative(AffineRow(t[0], -1.0).add(AffineRow(3.0)));
    prog.set_objective(AffineRow(t[0], 1.0));
    auto out = outer_approx_solve(prog, {{square(), u[0], t[0]}});
    CHECK(out.status == SolveStatus::primal_infeasible);
}

TEST_CASE("outer approximation: objective cutoff stops early") {
    ConicProgram prog;
    auto u = prog.add_variable("u");
    auto t = prog.add_variable("t");
    prog.add_nonnegative(AffineRow(u[0], 1.0).add(AffineRow(-2.0)));
    prog.set_objective(AffineRow(t[0], 1.0));
    OuterApproxSettings st;
    st.objective_cutoff = 3.0;
    auto out = outer_approx_solve(prog, {{square(), u[0], t[0]}}, st);
    CHECK(out.cutoff_reached);
    CHECK(out.objective > 3.0);
}

TEST_CASE("outer approximation: round limit reports inaccurate") {
    ConicProgram prog;
    auto u = prog.add_variable("u");
    auto t = prog.add_variable("t");
    prog.add_nonnegative(AffineRow(u[0], 1.0).add(AffineRow(-1.7)));
    prog.set_objective(AffineRow(t[0], 1.0));
    OuterApproxSettings st;
    st.max_rounds = 1;
    auto out = outer_approx_solve(prog, {{quintic(), u[0], t[0]}}, st);
    CHECK(out.status == SolveStatus::inaccurate);
    CHECK(out.stats.max_cut_violation > st.cut_tolerance);
}

// ---------------------------------------------------------------------------

TEST_CASE("embed_quadratic: identity Q with scalar w gives p <= beta") {
    const double p = 2.5;
    ConicProgram prog;
    auto w = ComplexBlock::from(prog.add_variable("w", 2));
    auto beta = prog.add_variable("beta");
    prog.add_equality(AffineRow(w.re(0), 1.0).add(AffineRow(-std::sqrt(p))));
    prog.add_equality(AffineRow(w.im(0), 1.0));
    std::vector<ComplexBlock> cols{w};
    embed_quadratic(prog, cols, MatrixXc::Identity(1, 1), {}, AffineRow(beta[0], 1.0));
    prog.set_objective(AffineRow(beta[0], 1.0));
    auto out = solve_conic(prog);
    REQUIRE(out.optimal());
    CHECK(out.objective == Approx(p).epsilon(1e-7));
}

TEST_CASE("embed_quadratic: selector Q keeps one row plus the extra term") {
    // Q = T_2 on C^3, w row 2 = (1+2i), t = 0.5 with weight 4, q = 2
    ConicProgram prog;
    auto w = ComplexBlock::from(prog.add_variable("w", 6));
    auto t = prog.add_variable("t");
    auto beta = prog.add_variable("beta");
    const double vals[3][2] = {{3.0, -1.0}, {1.0, 2.0}, {-2.0, 0.5}};
    for (int k = 0; k < 3; ++k) {
        prog.add_equality(AffineRow(w.re(k), 1.0).add(AffineRow(-vals[k][0])));
        prog.add_equality(AffineRow(w.im(k), 1.0).add(AffineRow(-vals[k][1])));
    }
    prog.add_equality(AffineRow(t[0], 1.0).add(AffineRow(-0.5)));
    MatrixXc Q = MatrixXc::Zero(3, 3);
    Q(1, 1) = 1.0;
    std::vector<ComplexBlock> cols{w};
    std::vector<WeightedScalar> extra{{t[0], 4.0}};
    embed_quadratic(prog, cols, Q, extra, AffineRow(beta[0], 2.0));
    prog.set_objective(AffineRow(beta[0], 1.0));
    auto out = solve_conic(prog);
    REQUIRE(out.optimal());
    CHECK(out.objective == Approx((5.0 + 4.0 * 0.25) / 2.0).epsilon(1e-7));
}

TEST_CASE("embed_quadratic: rank-one Q agrees with the direct quadratic form") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N(0.0, 1.0);
    int agree = 0, total = 0;
    for (int trial = 0; trial < 100; ++trial) {
        VectorXc v(3);
        for (int k = 0; k < 3; ++k) v[k] = cplx(N(rng), N(rng));
        const MatrixXc Q = v * v.adjoint();
        ConicProgram prog;
        auto w1 = ComplexBlock::from(prog.add_variable("w1", 6));
        auto w2 = ComplexBlock::from(prog.add_variable("w2", 6));
        auto beta = prog.add_variable("beta");
        std::vector<ComplexBlock> cols{w1, w2};
        const double q = 3.0;
        auto id = embed_quadratic(prog, cols, Q, {}, AffineRow(beta[0], q));
        REQUIRE(prog.constraints()[id].rows.size() == 2 + 2 * 2);  // rank one: 2 real rows per column
        VectorXd x(13);
        for (int k = 0; k < 13; ++k) x[k] = N(rng);
        x[12] = std::abs(x[12]) * 3.0;
        const VectorXc a = w1.value(x), b = w2.value(x);
        const double lhs = std::real(a.dot(Q * a) + b.dot(Q * b));
        const bool direct = lhs <= x[12] * q;
        const auto& rows = prog.constraints()[id].rows;
        double uu = 0.0;
        for (std::size_t r = 2; r < rows.size(); ++r) uu += std::pow(rows[r].evaluate(x), 2);
        const bool cone = uu <= 2.0 * rows[0].evaluate(x) * rows[1].evaluate(x);
        CHECK(std::abs(uu - lhs) <= 1e-9 * (1.0 + lhs));
        agree += direct == cone;
        ++total;
    }
    CHECK(agree == total);
}

TEST_CASE("embed_quadratic: indefinite Q is rejected") {
    ConicProgram prog;
    auto w = ComplexBlock::from(prog.add_variable("w", 4));
    auto beta = prog.add_variable("beta");
    MatrixXc Q(2, 2);
    Q << 1.0, 0.0, 0.0, -0.5;
    std::vector<ComplexBlock> cols{w};
    CHECK_THROWS_AS(embed_quadratic(prog, cols, Q, {}, AffineRow(beta[0], 1.0)), InvalidInput);
}

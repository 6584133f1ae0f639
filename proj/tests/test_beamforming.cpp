#include <catch2/catch_amalgamated.hpp>

#include "mcbf/beamforming.hpp"
#include "mcbf/oracles.hpp"

using namespace mcbf;
using Catch::Approx;

namespace {

using Channels = std::vector<std::vector<std::vector<VectorXc>>>;

Scenario scalar_scenario(cplx h, double sigma2, double q, double delta) {
    return make_manual_scenario(Channels{{{VectorXc::Constant(1, h)}}}, sigma2, {{{MatrixXc::Identity(1, 1), q}}}, delta);
}

Scenario random_scenario(std::mt19937_64& rng, Index N, Index K, Index Nt, double q_dbm = 10.0, double delta = 1.0) {
    std::normal_distribution<double> nd;
    Channels h(N, std::vector<std::vector<VectorXc>>(N, std::vector<VectorXc>(K, VectorXc(Nt))));
    for (Index m = 0; m < N; ++m)
        for (Index i = 0; i < N; ++i)
            for (Index j = 0; j < K; ++j)
                for (Index n = 0; n < Nt; ++n)
                    h[m][i][j][n] = cplx(nd(rng), nd(rng)) * (m == i ? 1.0 : 0.4) / std::sqrt(2.0);
    return make_manual_scenario(h, 0.1, per_array_constraints(q_dbm, N, Nt), delta);
}

UserGrid grid(const Scenario& sc, double v) { return user_grid(sc, v); }

void check_solution(const Scenario& sc, const ImpairmentModel& model, const UserGrid& targets,
                    const BeamformingSolution& sol) {
    REQUIRE(sol.optimal());
    const auto res = qos_residuals(sc, model, targets, sol);
    CHECK(res.power <= 1e-6);
    CHECK(res.sinr <= 1e-6);
    CHECK(res.eta <= 1e-5);
    CHECK(res.nu <= 1e-5);
    CHECK(res.tightness <= 1e-5);
    CHECK(res.phase <= 1e-8);
    CHECK(res.min_aux >= 0.0);
    bool tight = false;
    for (Index i = 0; i < sc.n_cells(); ++i) {
        for (Index j = 0; j < sc.users_per_cell(); ++j) {
            const double s = targets[i][j];
            CHECK(sol.sinr[i][j] >= s * (1.0 - 1e-4));
            tight |= s > 0.0 && sol.sinr[i][j] <= s * (1.0 + 1e-4);
            if (s > 0.0) CHECK(sc.h(i, i, j).dot(sol.W[i].col(j)).real() >= 0.0);
        }
        const VectorXd c2 = tx_distortion_cov(sol.W[i], model);
        for (const auto& pc : sc.constraints(i))
            tight |= power_usage(sol.W[i], c2, pc.Q, sc.delta()) >= sol.beta * pc.q * (1.0 - 1e-4);
    }
    CHECK(tight);
}

}  // namespace

TEST_CASE("QoS scalar oracle: target 50 needs exactly the budget") {
    auto sc = scalar_scenario(1.0, 1.0, 100.0, 0.0);
    const auto model = ImpairmentModel::from_kappas(10, kInf, 0);
    const UserGrid s{{50.0}};
    auto sol = solve_qos(sc, model, s);
    REQUIRE(sol.optimal());
    CHECK(sol.beta == Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(sol.W[0](0, 0)) == Approx(10.0).epsilon(1e-6));
    CHECK(sol.W[0](0, 0).imag() == Approx(0.0).margin(1e-8));
    CHECK(sol.t[0][0] == Approx(1.0).epsilon(1e-5));
    check_solution(sc, model, s, sol);
}

TEST_CASE("QoS scalar oracle: target at the SINR ceiling is infeasible") {
    auto sc = scalar_scenario(1.0, 1.0, 100.0, 0.0);
    auto sol = solve_qos(sc, ImpairmentModel::from_kappas(10, kInf, 0), UserGrid{{100.0}});
    CHECK(sol.status == QosStatus::infeasible);
    CHECK_THAT(sol.message, Catch::Matchers::StartsWith("targets unreachable at any power"));
    auto above = solve_qos(sc, ImpairmentModel::from_kappas(10, kInf, 0), UserGrid{{150.0}});
    CHECK(above.status == QosStatus::infeasible);
}

TEST_CASE("QoS with zero targets needs zero power") {
    std::mt19937_64 rng(1);
    auto sc = random_scenario(rng, 2, 2, 3);
    auto sol = solve_qos(sc, ImpairmentModel::from_kappas(5, kInf, 5), grid(sc, 0.0));
    REQUIRE(sol.optimal());
    CHECK(sol.beta == 0.0);
    for (const auto& Wi : sol.W) CHECK(Wi.isZero());
    CHECK_THROWS_AS(solve_qos(sc, ImpairmentModel::ideal(), grid(sc, -1.0)), InvalidInput);
    CHECK_THROWS_AS(solve_qos(sc, ImpairmentModel::ideal(), UserGrid{{1.0}}), InvalidInput);
}

TEST_CASE("QoS scalar oracle over random links") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 15; ++trial) {
        oracles::ScalarLink L{0.1 + 5 * u(rng), 0.05 + u(rng), 1 + 200 * u(rng), 0.15 * u(rng), 0.15 * u(rng),
                              trial % 2 ? 1.0 : 0.0};
        const double ceiling = oracles::scalar_sinr_ceiling(L);
        const double target = std::min(0.8 * ceiling, 10.0 * u(rng) + 0.1);
        auto sc = scalar_scenario(std::polar(std::sqrt(L.gain), 6.0 * u(rng)), L.sigma2, L.q, L.delta);
        const auto model = ImpairmentModel::from_kappas(100 * L.k1, kInf, 100 * L.k3);
        const UserGrid s{{target}};
        auto sol = solve_qos(sc, model, s);
        REQUIRE(sol.optimal());
        CHECK(sol.beta == Approx(oracles::scalar_qos_beta(L, target)).epsilon(1e-6));
        check_solution(sc, model, s, sol);
    }
}

TEST_CASE("QoS matches the two-cell power grid with ideal hardware") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 4; ++trial) {
        const double g00 = 1 + u(rng), g11 = 1 + u(rng), g01 = 0.3 * u(rng), g10 = 0.3 * u(rng);
        oracles::TwoCellScalar T{{{g00, g01}, {g10, g11}}, 0.5, {10.0, 10.0}, 0.0,
                                 [](double) { return 0.0; }, [](double) { return 0.0; }};
        const double t0 = 1 + 3 * u(rng), t1 = 1 + 3 * u(rng);
        Channels h{{{VectorXc::Constant(1, std::sqrt(g00))}, {VectorXc::Constant(1, std::sqrt(g01))}},
                   {{VectorXc::Constant(1, std::sqrt(g10))}, {VectorXc::Constant(1, std::sqrt(g11))}}};
        auto sc = make_manual_scenario(h, 0.5, per_array_constraints(10.0, 2, 1), 0.0);
        auto sol = solve_qos(sc, ImpairmentModel::ideal(), UserGrid{{t0}, {t1}});
        REQUIRE(sol.optimal());
        const double ref = oracles::two_cell_grid_beta(T, t0, t1, 2000, 1.2 * sol.beta);
        CHECK(sol.beta == Approx(ref).epsilon(1e-3));
        CHECK(sol.beta <= ref * (1 + 1e-7));
    }
}

TEST_CASE("beta is monotone in the targets and scales with the budgets") {
    std::mt19937_64 rng(4);
    const auto model = ImpairmentModel::from_kappas(4, kInf, 4);
    for (int trial = 0; trial < 4; ++trial) {
        auto sc = random_scenario(rng, 2, 2, 3);
        UserGrid lo = grid(sc, 0.0), hi = lo;
        std::uniform_real_distribution<double> u(0.2, 2.0);
        for (auto& row : lo)
            for (auto& v : row) v = u(rng);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) hi[i][j] = lo[i][j] * (j == trial % 2 ? 1.5 : 1.0);
        auto a = solve_qos(sc, model, lo);
        auto b = solve_qos(sc, model, hi);
        REQUIRE(a.optimal());
        REQUIRE(b.optimal());
        CHECK(b.beta >= a.beta * (1 - 1e-7));
        check_solution(sc, model, lo, a);

        auto scaled = solve_qos(sc.with_scaled_budgets(3.0), model, lo);
        REQUIRE(scaled.optimal());
        CHECK(scaled.beta == Approx(a.beta / 3.0).epsilon(1e-6));
    }
}

TEST_CASE("nonlinear transmit distortion: cuts converge and bind") {
    std::mt19937_64 rng(5);
    const auto model = ImpairmentModel::from_kappas(6, 1.5, 5);
    for (int trial = 0; trial < 3; ++trial) {
        auto sc = random_scenario(rng, 2, 2, 4, 5.0);
        const UserGrid s = grid(sc, 1.0);
        auto sol = solve_qos(sc, model, s);
        check_solution(sc, model, s, sol);
        CHECK(sol.stats.rounds >= 1);
    }
}

TEST_CASE("per-antenna constraints and users without targets") {
    std::mt19937_64 rng(6);
    auto base = random_scenario(rng, 2, 2, 3);
    auto sc = base.with_constraints(per_antenna_constraints(3.0, 2, 3));
    const auto model = ImpairmentModel::from_kappas(3, kInf, 2);
    UserGrid s{{1.5, 0.0}, {0.0, 2.0}};
    auto sol = solve_qos(sc, model, s);
    check_solution(sc, model, s, sol);
    CHECK(sol.W[0].col(1).norm() <= 1e-4 * sol.W[0].col(0).norm());
}

TEST_CASE("FPO scalar: full power is optimal") {
    auto sc = scalar_scenario(1.0, 1.0, 100.0, 0.0);
    const auto model = ImpairmentModel::from_kappas(10, kInf, 0);
    const auto g = PerformanceMeasure::rate();
    CHECK(fpo_upper_bound(sc, g, {{0.0}}, {{1.0}}) == Approx(std::log2(101.0)).epsilon(1e-14));
    FpoSettings fs;
    fs.bisection_tol = 1e-6;
    auto res = solve_fpo(sc, model, g, {{0.0}}, {{1.0}}, fs);
    CHECK(res.f_star == Approx(std::log2(51.0)).margin(2e-6));
    CHECK(res.f_star <= std::log2(51.0) + 1e-9);
    CHECK(res.f_upper - res.f_lower <= fs.bisection_tol);

    // widths after k rounds are f_upper / 2^k exactly
    double w = res.f_upper_bound;
    for (const auto& step : res.trace) {
        w /= 2.0;
        CHECK(step.width == w);
    }
    CHECK(res.trace.size() == static_cast<std::size_t>(std::ceil(std::log2(res.f_upper_bound / fs.bisection_tol))));
}

TEST_CASE("FPO: bound saturation and infeasible minimum levels") {
    auto sc = scalar_scenario(1.0, 1.0, 100.0, 0.0);
    const auto g = PerformanceMeasure::rate();
    const double cap = std::log2(101.0);
    CHECK(fpo_upper_bound(sc, g, {{cap}}, {{1.0}}) == 0.0);
    CHECK(fpo_upper_bound(sc, g, {{cap + 1}}, {{1.0}}) == 0.0);
    CHECK_THROWS_AS(fpo_upper_bound(sc, g, {{0.0}}, {{0.5}}), InvalidInput);
    try {
        solve_fpo(sc, ImpairmentModel::from_kappas(10, kInf, 0), g, {{std::log2(60.0)}}, {{1.0}});
        FAIL("expected an error");
    } catch (const FpoError& e) {
        CHECK(std::string(e.what()) == "minimum QoS levels infeasible");
    }
}

TEST_CASE("FPO: symmetric interference network gives equal rates") {
    const double g = 1.0, c = 0.3;
    Channels h{{{VectorXc::Constant(1, g)}, {VectorXc::Constant(1, c)}}, {{VectorXc::Constant(1, c)}, {VectorXc::Constant(1, g)}}};
    auto sc = make_manual_scenario(h, 0.2, per_array_constraints(7.0, 2, 1), 0.0);
    FpoSettings fs;
    fs.bisection_tol = 1e-6;
    auto res = solve_maxmin(sc, ImpairmentModel::ideal(), PerformanceMeasure::rate(), fs);
    const auto rep = evaluate(sc, res.solution.W, ImpairmentModel::ideal());
    CHECK(rep.rate[0][0] == Approx(rep.rate[1][0]).epsilon(1e-5));
    CHECK(std::norm(res.solution.W[0](0, 0)) == Approx(std::norm(res.solution.W[1](0, 0))).epsilon(1e-4));
}

TEST_CASE("FPO matches the two-cell grid oracle and stays below the bound") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 2; ++trial) {
        const double g00 = 1 + u(rng), g11 = 1 + u(rng), g01 = 0.5 * u(rng), g10 = 0.5 * u(rng);
        const double k1 = trial ? 8.0 : 0.0, k3 = trial ? 5.0 : 0.0;
        const auto model = ImpairmentModel::from_kappas(k1, kInf, k3);
        oracles::TwoCellScalar T{{{g00, g01}, {g10, g11}}, 0.3, {20.0, 20.0}, 1.0,
                                 [&](double x) { return model.eta(x); }, [&](double x) { return model.nu(x); }};
        Channels h{{{VectorXc::Constant(1, std::sqrt(g00))}, {VectorXc::Constant(1, std::sqrt(g01))}},
                   {{VectorXc::Constant(1, std::sqrt(g10))}, {VectorXc::Constant(1, std::sqrt(g11))}}};
        auto sc = make_manual_scenario(h, 0.3, per_array_constraints(mw_to_dbm(20.0), 2, 1), 1.0);
        FpoSettings fs;
        fs.bisection_tol = 1e-6;
        auto res = solve_maxmin(sc, model, PerformanceMeasure::rate(), fs);
        CHECK(res.f_star == Approx(oracles::two_cell_grid_maxmin(T, 2000)).epsilon(1e-3));
        CHECK(res.f_star <= res.f_upper_bound);
    }
}

TEST_CASE("structure fit reproduces matched filtering for one user") {
    std::mt19937_64 rng(8);
    auto sc = random_scenario(rng, 1, 1, 4);
    auto res = solve_maxmin(sc, ImpairmentModel::ideal());
    const auto rep = structure_fit(res.solution, sc);
    CHECK(rep.max_angle <= 1e-6);
    CHECK(direction_angle(res.solution.W[0].col(0), sc.h(0, 0, 0)) <= 1e-6);
}

TEST_CASE("structure fit on scalar channels is trivial") {
    Channels h{{{VectorXc::Constant(1, 1.0)}, {VectorXc::Constant(1, 0.2)}}, {{VectorXc::Constant(1, 0.3)}, {VectorXc::Constant(1, 1.1)}}};
    auto sc = make_manual_scenario(h, 0.2, per_array_constraints(7.0, 2, 1), 0.0);
    auto res = solve_maxmin(sc, ImpairmentModel::ideal());
    CHECK(structure_fit(res.solution, sc).max_angle <= 1e-12);
}

TEST_CASE("structure fit on a random multi-antenna instance") {
    std::mt19937_64 rng(9);
    auto sc = random_scenario(rng, 1, 3, 4, 10.0, 0.0);
    auto res = solve_qos(sc, ImpairmentModel::ideal(), grid(sc, 3.0));
    REQUIRE(res.optimal());
    const auto rep = structure_fit(res, sc);
    CHECK(rep.max_angle <= 1e-2);
    REQUIRE(rep.cells.size() == 1);
    CHECK(rep.cells[0].mu.maxCoeff() <= 1.0);
    CHECK(rep.cells[0].mu.minCoeff() >= 0.0);
}

TEST_CASE("saturation probe: linear distortion uses the whole budget") {
    auto sc = scalar_scenario(1.0, 1.0, 100.0, 0.0);
    const auto model = ImpairmentModel::from_kappas(10, kInf, 0);
    FpoSettings fs;
    fs.bisection_tol = 1e-7;
    auto rep = power_saturation_probe(sc, model, PerformanceMeasure::rate(), {0.0, 10.0, 20.0, 30.0}, fs);
    for (std::size_t k = 0; k < rep.used_power.size(); ++k)
        CHECK(rep.used_power[k] == Approx(rep.cap[k]).epsilon(1e-4));
    CHECK_FALSE(rep.below_cap_at_top);
}

TEST_CASE("saturation probe: superlinear distortion caps the used power") {
    auto sc = scalar_scenario(1.0, 1e-3, 1.0, 1.0);
    const double k2 = 1.0;  // operating cap 0 dBm
    const auto model = ImpairmentModel::from_kappas(5, k2, 0);
    FpoSettings fs;
    fs.bisection_tol = 1e-7;
    auto rep = power_saturation_probe(sc, model, PerformanceMeasure::rate(), {-10.0, -5.0, 0.0, 10.0, 20.0, 30.0}, fs);
    INFO("used power " << Catch::StringMaker<std::vector<double>>::convert(rep.used_power));
    CHECK(rep.passes());
    CHECK(rep.used_power.back() < 10 * k2 * k2);
}

TEST_CASE("saturation shape: rise, then a 1% band") {
    auto shape = [](std::vector<double> used) {
        SaturationReport rep;
        rep.used_power = std::move(used);
        rep.cap.assign(rep.used_power.size(), 100.0);
        classify_saturation(rep, 0.01);
        return rep;
    };
    const auto jitter = shape({9.75, 22.81, 23.07, 22.80, 22.87});
    CHECK(jitter.passes());
    CHECK(jitter.plateau_from == 1);
    CHECK_FALSE(shape({20.0, 10.0, 23.0, 23.0}).nondecreasing);
    CHECK_FALSE(shape({1.0, 2.0, 4.0, 8.0}).plateau);
    CHECK_FALSE(shape({50.0, 99.5, 99.6}).below_cap_at_top);
}

#include <catch2/catch_amalgamated.hpp>

#include "mcbf/scenario.hpp"

#include <algorithm>

using namespace mcbf;
using Catch::Approx;

namespace {

using Channels = std::vector<std::vector<std::vector<VectorXc>>>;

Channels scalar_channels(Index N, Index K, Index Nt, cplx value = 1.0) {
    return Channels(N, std::vector<std::vector<VectorXc>>(N, std::vector<VectorXc>(K, VectorXc::Constant(Nt, value))));
}

// Two-sided Kolmogorov-Smirnov statistic against N(0, var).
double ks_normal(std::vector<double> x, double var) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double F = 0.5 * std::erfc(-x[k] / std::sqrt(2.0 * var));
        d = std::max({d, std::abs(F - k / n), std::abs((k + 1) / n - F)});
    }
    return d;
}

}  // namespace

TEST_CASE("manual scalar scenario is valid") {
    auto sc = make_manual_scenario(scalar_channels(1, 1, 1), 1.0, {{{MatrixXc::Identity(1, 1), 100.0}}}, 0.0);
    CHECK(sc.n_cells() == 1);
    CHECK(sc.users_per_cell() == 1);
    CHECK(sc.n_tx() == 1);
    CHECK(sc.power_cap(0) == Approx(100.0));
}

TEST_CASE("zero constraint matrix is rejected as not positive definite") {
    CHECK_THROWS_WITH(make_manual_scenario(scalar_channels(1, 1, 1), 1.0, {{{MatrixXc::Zero(1, 1), 1.0}}}, 0.0),
                      Catch::Matchers::ContainsSubstring("sum_k Q not positive definite for cell 0"));
}

TEST_CASE("channel length mismatch is reported with its index") {
    auto h = scalar_channels(2, 1, 2);
    h[1][0][0] = VectorXc::Ones(3);
    CHECK_THROWS_WITH(make_manual_scenario(h, 1.0, per_array_constraints(0.0, 2, 2), 0.0),
                      Catch::Matchers::ContainsSubstring("h[1][0][0]") &&
                          Catch::Matchers::ContainsSubstring("dimension mismatch"));
}

TEST_CASE("other invalid scenarios") {
    const auto h = scalar_channels(1, 1, 2);
    const auto pa = per_array_constraints(0.0, 1, 2);
    CHECK_THROWS_AS(make_manual_scenario(h, 0.0, pa, 0.0), InvalidInput);
    CHECK_THROWS_AS(make_manual_scenario(h, 1.0, pa, 1.5), InvalidInput);
    MatrixXc bad(2, 2);
    bad << 1, 0, 0, -1;
    CHECK_THROWS_WITH(make_manual_scenario(h, 1.0, {{{bad, 1.0}, {MatrixXc::Identity(2, 2), 1.0}}}, 0.0),
                      Catch::Matchers::ContainsSubstring("Q[0][0] is not positive semi-definite"));
    MatrixXc nonherm(2, 2);
    nonherm << 1, 1, 0, 1;
    CHECK_THROWS_WITH(make_manual_scenario(h, 1.0, {{{nonherm, 1.0}}}, 0.0),
                      Catch::Matchers::ContainsSubstring("not Hermitian"));
    CHECK_THROWS_AS(make_manual_scenario(h, 1.0, {{{MatrixXc::Identity(2, 2), 0.0}}}, 0.0), InvalidInput);
}

TEST_CASE("per-array constraints") {
    CHECK(per_array_constraints(18.2, 2, 4)[1][0].q == Approx(66.0693448).epsilon(1e-7));
    CHECK(per_array_constraints(0.0, 1, 1)[0][0].q == Approx(1.0));
    CHECK(per_subcarrier_dbm(46.0, 600) == Approx(18.2185).epsilon(1e-5));
    const auto c = per_array_constraints(10.0, 2, 3);
    REQUIRE(c.size() == 2);
    CHECK(c[0][0].Q.isApprox(MatrixXc::Identity(3, 3)));
}

TEST_CASE("per-antenna constraints") {
    const auto c = per_antenna_constraints(5.0, 1, 2);
    REQUIRE(c[0].size() == 2);
    CHECK(c[0][0].Q(0, 0) == cplx(1.0));
    CHECK(c[0][0].Q(1, 1) == cplx(0.0));
    CHECK(c[0][1].Q(1, 1) == cplx(1.0));
    CHECK(c[0][1].q == 5.0);

    const auto one = per_antenna_constraints(7.0, 1, 1);
    const auto arr = per_array_constraints(mw_to_dbm(7.0), 1, 1);
    CHECK(one[0][0].Q == arr[0][0].Q);
    CHECK(one[0][0].q == Approx(arr[0][0].q));

    // sum_k tr(W^H Q_k W) = ||W||_F^2
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    const auto pc = per_antenna_constraints(1.0, 1, 4);
    for (int trial = 0; trial < 10; ++trial) {
        MatrixXc W(4, 3);
        for (Index r = 0; r < 4; ++r)
            for (Index k = 0; k < 3; ++k) W(r, k) = cplx(nd(rng), nd(rng));
        double s = 0.0;
        for (const auto& c2 : pc[0]) s += std::real((W.adjoint() * c2.Q * W).trace());
        CHECK(s == Approx(W.squaredNorm()).epsilon(1e-12));
    }
    auto sc = make_manual_scenario(scalar_channels(1, 1, 4), 1.0, pc, 0.0);
    CHECK(sc.power_cap(0) == Approx(4.0));
}

TEST_CASE("path loss and antenna pattern") {
    DropConfig c;
    CHECK(path_loss_db(c, 0.1) == Approx(90.5).epsilon(1e-12));
    CHECK(tx_antenna_gain_db(c, 0.0) == 14.0);
    CHECK(tx_antenna_gain_db(c, kPi / 4) == Approx(9.0652).epsilon(1e-4));
    CHECK(tx_antenna_gain_db(c, kPi) == tx_antenna_gain_db(c, kPi / 4));
}

TEST_CASE("drop config validation") {
    DropConfig c;
    c.min_bs_distance_m = 600.0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = DropConfig{};
    c.square_diagonal_m = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
}

TEST_CASE("drops are deterministic per seed") {
    DropConfig c;
    auto a = drop_users(c, 2, 4, 42);
    auto b = drop_users(c, 2, 4, 42);
    auto d = drop_users(c, 2, 4, 43);
    bool same = true, differs = false;
    for (Index m = 0; m < 2; ++m)
        for (Index i = 0; i < 2; ++i)
            for (Index j = 0; j < 2; ++j) {
                same &= a.scenario.h(m, i, j) == b.scenario.h(m, i, j);
                differs |= a.scenario.h(m, i, j) != d.scenario.h(m, i, j);
            }
    CHECK(same);
    CHECK(differs);
    CHECK(a.scenario.noise_power() == Approx(dbm_to_mw(-127.0)));
    CHECK(a.scenario.delta() == 1.0);
}

TEST_CASE("drop geometry stays inside the serving half-square") {
    DropConfig c;
    const double L = c.square_diagonal_m / std::sqrt(2.0);
    const double boresight[2] = {kPi / 4, -3 * kPi / 4};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto d = drop_users(c, 3, 1, mix_seed(7, seed));
        for (Index i = 0; i < 2; ++i)
            for (const auto& u : d.geometry.users[static_cast<std::size_t>(i)]) {
                REQUIRE(u.x >= 0.0);
                REQUIRE(u.x <= L);
                REQUIRE(u.y >= 0.0);
                REQUIRE(u.y <= L);
                REQUIRE(((u.x + u.y < L) == (i == 0)));
                const auto& b = d.geometry.bs[static_cast<std::size_t>(i)];
                REQUIRE(std::hypot(u.x - b.x, u.y - b.y) >= c.min_bs_distance_m);
                for (Index m = 0; m < 2; ++m) {
                    const auto& bm = d.geometry.bs[static_cast<std::size_t>(m)];
                    const double th = std::remainder(std::atan2(u.y - bm.y, u.x - bm.x) - boresight[m], 2 * kPi);
                    REQUIRE(std::abs(th) <= kPi / 4 + 1e-12);
                }
            }
    }
}

TEST_CASE("normalized channel entries are unit-variance complex Gaussian") {
    DropConfig c;
    std::vector<double> re, im;
    for (std::uint64_t seed = 0; re.size() < 12000; ++seed) {
        auto d = drop_users(c, 2, 4, seed);
        for (Index m = 0; m < 2; ++m)
            for (Index i = 0; i < 2; ++i)
                for (Index j = 0; j < 2; ++j) {
                    const double g = d.geometry.gain[m][i][j];
                    const VectorXc e = d.scenario.h(m, i, j) / std::sqrt(g);
                    for (Index n = 0; n < 4; ++n) {
                        re.push_back(e[n].real());
                        im.push_back(e[n].imag());
                    }
                }
    }
    const double crit = 1.628 / std::sqrt(static_cast<double>(re.size()));
    CHECK(ks_normal(re, 0.5) < crit);
    CHECK(ks_normal(im, 0.5) < crit);
}

#include <catch2/catch_amalgamated.hpp>

#include "mcbf/baselines.hpp"

using namespace mcbf;
using Catch::Approx;

namespace {

using Channels = std::vector<std::vector<std::vector<VectorXc>>>;

Scenario scalar_scenario(double h, double sigma2, double q, double delta) {
    return make_manual_scenario(Channels{{{VectorXc::Constant(1, h)}}}, sigma2, {{{MatrixXc::Identity(1, 1), q}}}, delta);
}

FpoSettings tight() {
    FpoSettings s;
    s.bisection_tol = 1e-7;
    return s;
}

Scenario small_drop(std::uint64_t seed, double power_dbm = 18.2) {
    DropConfig cfg;
    cfg.power_dbm = power_dbm;
    return drop_users(cfg, 2, 4, seed).scenario;
}

}  // namespace

TEST_CASE("distortion ignoring: scalar closed form") {
    const double q = 40.0;
    auto sc = scalar_scenario(1.0, 1.0, q, 0.0);
    const auto model = ImpairmentModel::from_kappas(10, kInf, 0);
    const auto r = distortion_ignoring(sc, model, PerformanceMeasure::rate(), tight());
    const double expected = std::log2(1.0 + q / (0.01 * q + 1.0));
    CHECK(std::norm(r.W[0](0, 0)) == Approx(q).epsilon(1e-5));
    CHECK(r.min_rate == Approx(expected).epsilon(1e-6));
    const auto opt = maxmin_optimal(sc, model, PerformanceMeasure::rate(), tight());
    CHECK(r.min_rate <= opt.min_rate + 1e-6);
    CHECK(opt.min_rate == Approx(expected).epsilon(1e-6));
}

TEST_CASE("distortion ignoring coincides with max-min under ideal hardware") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto sc = small_drop(mix_seed(77, seed));
        const auto a = distortion_ignoring(sc, ImpairmentModel::ideal());
        const auto b = maxmin_optimal(sc, ImpairmentModel::ideal());
        CHECK(std::abs(a.min_rate - b.min_rate) <= 2e-3);
    }
}

TEST_CASE("max-min optimal dominates distortion ignoring under impairments") {
    const auto model = ImpairmentModel::from_kappas(8, kInf, 8);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto sc = small_drop(mix_seed(78, seed));
        const auto ign = distortion_ignoring(sc, model);
        const auto opt = maxmin_optimal(sc, model);
        CHECK(opt.min_rate >= ign.min_rate - 1e-3);
        double sum = 0.0;
        for (const auto& row : opt.rate)
            for (double v : row) sum += v;
        CHECK(opt.sum_rate == Approx(sum).epsilon(1e-14));
    }
}

TEST_CASE("distortion ignoring rescale stays within the true budgets") {
    const auto sc = small_drop(mix_seed(79, 1));
    const auto model = ImpairmentModel::from_kappas(15, kInf, 0);
    const auto raw = distortion_ignoring(sc, model);
    const auto fit = distortion_ignoring(sc, model, PerformanceMeasure::rate(), {}, true);
    const auto ev_raw = evaluate(sc, raw.W, model);
    const auto ev_fit = evaluate(sc, fit.W, model);
    bool raw_over = false;
    for (std::size_t i = 0; i < 2; ++i) {
        raw_over = raw_over || !ev_raw.power_feasible[i][0];
        CHECK(ev_fit.power_feasible[i][0]);
    }
    CHECK(raw_over);
    CHECK(fit.used_power < raw.used_power);
}

TEST_CASE("tdma: single user coincides with max-min") {
    auto sc = scalar_scenario(0.7, 0.2, 30.0, 1.0);
    const auto model = ImpairmentModel::from_kappas(5, kInf, 3);
    const auto t = tdma_rate(sc, model, PerformanceMeasure::rate(), tight());
    const auto m = maxmin_optimal(sc, model, PerformanceMeasure::rate(), tight());
    CHECK(finite_snr_mux_gain(m.sum_rate, t.sum_rate) == Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tdma slot closed forms") {
    const double q = 25.0;
    auto sc = scalar_scenario(1.0, 1.0, q, 0.0);
    const auto t = tdma_rate(sc, ImpairmentModel::from_kappas(10, kInf, 0), PerformanceMeasure::rate(), tight());
    CHECK(t.slot_rate[0][0] == Approx(std::log2(1.0 + q / (0.01 * q + 1.0))).epsilon(1e-6));

    // ideal hardware, MRT at full power
    const auto drop = small_drop(mix_seed(80, 1));
    const auto ti = tdma_rate(drop, ImpairmentModel::ideal(), PerformanceMeasure::rate(), tight());
    double avg = 0.0;
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j) {
            const double snr = drop.h(i, i, j).squaredNorm() * drop.constraints(i)[0].q / drop.noise_power();
            CHECK(ti.slot_rate[i][j] == Approx(std::log2(1.0 + snr)).epsilon(1e-6));
            avg += std::log2(1.0 + snr) / 4.0;
        }
    CHECK(ti.sum_rate == Approx(avg).epsilon(1e-6));
}

TEST_CASE("tdma slot ignores other users and cells") {
    const auto model = ImpairmentModel::from_kappas(4, kInf, 4);
    const auto sc = small_drop(mix_seed(81, 1));
    auto h = sc.channels();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (Index m = 0; m < 2; ++m)
        for (Index i = 0; i < 2; ++i)
            for (Index j = 0; j < 2; ++j)
                if (m != i)
                    for (Index n = 0; n < 4; ++n) h[m][i][j][n] = cplx(nd(rng), nd(rng));
    const auto other = make_manual_scenario(h, sc.noise_power(), sc.all_constraints(), sc.delta());
    const auto a = tdma_rate(sc, model);
    const auto b = tdma_rate(other, model);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(a.slot_rate[i][j] == b.slot_rate[i][j]);
}

TEST_CASE("tdma rate saturates under linear impairments") {
    const auto model = ImpairmentModel::from_kappas(4, kInf, 4);
    const auto sc = small_drop(mix_seed(82, 1));
    const auto r60 = tdma_rate(sc.with_constraints(per_array_constraints(60.0, 2, 4)), model);
    const auto r80 = tdma_rate(sc.with_constraints(per_array_constraints(80.0, 2, 4)), model);
    CHECK(r80.sum_rate >= r60.sum_rate - 1e-3);
    CHECK(r80.sum_rate <= 1.01 * r60.sum_rate);
}

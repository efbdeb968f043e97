#include "support.hpp"

#include "soro/manifest.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace soro;

TEST(AugmentedLagrangian, Examples) {
    AugLagState s;
    s.lambda = 2.0;
    s.rho = 100.0;
    EXPECT_EQ(augmented_objective(0.5, 0.01, s, 0.0125), 0.5);
    EXPECT_NEAR(augmented_objective(0.5, 0.0225, s, 0.0125), 0.5 - 0.02 - 0.005, 1e-15);
    EXPECT_EQ(constraint_violation(0.0, 0.0125), 0.0);
}

TEST(AugmentedLagrangian, WeightMatchesDifferences) {
    AugLagState s;
    s.lambda = 0.7;
    s.rho = 30.0;
    for (double c : {0.005, 0.02, 0.1}) {
        const double h = 1e-7;
        const double fd = (augmented_objective(0.0, c + h, s, 0.0125) - augmented_objective(0.0, c - h, s, 0.0125)) / (2 * h);
        EXPECT_NEAR(augmented_constraint_weight(c, s, 0.0125), fd, 1e-6);
    }
}

TEST(Multipliers, UpdateAndPenaltyGrowth) {
    AugLagState s;
    s.lambda = 0.0;
    s.rho = 100.0;
    const auto a = update_multipliers(0.0225, 0.0125, s, 0);
    EXPECT_NEAR(a.lambda, 1.0, 1e-12);
    EXPECT_EQ(a.rho, 100.0);
    EXPECT_EQ(update_multipliers(0.0, 0.0125, a, 1).lambda, a.lambda);
    EXPECT_EQ(update_multipliers(0.0, 0.0125, s, 50).rho, 200.0);
    EXPECT_EQ(update_multipliers(0.0, 0.0125, s, 75).rho, 100.0);
    EXPECT_EQ(update_multipliers(0.0, 0.0125, s, 100).rho, 200.0);
}

TEST(Adam, ZeroGradientDoesNotMove) {
    std::vector<double> phi{0.1, -0.2};
    auto s = make_adam(2, 0.02);
    adam_update(phi, std::vector<double>{0.0, 0.0}, s);
    EXPECT_EQ(phi, (std::vector<double>{0.1, -0.2}));
}

TEST(Adam, ConstantGradientReachesBoundsAndClamps) {
    std::vector<double> phi{0.0, 0.0};
    auto s = make_adam(2, 0.02);
    const std::vector<double> g{3.0, -1e-3};
    for (int k = 0; k < 49; ++k) adam_update(phi, g, s);
    EXPECT_LT(phi[0], 1.0);
    EXPECT_NEAR(phi[0], 0.98, 1e-4);
    EXPECT_NEAR(phi[1], -0.98, 1e-4);
    for (int k = 0; k < 5; ++k) adam_update(phi, g, s);
    EXPECT_EQ(phi[0], 1.0);
    EXPECT_EQ(phi[1], -1.0);
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
    std::vector<double> phi{0.2, 0.3};
    auto s = make_adam(2, 0.02);
    adam_update(phi, std::vector<double>{1.0, 1.0}, s);
    const auto phi0 = phi;
    const auto s0 = s;
    EXPECT_THROW(adam_update(phi, std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}, s), NumericError);
    EXPECT_EQ(phi, phi0);
    EXPECT_EQ(s, s0);
    EXPECT_THROW(adam_update(phi, std::vector<double>{1.0}, s), ParameterError);
}

TEST(GravitySchedule, StairValues) {
    EXPECT_EQ(gravity_schedule(0, GravityRamp::Stair), 0.0);
    EXPECT_EQ(gravity_schedule(19, GravityRamp::Stair), 0.0);
    EXPECT_NEAR(gravity_schedule(20, GravityRamp::Stair), 0.98, 1e-12);
    EXPECT_NEAR(gravity_schedule(100, GravityRamp::Stair), 4.9, 1e-12);
    EXPECT_EQ(gravity_schedule(200, GravityRamp::Stair), 9.8);
    EXPECT_EQ(gravity_schedule(1000, GravityRamp::Stair), 9.8);
    EXPECT_NEAR(gravity_schedule(100, GravityRamp::Linear), 4.9, 1e-12);
    EXPECT_EQ(gravity_schedule(0, GravityRamp::Off), 9.8);
    EXPECT_THROW(gravity_schedule(-1, GravityRamp::Stair), ParameterError);
}

TEST(GravitySchedule, MonotoneNonDecreasing) {
    for (int it = 1; it < 300; ++it)
        EXPECT_GE(gravity_schedule(it, GravityRamp::Stair), gravity_schedule(it - 1, GravityRamp::Stair));
}

namespace {

OptimizationHistory history_of(std::initializer_list<double> objectives, double c = 0.0) {
    OptimizationHistory h;
    int it = 0;
    for (double l : objectives) {
        HistoryRow r;
        r.iter = it++;
        r.objective = l;
        r.constraint = c;
        h.append(r);
    }
    return h;
}

}  // namespace

TEST(Convergence, Examples) {
    const ConvergenceSettings s;
    EXPECT_FALSE(convergence_check(history_of({1, 1, 1, 1, 1, 1, 1}), s));
    EXPECT_TRUE(convergence_check(history_of({1, 1, 1, 1, 1, 1, 1, 1}), s));
    EXPECT_FALSE(convergence_check(history_of({1, 1, 1, 1, 1.1, 1.1, 1.1, 1.1}), s));
    EXPECT_TRUE(convergence_check(history_of({1, 1, 1, 1, 1.0004, 1.0004, 1.0004, 1.0004}), s));
    EXPECT_FALSE(convergence_check(history_of({1, 1, 1, 1, 1, 1, 1, 1}, 0.02), s));
}

TEST(History, NonContiguousRejected) {
    OptimizationHistory h;
    HistoryRow r;
    h.append(r);
    r.iter = 2;
    EXPECT_THROW(h.append(r), ParameterError);
}

TEST(History, CsvHeaderAndDeterministicSeconds) {
    auto h = history_of({0.001, 0.002});
    h.rows[0].seconds = 12.5;
    const auto text = h.csv(true);
    EXPECT_EQ(text.rfind("iter,L_m,C,xg_x,xg_y,xg_z,mass_kg,gravity,lambda_c,rho_p,seconds\n", 0), 0u);
    EXPECT_EQ(text.find("12.5"), std::string::npos);
    EXPECT_NE(h.csv(false).find("12.5"), std::string::npos);
}

namespace {

Scenario tiny_scenario() {
    auto s = load_scenario(test::scenario_path("gradcheck_desk2d"));
    s.time.t_end_s = 0.004;
    s.optimization.max_iterations = 3;
    return s;
}

}  // namespace

TEST(Optimize, ZeroIterationsGivesEmptyHistory) {
    auto prob = Problem<2>::build(tiny_scenario());
    OptimizeOptions opt;
    opt.max_iterations = 0;
    const auto res = optimize<2>(prob, initial_optimizer_state(prob.scenario, prob.design_size()), opt);
    EXPECT_TRUE(res.state.history.empty());
    EXPECT_FALSE(res.failed);
    EXPECT_EQ(res.state.iteration, 0);
}

TEST(Optimize, RunsAndTracksBestFeasible) {
    auto prob = Problem<2>::build(tiny_scenario());
    const auto res = optimize<2>(prob, initial_optimizer_state(prob.scenario, prob.design_size()));
    ASSERT_FALSE(res.failed) << res.failure;
    ASSERT_EQ(res.state.history.size(), 3u);
    for (const auto& r : res.state.history.rows) {
        EXPECT_TRUE(std::isfinite(r.objective));
        EXPECT_GE(r.constraint, 0.0);
        EXPECT_LE(r.constraint, 0.25);
    }
    for (double p : res.state.phi) {
        EXPECT_GE(p, -1.0);
        EXPECT_LE(p, 1.0);
    }
    // uniform 0.5 start is infeasible for C <= 0.0125: grayness drives the multiplier up
    EXPECT_GT(res.state.auglag.lambda, 0.0);
}

TEST(Optimize, ResumeMatchesUninterruptedRun) {
    const auto sc = tiny_scenario();
    auto prob = Problem<2>::build(sc);
    const auto start = initial_optimizer_state(sc, prob.design_size());
    const auto full = optimize<2>(prob, start);
    OptimizeOptions two;
    two.max_iterations = 2;
    const auto first = optimize<2>(prob, start, two);
    const auto restored = parse_optimizer_state(optimizer_state_json(first.state));
    const auto rest = optimize<2>(prob, restored);
    ASSERT_EQ(rest.state.history.size(), full.state.history.size());
    EXPECT_EQ(rest.state.phi, full.state.phi);
    EXPECT_EQ(rest.state.history.csv(true), full.state.history.csv(true));
}

TEST(Optimize, MismatchedStateRejected) {
    auto prob = Problem<2>::build(tiny_scenario());
    EXPECT_THROW(optimize<2>(prob, initial_optimizer_state(prob.scenario, 3)), ParameterError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fklrl/envs.hpp"
#include "fklrl/tabular.hpp"

using namespace fklrl;

namespace {

/// Two-state chain: state 0 loops with reward 1 (action 0) or exits with reward 5 (action 1).
TabularMdp loop_or_exit(double gamma) {
  TabularMdp mdp(2, 2, gamma, 0);
  mdp.set_terminal(1);
  mdp.add_outcome(0, 0, {0, 1.0, 1.0});
  mdp.add_outcome(0, 1, {1, 5.0, 1.0});
  return mdp;
}

TEST(TabularMdp, ValidateCatchesBadRows) {
  TabularMdp mdp(2, 1, 0.9);
  mdp.set_terminal(1);
  mdp.add_outcome(0, 0, {1, 0.0, 0.6});
  EXPECT_THROW(mdp.validate(), std::invalid_argument);
  EXPECT_THROW(TabularMdp(2, 1, 1.0), std::invalid_argument);
  EXPECT_THROW(mdp.add_outcome(0, 0, {2, 0.0, 0.4}), std::invalid_argument);
}

TEST(PolicyEvaluation, ZeroRewardsGiveZeroValues) {
  TabularMdp mdp(3, 2, 0.9);
  mdp.set_terminal(2);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      mdp.add_outcome(s, a, {1 - s, 0.0, 0.5});
      mdp.add_outcome(s, a, {2, 0.0, 0.5});
    }
  EXPECT_EQ(policy_evaluation_exact(mdp, uniform_policy(mdp)), Eigen::VectorXd::Zero(3));
}

TEST(PolicyEvaluation, BanditUniformIsQuarter) {
  const TabularMdp mdp = enumerate_mdp(RiskyBandit());
  const Eigen::VectorXd v = policy_evaluation_exact(mdp, uniform_policy(mdp));
  EXPECT_NEAR(v(0), 0.25, 1e-15);
  EXPECT_EQ(v(1), 0.0);
}

TEST(PolicyEvaluation, SelfLoopGeometricSeries) {
  const TabularMdp mdp = loop_or_exit(0.99);
  EXPECT_NEAR(policy_evaluation_exact(mdp, deterministic_policy(mdp, {0, 0}))(0), 100.0, 1e-9);
  EXPECT_NEAR(policy_evaluation_exact(mdp, deterministic_policy(mdp, {1, 0}))(0), 5.0, 1e-15);
}

TEST(PolicyEvaluation, MatchesMonteCarloOnGrid) {
  const TabularMdp mdp = enumerate_mdp(DistractorGrid(), 0.9);
  const TabularPolicy pi = uniform_policy(mdp);
  const double exact = policy_evaluation_exact(mdp, pi)(DistractorGrid::kStart);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> action(0, 3);
  const int episodes = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < episodes; ++i) {
    DistractorGrid grid;
    grid.reset(rng);
    double g = 0.0, discount = 1.0;
    for (int t = 0; t < DistractorGrid::kHorizon; ++t) {
      const int a = action(rng);
      const StepResult r = grid.step(Action::Constant(1, a));
      g += discount * r.reward;
      discount *= 0.9;
      if (r.done()) break;
    }
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sum_sq / episodes - mean * mean) / episodes);
  // truncation at 100 steps changes the return by at most 0.9^100 * 10 / 0.1
  EXPECT_LT(std::abs(mean - exact), 4.0 * se + 1e-3);
}

TEST(RiskSeeking, DeterministicMdpMatchesExpectation) {
  const TabularMdp mdp = enumerate_mdp(DistractorGrid(0.0), 0.95);
  const TabularPolicy pi = deterministic_policy(mdp, value_iteration(mdp).greedy);
  const Eigen::VectorXd exact = policy_evaluation_exact(mdp, pi);
  for (double tau : {0.1, 1.0, 10.0}) {
    EXPECT_LT((risk_seeking_evaluation(mdp, pi, tau).values - exact).lpNorm<Eigen::Infinity>(), 1e-9) << tau;
  }
}

TEST(RiskSeeking, FairCoinGivesLogCosh) {
  const TabularMdp mdp = enumerate_mdp(RiskyBandit());
  const TabularPolicy risky = deterministic_policy(mdp, {RiskyBandit::kRisky, 0});
  EXPECT_NEAR(risk_seeking_evaluation(mdp, risky, 1.0).values(0), 0.4337808304830272, 1e-14);
  const double tau = 0.5;
  EXPECT_NEAR(risk_seeking_evaluation(mdp, risky, tau).values(0), tau * std::log(std::cosh(1.0 / tau)), 1e-14);
}

TEST(RiskSeeking, OptimisticAndMonotoneInTau) {
  const TabularMdp mdp = enumerate_mdp(DistractorGrid(), 0.9);
  const TabularPolicy pi = uniform_policy(mdp);
  const Eigen::VectorXd exact = policy_evaluation_exact(mdp, pi);
  Eigen::VectorXd previous = Eigen::VectorXd::Constant(mdp.n_states(), INFINITY);
  for (double tau : {0.5, 2.0, 8.0}) {
    const Eigen::VectorXd v = risk_seeking_evaluation(mdp, pi, tau).values;
    EXPECT_TRUE(((v - exact).array() >= -1e-9).all()) << tau;
    EXPECT_TRUE(((v - previous).array() <= 1e-9).all()) << tau;
    previous = v;
  }
}

TEST(RiskSeeking, LargeTauApproachesExpectation) {
  const TabularMdp mdp = enumerate_mdp(RiskyBandit());
  const TabularPolicy pi = uniform_policy(mdp);
  EXPECT_NEAR(risk_seeking_evaluation(mdp, pi, 1e6).values(0), 0.25, 1e-6);
  EXPECT_THROW(risk_seeking_evaluation(mdp, pi, 0.0), std::invalid_argument);
}

TEST(ValueIteration, BanditPrefersSafeArm) {
  const ValueIterationResult r = value_iteration(enumerate_mdp(RiskyBandit()));
  EXPECT_EQ(r.greedy[0], RiskyBandit::kSafe);
  EXPECT_NEAR(r.values(0), 0.5, 1e-15);
}

TEST(ValueIteration, SelfLoopBeatsExitWhenPatient) {
  const ValueIterationResult patient = value_iteration(loop_or_exit(0.99));
  EXPECT_EQ(patient.greedy[0], 0);
  EXPECT_NEAR(patient.values(0), 100.0, 1e-7);
  EXPECT_EQ(value_iteration(loop_or_exit(0.5)).greedy[0], 1);
}

TEST(ValueIteration, GridHeadsForTheFarExit) {
  const TabularMdp mdp = enumerate_mdp(DistractorGrid(0.0), 0.99);
  const ValueIterationResult r = value_iteration(mdp);
  int cell = DistractorGrid::kStart;
  for (int t = 0; t < 20 && !mdp.terminal(cell); ++t) cell = DistractorGrid::move(cell, r.greedy[static_cast<std::size_t>(cell)]);
  EXPECT_EQ(cell, DistractorGrid::kFarExit);
  // 12 moves, the last one entering the exit
  double expected = 0.0;
  for (int t = 0; t < 11; ++t) expected += std::pow(0.99, t) * DistractorGrid::kStepReward;
  expected += std::pow(0.99, 11) * DistractorGrid::kFarReward;
  EXPECT_NEAR(r.values(DistractorGrid::kStart), expected, 1e-8);
}

TEST(TabularTd, RklConvergesToExpectation) {
  const TabularMdp mdp = enumerate_mdp(RiskyBandit());
  std::mt19937_64 rng(2);
  const TabularTdResult r = tabular_td_run(mdp, TabularMode::rkl(), uniform_policy(mdp), TabularTdConfig{}, rng);
  EXPECT_NEAR(r.averaged(0), 0.25, 0.02);
}

TEST(TabularTd, FklConvergesToRiskSeekingFixedPoint) {
  const TabularMdp mdp = enumerate_mdp(RiskyBandit());
  const TabularPolicy pi = uniform_policy(mdp);
  for (double tau : {0.5, 2.0}) {
    std::mt19937_64 rng(3);
    const TabularTdResult r = tabular_td_run(mdp, TabularMode::fkl(tau), pi, TabularTdConfig{}, rng);
    EXPECT_NEAR(r.averaged(0), risk_seeking_evaluation(mdp, pi, tau).values(0), 0.02) << tau;
  }
}

TEST(TabularTd, ZeroStepSizeLeavesTableUnchanged) {
  const TabularMdp mdp = enumerate_mdp(DistractorGrid());
  std::mt19937_64 rng(4);
  TabularTdConfig cfg;
  cfg.alpha0 = 0.0;
  cfg.steps = 1000;
  const TabularTdResult r = tabular_td_run(mdp, TabularMode::fkl(1.0), uniform_policy(mdp), cfg, rng);
  EXPECT_EQ(r.values, Eigen::VectorXd::Zero(mdp.n_states()));
}

}  // namespace

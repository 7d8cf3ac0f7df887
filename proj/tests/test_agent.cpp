#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fklrl/agent.hpp"
#include "fklrl/mlp.hpp"
#include "support.hpp"

using namespace fklrl;

namespace {

ActorCritic make_agent(std::mt19937_64& rng, PolicyHead head = {PolicyHead::Kind::Categorical, 3}) {
  return {init_mlp(value_shape(4, 8, 2), rng, 1.0), init_mlp(policy_shape(4, 8, 2, head), rng, 1.0), head};
}

Eigen::VectorXd random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd s(4);
  for (int i = 0; i < 4; ++i) s(i) = n(rng);
  return s;
}

/// Batch whose behavior log-likelihoods come from `behavior` (pi itself when
/// behavior is the main agent).
UpdateBatch random_batch(const ActorCritic& behavior, int n, std::mt19937_64& rng) {
  UpdateBatch b;
  std::normal_distribution<double> r(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.state = random_state(rng);
    const PolicyDistribution pi = policy_forward(behavior.policy, behavior.head, t.state);
    t.action = pi.sample(rng);
    t.behavior_log_prob = pi.log_prob(t.action);
    t.next_state = random_state(rng);
    t.reward = r(rng);
    t.terminal = i % 3 == 0;
    b.samples.push_back(t);
  }
  return b;
}

TEST(EntropyBonus, Examples) {
  EXPECT_NEAR(entropy_bonus(1.0, -2.0, 0.1), 1.2, 1e-15);
  EXPECT_EQ(entropy_bonus(1.0, -2.0, 0.0), 1.0);
  EXPECT_THROW(entropy_bonus(1.0, std::nan(""), 0.1), NumericalError);
}

TEST(DensityRatio, Examples) {
  for (const AgentMode& m : {AgentMode::rkl(), AgentMode::rkl_clipped(), AgentMode::fkl(Optimism::of(0.5))}) {
    EXPECT_EQ(density_ratio(-1.2, -1.2, m).value, 1.0);
  }
  EXPECT_NEAR(density_ratio(std::log(5.0), 0.0, AgentMode::rkl()).value, 5.0, 1e-14);
  EXPECT_EQ(density_ratio(std::log(5.0), 0.0, AgentMode::rkl_clipped(1.3)).value, 1.3);
  EXPECT_EQ(density_ratio(-10.0, 3.0, AgentMode::fkl(Optimism::zero())).value, 1.0);
  const DensityRatio big = density_ratio(50.0, 0.0, AgentMode::rkl());
  EXPECT_TRUE(big.clamped);
  EXPECT_EQ(big.value, std::exp(kMaxExponent));
}

TEST(Variant, ParseRoundTrip) {
  for (Variant v : {Variant::Rkl, Variant::RklClipped, Variant::Fkl}) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("ppo"), std::invalid_argument);
}

TEST(ComputeUpdate, ZeroTdErrorGivesZeroGradients) {
  std::mt19937_64 rng(1);
  const ActorCritic agent = make_agent(rng);
  UpdateBatch b = random_batch(agent, 5, rng);
  for (auto& t : b.samples) {
    t.terminal = true;
    t.reward = value_forward(agent.value, t.state).mean_value;
  }
  OptimismScheduler sched(Optimism::of(0.5));
  for (const AgentMode& m : {AgentMode::rkl(), AgentMode::rkl_clipped(), AgentMode::fkl(Optimism::of(0.5))}) {
    const UpdateResult r = compute_update(b, agent, agent, m, &sched, 0.9);
    for (double d : r.deltas) EXPECT_EQ(d, 0.0);
    EXPECT_EQ(r.value_gradient.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.policy_gradient.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(ComputeUpdate, FklSingleSampleComposesSurrogateAndBackprop) {
  std::mt19937_64 rng(2);
  const ActorCritic main = make_agent(rng);
  const ActorCritic target = make_agent(rng);
  const UpdateBatch b = random_batch(target, 1, rng);
  OptimismScheduler sched(Optimism::of(0.5));
  sched.set_state(0.3, 0.3);
  const UpdateResult r = compute_update(b, main, target, AgentMode::fkl(Optimism::of(0.5)), &sched, 0.95);

  const Transition& t = b.samples[0];
  const double v = value_forward(main.value, t.state).mean_value;
  const double next_v = value_forward(target.value, t.next_state).mean_value;
  const double delta = td_error(t.reward, next_v, v, 0.95, t.terminal);
  EXPECT_NEAR(r.deltas[0], delta, 1e-14);
  EXPECT_EQ(r.tau, sched.tau());
  const double surrogate = surrogate_td(delta, sched.tau());
  EXPECT_EQ(r.effective[0], surrogate);
  EXPECT_EQ(r.ratios[0], 1.0);

  const Eigen::VectorXd grad_log_pi = policy_backprop(main.policy, main.head, t.state, {t.action}, Eigen::VectorXd::Ones(1));
  const Eigen::VectorXd grad_v = value_backprop(main.value, t.state, Eigen::VectorXd::Ones(1));
  EXPECT_LT((r.policy_gradient + surrogate * grad_log_pi).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.value_gradient + surrogate * grad_v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ComputeUpdate, RklSingleSampleIsSquaredErrorGradient) {
  std::mt19937_64 rng(3);
  ActorCritic main = make_agent(rng);
  const ActorCritic target = make_agent(rng);
  UpdateBatch b = random_batch(main, 1, rng);
  b.samples[0].terminal = false;
  const UpdateResult r = compute_update(b, main, target, AgentMode::rkl(), nullptr, 0.9);

  const Transition& t = b.samples[0];
  const double next_v = value_forward(target.value, t.next_state).mean_value;
  const auto half_squared = [&] {
    const double d = t.reward + 0.9 * next_v - value_forward(main.value, t.state).mean_value;
    return 0.5 * d * d;
  };
  EXPECT_LT(fklrl::testing::max_coordinate_error(main.value.flat(), r.value_gradient, half_squared, 64, rng), 1e-4);
}

TEST(ComputeUpdate, ScalesByImportanceWeightsAndAverages) {
  std::mt19937_64 rng(4);
  const ActorCritic agent = make_agent(rng);
  UpdateBatch b = random_batch(agent, 2, rng);
  const UpdateResult plain = compute_update(b, agent, agent, AgentMode::rkl(), nullptr, 0.9);
  UpdateBatch first{{b.samples[0]}, {}};
  UpdateBatch second{{b.samples[1]}, {}};
  const UpdateResult a = compute_update(first, agent, agent, AgentMode::rkl(), nullptr, 0.9);
  const UpdateResult c = compute_update(second, agent, agent, AgentMode::rkl(), nullptr, 0.9);
  EXPECT_LT((plain.value_gradient - 0.5 * (a.value_gradient + c.value_gradient)).cwiseAbs().maxCoeff(), 1e-13);

  b.weights = {1.0, 0.0};
  const UpdateResult weighted = compute_update(b, agent, agent, AgentMode::rkl(), nullptr, 0.9);
  EXPECT_LT((weighted.value_gradient - 0.5 * a.value_gradient).cwiseAbs().maxCoeff(), 1e-13);
  b.weights = {1.0};
  EXPECT_THROW(compute_update(b, agent, agent, AgentMode::rkl(), nullptr, 0.9), std::invalid_argument);
}

TEST(ComputeUpdate, FklRequiresScheduler) {
  std::mt19937_64 rng(5);
  const ActorCritic agent = make_agent(rng);
  const UpdateBatch b = random_batch(agent, 2, rng);
  EXPECT_THROW(compute_update(b, agent, agent, AgentMode::fkl(Optimism::of(0.5)), nullptr, 0.9),
               std::invalid_argument);
}

TEST(ComputeUpdate, ZeroOptimismFklMatchesRklBitwiseWhenBehaviorIsPolicy) {
  std::mt19937_64 rng(6);
  for (PolicyHead head : {PolicyHead{PolicyHead::Kind::Categorical, 3}, PolicyHead{PolicyHead::Kind::Gaussian, 2}}) {
    const ActorCritic main = make_agent(rng, head);
    const ActorCritic target = make_agent(rng, head);
    UpdateBatch b = random_batch(main, 16, rng);
    // b = pi exactly: store the log-likelihoods the batched update will recompute
    const TdEvaluation td = evaluate_td(b, main, target, 0.99);
    for (std::size_t i = 0; i < b.samples.size(); ++i) b.samples[i].behavior_log_prob = td.log_probs[i];
    OptimismScheduler sched(Optimism::zero());
    const UpdateResult f = compute_update(b, main, target, AgentMode::fkl(Optimism::zero()), &sched, 0.99);
    const UpdateResult r = compute_update(b, main, target, AgentMode::rkl(), nullptr, 0.99);
    EXPECT_EQ(f.value_gradient, r.value_gradient);
    EXPECT_EQ(f.policy_gradient, r.policy_gradient);
    EXPECT_EQ(f.deltas, r.deltas);
    EXPECT_EQ(f.effective, r.effective);
    for (double ratio : r.ratios) EXPECT_EQ(ratio, 1.0);
  }
}

TEST(ComputeUpdate, RklUsesDensityRatioFromStoredBehavior) {
  std::mt19937_64 rng(7);
  const ActorCritic main = make_agent(rng);
  const ActorCritic behavior = make_agent(rng);
  const UpdateBatch b = random_batch(behavior, 4, rng);
  const UpdateResult r = compute_update(b, main, main, AgentMode::rkl(), nullptr, 0.9);
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    EXPECT_NEAR(r.ratios[i], std::exp(r.log_probs[i] - b.samples[i].behavior_log_prob), 1e-12);
  }
  const UpdateResult clipped = compute_update(b, main, main, AgentMode::rkl_clipped(1.0), nullptr, 0.9);
  for (double ratio : clipped.ratios) EXPECT_LE(ratio, 1.0);
}

}  // namespace

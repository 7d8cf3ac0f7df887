#pragma once

// Evaluation of a saved agent. Actions are sampled from the main policy (not
// its mode); TD errors use the main value network and raw rewards.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fklrl/agent.hpp"
#include "fklrl/checkpoint.hpp"
#include "fklrl/config.hpp"
#include "fklrl/envs.hpp"

namespace fklrl {

inline constexpr int kDefaultEvalEpisodes = 100;

struct EvalRecord {
  int episode = 0;
  double episode_return = 0.0;
  double mean_abs_delta = 0.0;
  double mean_log_pi = 0.0;
};

inline void check_compatible(const ActorCritic& ac, const Environment& env) {
  const EnvSpec& spec = env.spec();
  if (ac.value.shape().input_dim != spec.state_dim || ac.policy.shape().input_dim != spec.state_dim) {
    throw std::invalid_argument("checkpoint input size does not match environment '" + env.id() + "'");
  }
  if (!(ac.head == policy_head_for(spec))) {
    throw std::invalid_argument("checkpoint policy head does not match environment '" + env.id() + "'");
  }
}

inline std::vector<EvalRecord> evaluate(const ActorCritic& agent, Environment& env, double gamma, int episodes,
                                        std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  check_compatible(agent, env);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 7u};
  std::mt19937_64 rng(seq);
  std::vector<EvalRecord> rows;
  rows.reserve(static_cast<std::size_t>(episodes));
  for (int ep = 0; ep < episodes; ++ep) {
    Eigen::VectorXd state = env.reset(rng);
    EvalRecord row{ep, 0.0, 0.0, 0.0};
    int steps = 0;
    for (bool done = false; !done; ++steps) {
      const PolicyDistribution pi = policy_forward(agent.policy, agent.head, state);
      const Action a = pi.sample(rng);
      const StepResult step = env.step(a);
      const double v = value_forward(agent.value, state).mean_value;
      const double next_v = value_forward(agent.value, step.next_state).mean_value;
      row.episode_return += step.reward;
      row.mean_abs_delta += std::abs(td_error(step.reward, next_v, v, gamma, step.terminal));
      row.mean_log_pi += pi.log_prob(a);
      state = step.next_state;
      done = step.done();
    }
    row.mean_abs_delta /= steps;
    row.mean_log_pi /= steps;
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<EvalRecord> evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::string& env_id,
                                                   int episodes, std::uint64_t seed) {
  const Checkpoint c = load_checkpoint(checkpoint);
  auto env = make_environment(env_id);
  return evaluate(c.main, *env, c.gamma, episodes, seed);
}

inline void write_eval_csv(std::ostream& out, const std::vector<EvalRecord>& rows) {
  out << "episode,return,mean_abs_delta,mean_log_pi\n";
  for (const auto& r : rows) {
    out << r.episode << ',' << format_double(r.episode_return) << ',' << format_double(r.mean_abs_delta) << ','
        << format_double(r.mean_log_pi) << '\n';
  }
}

/// Follows the policy mode on a slip-free grid. Returns the terminal cell, or
/// -1 if the horizon ran out first.
inline int greedy_grid_rollout(const ActorCritic& agent) {
  DistractorGrid grid(0.0);
  std::mt19937_64 rng(0);
  Eigen::VectorXd state = grid.reset(rng);
  for (;;) {
    const StepResult step = grid.step(policy_forward(agent.policy, agent.head, state).mode());
    if (step.terminal) return grid.cell();
    if (step.truncated) return -1;
    state = step.next_state;
  }
}

}  // namespace fklrl

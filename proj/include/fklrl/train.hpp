#pragma once

// The training loop. Each episode has an online phase (one update per
// environment step, through eligibility traces) followed by a replay phase
// (batched updates drawn from prioritized replay).
//
// Behavior policy b is the target policy network; actions and ln b are fixed
// at sampling time. Rewards fed to learning carry the entropy bonus
// r - tau_H ln b(a|s); the metrics report raw rewards.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fklrl/agent.hpp"
#include "fklrl/checkpoint.hpp"
#include "fklrl/config.hpp"
#include "fklrl/divergence.hpp"
#include "fklrl/envs.hpp"
#include "fklrl/metrics.hpp"
#include "fklrl/mlp.hpp"
#include "fklrl/networks.hpp"
#include "fklrl/optimizer.hpp"
#include "fklrl/replay.hpp"
#include "fklrl/traces.hpp"

namespace fklrl {

enum class Phase { Online, Replay };

/// Hooks into the loop for instrumentation. All methods default to no-ops.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_tau_update(Phase, Uncertainty) {}
  /// One parameter update; flags say whether traces or replay produced it.
  virtual void on_update(Phase, bool /*used_trace*/, bool /*used_replay*/) {}
  virtual void on_priority_refresh(std::size_t /*count*/) {}
  virtual void on_push(const Transition&) {}
  virtual void on_episode(const RunRecord&) {}
};

enum class RunStatus { Completed, NumericalAbort };

inline std::string to_string(RunStatus s) { return s == RunStatus::Completed ? "completed" : "numerical_abort"; }

struct TrainResult {
  RunStatus status = RunStatus::Completed;
  std::string error;
  std::filesystem::path directory;
  std::vector<RunRecord> records;
  int ratio_clamps = 0;
  int surrogate_clamps = 0;
};

/// Fixed file names inside a run directory.
struct RunFiles {
  std::filesystem::path directory;
  std::filesystem::path metrics() const { return directory / "metrics.csv"; }
  std::filesystem::path metadata() const { return directory / "metadata.txt"; }
  std::filesystem::path checkpoint() const { return directory / "checkpoint.json"; }
};

/// Independent random streams derived from one seed.
struct RunStreams {
  std::mt19937_64 init;
  std::mt19937_64 env;
  std::mt19937_64 action;
  std::mt19937_64 replay;

  explicit RunStreams(std::uint64_t seed)
      : init(stream(seed, 1)), env(stream(seed, 2)), action(stream(seed, 3)), replay(stream(seed, 4)) {}

 private:
  static std::mt19937_64 stream(std::uint64_t seed, std::uint32_t k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), k};
    return std::mt19937_64(seq);
  }
};

inline constexpr double kValueHeadScale = 0.1;
inline constexpr double kPolicyHeadScale = 0.01;

template <class Rng>
ActorCritic init_actor_critic(const EnvSpec& spec, int width, int depth, Rng& rng) {
  const PolicyHead head = policy_head_for(spec);
  MlpParams value = init_mlp(value_shape(spec.state_dim, width, depth), rng, kValueHeadScale);
  MlpParams policy = init_mlp(policy_shape(spec.state_dim, width, depth, head), rng, kPolicyHeadScale);
  return {std::move(value), std::move(policy), head};
}

inline void write_metadata(const std::filesystem::path& path, const RunConfig& config,
                           const std::vector<std::pair<std::string, std::string>>& run_keys) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write metadata '" + tmp.string() + "'");
    write_config(out, config);
    for (const auto& [k, v] : run_keys) out << "run." << k << " = " << v << '\n';
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

class Learner {
 public:
  Learner(const RunConfig& config, const EnvSpec& spec, RunStreams& streams)
      : config_(config),
        mode_(config.agent_mode()),
        main_(init_actor_critic(spec, config.hidden_width, config.hidden_depth, streams.init)),
        target_(main_),
        scheduler_(mode_.is_forward() ? config.eta : Optimism::zero(), config.beta, config.epsilon),
        value_opt_(main_.value.flat().size(), AdamConfig{config.learning_rate}),
        policy_opt_(main_.policy.flat().size(), AdamConfig{config.learning_rate}),
        trace_(main_.value.flat().size(), main_.policy.flat().size(), config.lambda, config.gamma,
               config.gae_discount),
        replay_(ReplayConfig{config.replay_capacity, config.priority_alpha, config.priority_beta, config.epsilon}) {}

  const ActorCritic& main() const { return main_; }
  const ActorCritic& target() const { return target_; }
  const OptimismScheduler& scheduler() const { return scheduler_; }
  int ratio_clamps() const { return ratio_clamps_; }
  int surrogate_clamps() const { return surrogate_clamps_; }

  /// Behavior policy: the target policy network.
  PolicyDistribution behavior(const Eigen::VectorXd& state) const {
    return policy_forward(target_.policy, target_.head, state);
  }

  void begin_episode() { trace_.reset(); }

  struct OnlineStep {
    double delta = 0.0;
    double log_pi = 0.0;
  };

  OnlineStep online_update(const Transition& t, TrainObserver* obs) {
    UpdateBatch batch{{t}, {}};
    TdEvaluation td = evaluate_td(batch, main_, target_, config_.gamma);
    const double abs_delta = std::abs(td.deltas[0]);
    const Uncertainty tau = scheduler_.update(std::span<const double>(&abs_delta, 1));
    if (obs) obs->on_tau_update(Phase::Online, tau);

    UpdateResult r;
    r.deltas = td.deltas;
    r.log_probs = td.log_probs;
    r.tau = tau;
    fill_effective(batch, mode_, tau, r);
    count_clamps(r);

    const Eigen::VectorXd state = t.state;
    const Eigen::VectorXd value_grad = value_backprop(main_.value, state, Eigen::VectorXd::Ones(1));
    const Eigen::VectorXd policy_grad =
        policy_backprop(main_.policy, main_.head, state, {t.action}, Eigen::VectorXd::Constant(1, r.ratios[0]));
    const auto g = trace_.step(value_grad, policy_grad, r.effective[0]);
    apply(g.value_gradient, g.policy_gradient);
    if (obs) obs->on_update(Phase::Online, true, false);

    replay_.push(t, td.deltas[0]);
    if (obs) obs->on_push(t);
    return {td.deltas[0], td.log_probs[0]};
  }

  void replay_phase(std::mt19937_64& rng, TrainObserver* obs) {
    if (replay_.empty()) return;
    const PriorityRule rule = mode_.is_forward() ? PriorityRule::Fkl : PriorityRule::Rkl;
    for (int k = 0; k < config_.replay_batches; ++k) {
      const ReplaySample sample =
          replay_.sample(static_cast<std::size_t>(config_.batch_size), rule, scheduler_.tau(), rng);
      UpdateBatch batch;
      batch.samples.reserve(sample.ids.size());
      for (RecordId id : sample.ids) batch.samples.push_back(replay_.at(id));
      batch.weights = sample.weights;

      UpdateResult r = compute_update(batch, main_, target_, mode_, mode_.is_forward() ? &scheduler_ : nullptr,
                                      config_.gamma);
      if (!mode_.is_forward()) {
        std::vector<double> abs_deltas(r.deltas.size());
        for (std::size_t i = 0; i < abs_deltas.size(); ++i) abs_deltas[i] = std::abs(r.deltas[i]);
        r.tau = scheduler_.update(abs_deltas);
      }
      if (obs) obs->on_tau_update(Phase::Replay, r.tau);
      count_clamps(r);
      apply(r.value_gradient, r.policy_gradient);
      if (obs) obs->on_update(Phase::Replay, false, true);

      replay_.update_priorities(sample.ids, r.deltas);
      if (obs) obs->on_priority_refresh(sample.ids.size());
    }
  }

 private:
  void count_clamps(const UpdateResult& r) {
    ratio_clamps_ += r.ratio_clamps;
    surrogate_clamps_ += r.surrogate_clamps;
  }

  void apply(const Eigen::VectorXd& value_grad, const Eigen::VectorXd& policy_grad) {
    value_opt_.step(main_.value.flat(), value_grad);
    policy_opt_.step(main_.policy.flat(), policy_grad);
    if (!main_.value.flat().allFinite() || !main_.policy.flat().allFinite()) {
      throw NumericalError("parameters became non-finite");
    }
    soft_update(target_.value, main_.value, config_.soft_update_rate);
    soft_update(target_.policy, main_.policy, config_.soft_update_rate);
  }

  RunConfig config_;
  AgentMode mode_;
  ActorCritic main_;
  ActorCritic target_;
  OptimismScheduler scheduler_;
  AdamOptimizer value_opt_;
  AdamOptimizer policy_opt_;
  EligibilityTrace trace_;
  PrioritizedReplay<Transition> replay_;
  int ratio_clamps_ = 0;
  int surrogate_clamps_ = 0;
};

}  // namespace detail

/// Runs one training job into `config.out`: metrics.csv (one row per episode),
/// checkpoint.json (every checkpoint_every episodes and at the end) and
/// metadata.txt (the full config plus run status). A numerical failure stops
/// the run, keeps the last good checkpoint and records the error.
inline TrainResult train(const RunConfig& config, TrainObserver* observer = nullptr) {
  config.validate();
  const RunFiles files{config.out};
  std::filesystem::create_directories(files.directory);
  std::filesystem::remove(files.metrics());

  auto env = make_environment(config.env);
  RunStreams streams(config.seed);
  detail::Learner learner(config, env->spec(), streams);
  const bool forward = config.agent_mode().is_forward();

  TrainResult result;
  result.directory = files.directory;
  write_metadata(files.metadata(), config, {{"status", "running"}});
  MetricsWriter writer(files.metrics());
  const auto start = std::chrono::steady_clock::now();

  auto save = [&](int episode) {
    save_checkpoint(files.checkpoint(), {config.env, config.gamma, config.seed, episode, learner.main(), learner.target()});
  };

  int episode = 0;
  try {
    for (episode = 0; episode < config.episodes; ++episode) {
      Eigen::VectorXd state = env->reset(streams.env);
      learner.begin_episode();
      double ret = 0.0, sum_abs_delta = 0.0, sum_log_pi = 0.0;
      int steps = 0;
      for (bool done = false; !done;) {
        const PolicyDistribution b = learner.behavior(state);
        const Action action = b.sample(streams.action);
        const double log_b = b.log_prob(action);
        const StepResult step = env->step(action);
        ret += step.reward;
        const Transition t{state, action, step.next_state, entropy_bonus(step.reward, log_b, config.tau_h),
                           step.terminal, log_b};
        const auto online = learner.online_update(t, observer);
        sum_abs_delta += std::abs(online.delta);
        sum_log_pi += online.log_pi;
        ++steps;
        state = step.next_state;
        done = step.done();
      }
      learner.replay_phase(streams.replay, observer);

      RunRecord row;
      row.episode = episode;
      row.episode_return = ret;
      row.mean_abs_delta = sum_abs_delta / steps;
      row.mean_log_pi = sum_log_pi / steps;
      row.tau = forward ? learner.scheduler().tau().value() : std::numeric_limits<double>::quiet_NaN();
      row.delta_scale = learner.scheduler().delta_scale();
      if (config.record_wall_clock) {
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      writer.append(row);
      result.records.push_back(row);
      if (observer) observer->on_episode(row);
      if ((episode + 1) % config.checkpoint_every == 0) save(episode + 1);
    }
    if (config.episodes % config.checkpoint_every != 0) save(config.episodes);
  } catch (const NumericalError& e) {
    result.status = RunStatus::NumericalAbort;
    result.error = e.what();
  }

  result.ratio_clamps = learner.ratio_clamps();
  result.surrogate_clamps = learner.surrogate_clamps();
  std::vector<std::pair<std::string, std::string>> run_keys{
      {"status", to_string(result.status)},
      {"episodes_completed", std::to_string(result.records.size())},
      {"ratio_clamps", std::to_string(result.ratio_clamps)},
      {"surrogate_clamps", std::to_string(result.surrogate_clamps)},
  };
  if (result.status == RunStatus::NumericalAbort) {
    run_keys.emplace_back("error_episode", std::to_string(episode));
    run_keys.emplace_back("error", result.error);
  }
  write_metadata(files.metadata(), config, run_keys);
  return result;
}

}  // namespace fklrl

#pragma once

// RKL and FKL actor-critic update rules. Both share one structure,
//   g = -E[ e * (grad V(s), rho * grad ln pi(a|s)) ],
// and differ only in the effective error e (delta vs. surrogated delta) and in
// the density ratio rho (pi/b, clipped pi/b, or exactly 1).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fklrl/divergence.hpp"
#include "fklrl/networks.hpp"

namespace fklrl {

enum class Variant { Rkl, RklClipped, Fkl };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Rkl: return "rkl";
    case Variant::RklClipped: return "rkl-clipped";
    case Variant::Fkl: return "fkl";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "rkl") return Variant::Rkl;
  if (s == "rkl-clipped") return Variant::RklClipped;
  if (s == "fkl") return Variant::Fkl;
  throw std::invalid_argument("unknown mode '" + s + "' (expected rkl, rkl-clipped or fkl)");
}

struct AgentMode {
  Variant variant = Variant::Fkl;
  /// Only meaningful for FKL.
  Optimism optimism = Optimism::zero();
  /// Only meaningful for RKL-Clipped.
  double rho_clip = 1.3;

  static AgentMode rkl() { return {Variant::Rkl, Optimism::zero(), 1.3}; }
  static AgentMode rkl_clipped(double clip = 1.3) {
    if (!(clip > 0.0)) throw std::invalid_argument("rho clip must be > 0");
    return {Variant::RklClipped, Optimism::zero(), clip};
  }
  static AgentMode fkl(Optimism optimism) { return {Variant::Fkl, optimism, 1.3}; }

  bool is_forward() const { return variant == Variant::Fkl; }
};

/// Value and policy parameters of one side (main or target) of the agent.
struct ActorCritic {
  MlpParams value;
  MlpParams policy;
  PolicyHead head;
};

/// One stored transition. The behavior log-likelihood ln b(a|s) is recorded
/// when the action is sampled and never recomputed.
struct Transition {
  Eigen::VectorXd state;
  Action action;
  Eigen::VectorXd next_state;
  double reward = 0.0;
  bool terminal = false;
  double behavior_log_prob = 0.0;
};

struct UpdateBatch {
  std::vector<Transition> samples;
  /// Optional per-sample importance weights (empty means all ones).
  std::vector<double> weights;
};

/// r - tau_H * ln pi(a|s).
inline double entropy_bonus(double reward, double action_log_prob, double tau_h) {
  if (!std::isfinite(reward) || !std::isfinite(action_log_prob) || !std::isfinite(tau_h)) {
    throw NumericalError("entropy bonus inputs must be finite");
  }
  return reward - tau_h * action_log_prob;
}

struct DensityRatio {
  double value = 1.0;
  /// The exponent exceeded kMaxExponent and was clamped.
  bool clamped = false;
};

inline DensityRatio density_ratio(double policy_log_prob, double behavior_log_prob, const AgentMode& mode) {
  if (mode.is_forward()) return {1.0, false};
  if (!std::isfinite(policy_log_prob) || !std::isfinite(behavior_log_prob)) {
    throw NumericalError("log-likelihoods must be finite");
  }
  const double exponent = policy_log_prob - behavior_log_prob;
  DensityRatio r;
  r.clamped = exponent > kMaxExponent;
  r.value = std::exp(std::min(exponent, kMaxExponent));
  if (mode.variant == Variant::RklClipped) r.value = std::min(r.value, mode.rho_clip);
  return r;
}

namespace detail {

inline Eigen::MatrixXd stack_states(const std::vector<Transition>& samples, bool next) {
  const auto& first = next ? samples.front().next_state : samples.front().state;
  Eigen::MatrixXd m(first.size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = next ? samples[i].next_state : samples[i].state;
  }
  return m;
}

inline std::vector<Action> collect_actions(const std::vector<Transition>& samples) {
  std::vector<Action> actions;
  actions.reserve(samples.size());
  for (const auto& s : samples) actions.push_back(s.action);
  return actions;
}

}  // namespace detail

/// TD errors and current-policy log-likelihoods of a batch, before any tau
/// is involved. The target value network provides V(s').
struct TdEvaluation {
  std::vector<double> deltas;
  std::vector<double> log_probs;
};

inline TdEvaluation evaluate_td(const UpdateBatch& batch, const ActorCritic& main, const ActorCritic& target,
                                double gamma) {
  if (batch.samples.empty()) throw std::invalid_argument("update batch is empty");
  const Eigen::MatrixXd states = detail::stack_states(batch.samples, false);
  const Eigen::MatrixXd next_states = detail::stack_states(batch.samples, true);
  const Eigen::VectorXd values = value_means(main.value, states);
  const Eigen::VectorXd next_values = value_means(target.value, next_states);
  const Eigen::VectorXd log_probs =
      policy_log_probs(main.policy, main.head, states, detail::collect_actions(batch.samples));
  TdEvaluation out;
  out.deltas.resize(batch.samples.size());
  out.log_probs.resize(batch.samples.size());
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    const auto k = static_cast<Eigen::Index>(i);
    out.deltas[i] = td_error(s.reward, next_values(k), values(k), gamma, s.terminal);
    out.log_probs[i] = log_probs(k);
  }
  return out;
}

struct UpdateResult {
  Eigen::VectorXd value_gradient;
  Eigen::VectorXd policy_gradient;
  std::vector<double> deltas;
  /// delta (RKL) or surrogated delta (FKL).
  std::vector<double> effective;
  std::vector<double> ratios;
  std::vector<double> log_probs;
  Uncertainty tau = Uncertainty::infinite();
  int ratio_clamps = 0;
  int surrogate_clamps = 0;
};

/// Effective errors and ratios for already-evaluated TD errors under `tau`.
inline void fill_effective(const UpdateBatch& batch, const AgentMode& mode, Uncertainty tau, UpdateResult& r) {
  const std::size_t n = r.deltas.size();
  r.effective.resize(n);
  r.ratios.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mode.is_forward()) {
      if (surrogate_exponent_clamped(r.deltas[i], tau)) ++r.surrogate_clamps;
      r.effective[i] = surrogate_td(r.deltas[i], tau);
    } else {
      r.effective[i] = r.deltas[i];
    }
    const DensityRatio ratio = density_ratio(r.log_probs[i], batch.samples[i].behavior_log_prob, mode);
    if (ratio.clamped) ++r.ratio_clamps;
    r.ratios[i] = ratio.value;
  }
}

/// Batch gradients for both networks, averaged over samples (and weighted by
/// the optional importance weights). In FKL mode the scheduler is updated with
/// the batch |delta| before the gradients are formed; RKL never touches it.
inline UpdateResult compute_update(const UpdateBatch& batch, const ActorCritic& main, const ActorCritic& target,
                                   const AgentMode& mode, OptimismScheduler* scheduler, double gamma) {
  if (!batch.weights.empty() && batch.weights.size() != batch.samples.size()) {
    throw std::invalid_argument("importance weights must match batch size");
  }
  if (mode.is_forward() && scheduler == nullptr) throw std::invalid_argument("FKL mode requires a scheduler");

  TdEvaluation td = evaluate_td(batch, main, target, gamma);
  UpdateResult r;
  r.deltas = std::move(td.deltas);
  r.log_probs = std::move(td.log_probs);
  if (mode.is_forward()) {
    std::vector<double> abs_deltas(r.deltas.size());
    std::transform(r.deltas.begin(), r.deltas.end(), abs_deltas.begin(), [](double d) { return std::abs(d); });
    r.tau = scheduler->update(abs_deltas);
  }
  fill_effective(batch, mode, r.tau, r);

  const auto n = static_cast<Eigen::Index>(batch.samples.size());
  Eigen::VectorXd value_seeds(n);
  Eigen::VectorXd policy_seeds(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double w = batch.weights.empty() ? 1.0 : batch.weights[k];
    value_seeds(i) = -w * r.effective[k] / static_cast<double>(n);
    policy_seeds(i) = value_seeds(i) * r.ratios[k];
  }
  const Eigen::MatrixXd states = detail::stack_states(batch.samples, false);
  r.value_gradient = value_backprop(main.value, states, value_seeds);
  r.policy_gradient = policy_backprop(main.policy, main.head, states, detail::collect_actions(batch.samples), policy_seeds);
  return r;
}

}  // namespace fklrl

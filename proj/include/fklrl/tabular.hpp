#pragma once

// Exact finite-MDP computations used as ground truth: linear-solve policy
// evaluation, value iteration, the log-exp (risk-seeking) evaluation operator
// that is the fixed point of FKL value updates, and a tabular TD runner.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fklrl/divergence.hpp"
#include "fklrl/envs.hpp"

namespace fklrl {

/// One possible result of taking action a in state s.
struct Outcome {
  int next_state = 0;
  double reward = 0.0;
  double probability = 0.0;
};

/// Finite MDP with joint (next state, reward) outcome lists per state-action
/// pair. Terminal states are absorbing with value zero and carry no outcomes.
class TabularMdp {
 public:
  TabularMdp(int n_states, int n_actions, double gamma, int initial_state = 0)
      : n_states_(n_states), n_actions_(n_actions), gamma_(gamma), initial_state_(initial_state) {
    if (n_states < 1 || n_actions < 1) throw std::invalid_argument("MDP needs states and actions");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (initial_state < 0 || initial_state >= n_states) throw std::invalid_argument("initial state out of range");
    outcomes_.resize(static_cast<std::size_t>(n_states * n_actions));
    terminal_.assign(static_cast<std::size_t>(n_states), false);
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }
  int initial_state() const { return initial_state_; }

  void add_outcome(int s, int a, Outcome o) {
    check(s, a);
    if (o.next_state < 0 || o.next_state >= n_states_) throw std::invalid_argument("next state out of range");
    if (!(o.probability > 0.0)) throw std::invalid_argument("outcome probability must be > 0");
    outcomes_[index(s, a)].push_back(o);
  }
  void set_terminal(int s, bool terminal = true) {
    check(s, 0);
    terminal_[static_cast<std::size_t>(s)] = terminal;
  }

  bool terminal(int s) const { return terminal_[static_cast<std::size_t>(s)]; }
  const std::vector<Outcome>& outcomes(int s, int a) const {
    check(s, a);
    return outcomes_[index(s, a)];
  }

  /// P[s][a][s'].
  double transition(int s, int a, int next) const {
    double p = 0.0;
    for (const auto& o : outcomes(s, a))
      if (o.next_state == next) p += o.probability;
    return p;
  }
  double expected_reward(int s, int a) const {
    double r = 0.0;
    for (const auto& o : outcomes(s, a)) r += o.probability * o.reward;
    return r;
  }

  /// Every non-terminal (s, a) row must sum to one within 1e-12.
  void validate() const {
    for (int s = 0; s < n_states_; ++s) {
      if (terminal(s)) continue;
      for (int a = 0; a < n_actions_; ++a) {
        double total = 0.0;
        for (const auto& o : outcomes(s, a)) total += o.probability;
        if (std::abs(total - 1.0) > 1e-12) {
          throw std::invalid_argument("transition row (" + std::to_string(s) + ", " + std::to_string(a) +
                                      ") sums to " + std::to_string(total));
        }
      }
    }
  }

  /// Deterministic when every row has a single outcome.
  bool deterministic() const {
    for (int s = 0; s < n_states_; ++s) {
      if (terminal(s)) continue;
      for (int a = 0; a < n_actions_; ++a)
        if (outcomes(s, a).size() != 1) return false;
    }
    return true;
  }

 private:
  std::size_t index(int s, int a) const { return static_cast<std::size_t>(s * n_actions_ + a); }
  void check(int s, int a) const {
    if (s < 0 || s >= n_states_ || a < 0 || a >= n_actions_) throw std::out_of_range("state/action out of range");
  }

  int n_states_;
  int n_actions_;
  double gamma_;
  int initial_state_;
  std::vector<std::vector<Outcome>> outcomes_;
  std::vector<bool> terminal_;
};

/// Row-stochastic policy matrix (n_states x n_actions).
using TabularPolicy = Eigen::MatrixXd;

inline TabularPolicy uniform_policy(const TabularMdp& mdp) {
  return TabularPolicy::Constant(mdp.n_states(), mdp.n_actions(), 1.0 / mdp.n_actions());
}

inline TabularPolicy deterministic_policy(const TabularMdp& mdp, const std::vector<int>& actions) {
  if (static_cast<int>(actions.size()) != mdp.n_states()) throw std::invalid_argument("one action per state");
  TabularPolicy pi = TabularPolicy::Zero(mdp.n_states(), mdp.n_actions());
  for (int s = 0; s < mdp.n_states(); ++s) pi(s, actions[static_cast<std::size_t>(s)]) = 1.0;
  return pi;
}

namespace detail {

inline void check_policy(const TabularMdp& mdp, const TabularPolicy& pi) {
  if (pi.rows() != mdp.n_states() || pi.cols() != mdp.n_actions()) throw std::invalid_argument("policy shape mismatch");
  for (int s = 0; s < mdp.n_states(); ++s) {
    if ((pi.row(s).array() < 0.0).any() || std::abs(pi.row(s).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("policy rows must be probability vectors");
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Bridge from the finite environments

inline TabularMdp enumerate_mdp(const DistractorGrid& grid, double gamma = 0.99) {
  using G = DistractorGrid;
  TabularMdp mdp(G::kCells, G::kActions, gamma, G::kStart);
  mdp.set_terminal(G::kNearExit);
  mdp.set_terminal(G::kFarExit);
  for (int s = 0; s < G::kCells; ++s) {
    if (G::is_terminal(s)) continue;
    for (int a = 0; a < G::kActions; ++a) {
      std::map<int, double> next;
      next[G::move(s, a)] += 1.0 - grid.slip();
      for (int b = 0; b < G::kActions; ++b) next[G::move(s, b)] += grid.slip() / G::kActions;
      for (const auto& [cell, p] : next) {
        if (p > 0.0) mdp.add_outcome(s, a, {cell, G::reward_for_entering(cell), p});
      }
    }
  }
  return mdp;
}

/// State 0 is the decision state, state 1 the absorbing terminal.
inline TabularMdp enumerate_mdp(const RiskyBandit&, double gamma = 0.0) {
  TabularMdp mdp(2, 2, gamma, 0);
  mdp.set_terminal(1);
  mdp.add_outcome(0, RiskyBandit::kSafe, {1, RiskyBandit::kSafeReward, 1.0});
  mdp.add_outcome(0, RiskyBandit::kRisky, {1, 1.0, 0.5});
  mdp.add_outcome(0, RiskyBandit::kRisky, {1, -1.0, 0.5});
  return mdp;
}

/// Dispatch on a runtime environment; continuous environments are rejected.
inline TabularMdp enumerate_mdp(const Environment& env) {
  if (const auto* g = dynamic_cast<const DistractorGrid*>(&env)) return enumerate_mdp(*g);
  if (const auto* b = dynamic_cast<const RiskyBandit*>(&env)) return enumerate_mdp(*b);
  throw std::invalid_argument("environment '" + env.id() + "' is not finite");
}

// ---------------------------------------------------------------------------
// Evaluation operators

/// (T^pi V)(s) = sum_a pi(a|s) sum_o p_o (r_o + gamma V(s'_o)).
inline Eigen::VectorXd apply_expectation_operator(const TabularMdp& mdp, const TabularPolicy& pi,
                                                  const Eigen::VectorXd& v) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.terminal(s)) continue;
    double acc = 0.0;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      if (pi(s, a) == 0.0) continue;
      double q = 0.0;
      for (const auto& o : mdp.outcomes(s, a)) q += o.probability * (o.reward + mdp.gamma() * v(o.next_state));
      acc += pi(s, a) * q;
    }
    out(s) = acc;
  }
  return out;
}

/// (L^pi V)(s) = tau ln sum_a pi(a|s) sum_o p_o exp((r_o + gamma V(s'_o)) / tau).
inline Eigen::VectorXd apply_risk_seeking_operator(const TabularMdp& mdp, const TabularPolicy& pi, double tau,
                                                   const Eigen::VectorXd& v) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be finite and > 0");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mdp.n_states());
  std::vector<double> logs;
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.terminal(s)) continue;
    logs.clear();
    for (int a = 0; a < mdp.n_actions(); ++a) {
      if (pi(s, a) == 0.0) continue;
      for (const auto& o : mdp.outcomes(s, a)) {
        logs.push_back(std::log(pi(s, a) * o.probability) + (o.reward + mdp.gamma() * v(o.next_state)) / tau);
      }
    }
    const double m = *std::max_element(logs.begin(), logs.end());
    double sum = 0.0;
    for (double l : logs) sum += std::exp(l - m);
    out(s) = tau * (m + std::log(sum));
  }
  return out;
}

/// Solves (I - gamma P^pi) V = r^pi directly.
inline Eigen::VectorXd policy_evaluation_exact(const TabularMdp& mdp, const TabularPolicy& pi) {
  mdp.validate();
  detail::check_policy(mdp, pi);
  const int n = mdp.n_states();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int s = 0; s < n; ++s) {
    if (mdp.terminal(s)) continue;
    for (int act = 0; act < mdp.n_actions(); ++act) {
      const double w = pi(s, act);
      if (w == 0.0) continue;
      for (const auto& o : mdp.outcomes(s, act)) {
        b(s) += w * o.probability * o.reward;
        if (!mdp.terminal(o.next_state)) a(s, o.next_state) -= mdp.gamma() * w * o.probability;
      }
    }
  }
  Eigen::VectorXd v = a.partialPivLu().solve(b);
  const double residual = (a * v - b).lpNorm<Eigen::Infinity>();
  if (!(residual <= 1e-10)) throw NumericalError("policy evaluation residual " + std::to_string(residual));
  return v;
}

struct FixedPointResult {
  Eigen::VectorXd values;
  int iterations = 0;
};

/// Fixed point of the log-exp operator, iterated to sup-norm change <= tol.
inline FixedPointResult risk_seeking_evaluation(const TabularMdp& mdp, const TabularPolicy& pi, double tau,
                                                double tol = 1e-10, int max_iterations = 100000) {
  mdp.validate();
  detail::check_policy(mdp, pi);
  FixedPointResult r;
  r.values = Eigen::VectorXd::Zero(mdp.n_states());
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    Eigen::VectorXd next = apply_risk_seeking_operator(mdp, pi, tau, r.values);
    const double change = (next - r.values).lpNorm<Eigen::Infinity>();
    r.values = std::move(next);
    if (change <= tol) return r;
  }
  throw NumericalError("risk-seeking evaluation did not converge in " + std::to_string(max_iterations) + " sweeps");
}

struct ValueIterationResult {
  Eigen::VectorXd values;
  std::vector<int> greedy;
  int iterations = 0;
};

/// Bellman optimality iteration to sup-norm change <= tol; greedy ties go to
/// the lowest action index.
inline ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-10, int max_iterations = 1000000) {
  mdp.validate();
  const int n = mdp.n_states();
  ValueIterationResult r;
  r.values = Eigen::VectorXd::Zero(n);
  r.greedy.assign(static_cast<std::size_t>(n), 0);
  auto q_value = [&](const Eigen::VectorXd& v, int s, int a) {
    double q = 0.0;
    for (const auto& o : mdp.outcomes(s, a)) q += o.probability * (o.reward + mdp.gamma() * v(o.next_state));
    return q;
  };
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < n; ++s) {
      if (mdp.terminal(s)) continue;
      double best = q_value(r.values, s, 0);
      for (int a = 1; a < mdp.n_actions(); ++a) best = std::max(best, q_value(r.values, s, a));
      next(s) = best;
    }
    const double change = (next - r.values).lpNorm<Eigen::Infinity>();
    r.values = std::move(next);
    if (change <= tol) break;
  }
  for (int s = 0; s < n; ++s) {
    if (mdp.terminal(s)) continue;
    double best = q_value(r.values, s, 0);
    for (int a = 1; a < mdp.n_actions(); ++a) {
      const double q = q_value(r.values, s, a);
      if (q > best) {
        best = q;
        r.greedy[static_cast<std::size_t>(s)] = a;
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Tabular TD

/// RKL uses e = delta; FKL uses e = surrogate_td(delta, tau) with a fixed tau.
struct TabularMode {
  Uncertainty tau = Uncertainty::infinite();
  bool forward = false;

  static TabularMode rkl() { return {Uncertainty::infinite(), false}; }
  static TabularMode fkl(double tau) { return {Uncertainty::finite(tau), true}; }
};

struct TabularTdConfig {
  double alpha0 = 0.1;
  /// alpha_t = alpha0 / (1 + t / decay_steps)
  double decay_steps = 1e4;
  long steps = 200000;
};

struct TabularTdResult {
  /// Table after the last step.
  Eigen::VectorXd values;
  /// Average of the iterates over the second half of the run.
  Eigen::VectorXd averaged;
};

/// V(s) <- V(s) + alpha_t e along trajectories of the fixed policy, restarting
/// from the initial state whenever a terminal state is reached.
template <class Rng>
TabularTdResult tabular_td_run(const TabularMdp& mdp, TabularMode mode, const TabularPolicy& pi,
                               const TabularTdConfig& config, Rng& rng) {
  mdp.validate();
  detail::check_policy(mdp, pi);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto draw = [&](auto&& weights, std::size_t n) {
    const double u = uniform(rng);
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      acc += weights(k);
      if (u < acc) return k;
    }
    return n - 1;
  };
  TabularTdResult r;
  r.values = Eigen::VectorXd::Zero(mdp.n_states());
  r.averaged = Eigen::VectorXd::Zero(mdp.n_states());
  const long average_from = config.steps / 2;
  int s = mdp.initial_state();
  for (long t = 0; t < config.steps; ++t) {
    if (mdp.terminal(s)) s = mdp.initial_state();
    const auto a = static_cast<int>(draw([&](std::size_t k) { return pi(s, static_cast<int>(k)); },
                                         static_cast<std::size_t>(mdp.n_actions())));
    const auto& outs = mdp.outcomes(s, a);
    const Outcome& o = outs[draw([&](std::size_t k) { return outs[k].probability; }, outs.size())];
    const double delta = td_error(o.reward, r.values(o.next_state), r.values(s), mdp.gamma(), mdp.terminal(o.next_state));
    const double e = mode.forward ? surrogate_td(delta, mode.tau) : delta;
    const double alpha = config.alpha0 / (1.0 + static_cast<double>(t) / config.decay_steps);
    r.values(s) += alpha * e;
    if (t >= average_from) r.averaged += r.values;
    s = o.next_state;
  }
  const long averaged_steps = config.steps - average_from;
  if (averaged_steps > 0) r.averaged /= static_cast<double>(averaged_steps);
  return r;
}

}  // namespace fklrl

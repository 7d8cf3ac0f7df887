#pragma once

// Small deterministic environments:
//   grid     - 7x7 gridworld with a nearby +1 exit and a distant +10 exit
//   bandit   - one state, a safe arm (0.5) and a risky arm (+1 / -1)
//   pendulum - torque-limited swing-up with a Gaussian-policy action

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fklrl/networks.hpp"

namespace fklrl {

struct ActionSpace {
  enum class Kind { Discrete, Box };
  Kind kind = Kind::Discrete;
  /// Number of actions (discrete) or action dimension (box).
  int size = 1;
  Eigen::VectorXd low;
  Eigen::VectorXd high;

  bool discrete() const { return kind == Kind::Discrete; }
};

struct EnvSpec {
  int state_dim = 1;
  ActionSpace action;
  int horizon = 1;
  double reward_min = 0.0;
  double reward_max = 0.0;
};

struct StepResult {
  Eigen::VectorXd next_state;
  double reward = 0.0;
  /// True terminal: the bootstrap value is zero.
  bool terminal = false;
  /// Horizon reached without a terminal; the episode ends but bootstraps.
  bool truncated = false;

  bool done() const { return terminal || truncated; }
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string id() const = 0;
  virtual const EnvSpec& spec() const = 0;
  /// Starts an episode; all randomness of the episode derives from `rng`.
  virtual Eigen::VectorXd reset(std::mt19937_64& rng) = 0;
  virtual StepResult step(const Action& action) = 0;
};

namespace detail {

class EpisodeGuard {
 public:
  void start(int horizon) {
    horizon_ = horizon;
    steps_ = 0;
    live_ = true;
  }
  /// Returns true when this step hits the horizon.
  bool advance() {
    if (!live_) throw std::logic_error("step() called on a finished episode; call reset()");
    ++steps_;
    return steps_ >= horizon_;
  }
  void finish() { live_ = false; }
  int steps() const { return steps_; }

 private:
  int horizon_ = 0;
  int steps_ = 0;
  bool live_ = false;
};

inline int discrete_action(const Action& a, int n) {
  if (a.size() != 1 || !(a(0) >= 0.0) || a(0) >= n || a(0) != std::floor(a(0))) {
    throw std::invalid_argument("invalid discrete action");
  }
  return static_cast<int>(a(0));
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// 7x7 grid, start at (0,0). Exits: +1 at (0,3) (Manhattan distance 3) and +10
/// at (6,6). Every other move costs 0.05, walls keep the agent in place. With
/// probability `slip` the chosen move is replaced by a uniformly random one.
class DistractorGrid final : public Environment {
 public:
  static constexpr int kSize = 7;
  static constexpr int kCells = kSize * kSize;
  static constexpr int kActions = 4;  // up, down, left, right
  static constexpr int kStart = 0;
  static constexpr int kNearExit = 3;
  static constexpr int kFarExit = kCells - 1;
  static constexpr double kNearReward = 1.0;
  static constexpr double kFarReward = 10.0;
  static constexpr double kStepReward = -0.05;
  static constexpr double kSlip = 0.1;
  static constexpr int kHorizon = 100;

  explicit DistractorGrid(double slip = kSlip) : slip_(slip) {
    if (!(slip >= 0.0 && slip <= 1.0)) throw std::invalid_argument("slip probability must lie in [0, 1]");
    spec_.state_dim = kCells;
    spec_.action = {ActionSpace::Kind::Discrete, kActions, {}, {}};
    spec_.horizon = kHorizon;
    spec_.reward_min = kStepReward;
    spec_.reward_max = kFarReward;
  }

  std::string id() const override { return "grid"; }
  const EnvSpec& spec() const override { return spec_; }
  double slip() const { return slip_; }
  int cell() const { return cell_; }

  static bool is_terminal(int cell) { return cell == kNearExit || cell == kFarExit; }

  static int move(int cell, int action) {
    int row = cell / kSize;
    int col = cell % kSize;
    switch (action) {
      case 0: row = std::max(row - 1, 0); break;
      case 1: row = std::min(row + 1, kSize - 1); break;
      case 2: col = std::max(col - 1, 0); break;
      case 3: col = std::min(col + 1, kSize - 1); break;
      default: throw std::invalid_argument("grid action out of range");
    }
    return row * kSize + col;
  }

  static double reward_for_entering(int cell) {
    if (cell == kNearExit) return kNearReward;
    if (cell == kFarExit) return kFarReward;
    return kStepReward;
  }

  static Eigen::VectorXd features(int cell) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(kCells);
    x(cell) = 1.0;
    return x;
  }

  Eigen::VectorXd reset(std::mt19937_64& rng) override {
    rng_.seed(rng());
    cell_ = kStart;
    guard_.start(kHorizon);
    return features(cell_);
  }

  StepResult step(const Action& action) override {
    const bool at_horizon = guard_.advance();
    int a = detail::discrete_action(action, kActions);
    if (slip_ > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < slip_) {
      a = std::uniform_int_distribution<int>(0, kActions - 1)(rng_);
    }
    cell_ = move(cell_, a);
    StepResult r;
    r.next_state = features(cell_);
    r.reward = reward_for_entering(cell_);
    r.terminal = is_terminal(cell_);
    r.truncated = !r.terminal && at_horizon;
    if (r.done()) guard_.finish();
    return r;
  }

 private:
  double slip_;
  EnvSpec spec_;
  std::mt19937_64 rng_;
  int cell_ = kStart;
  detail::EpisodeGuard guard_;
};

// ---------------------------------------------------------------------------

/// One-step bandit: action 0 pays 0.5, action 1 pays +1 or -1 with equal odds.
class RiskyBandit final : public Environment {
 public:
  static constexpr int kSafe = 0;
  static constexpr int kRisky = 1;
  static constexpr double kSafeReward = 0.5;

  RiskyBandit() {
    spec_.state_dim = 1;
    spec_.action = {ActionSpace::Kind::Discrete, 2, {}, {}};
    spec_.horizon = 1;
    spec_.reward_min = -1.0;
    spec_.reward_max = 1.0;
  }

  std::string id() const override { return "bandit"; }
  const EnvSpec& spec() const override { return spec_; }

  Eigen::VectorXd reset(std::mt19937_64& rng) override {
    rng_.seed(rng());
    guard_.start(1);
    return Eigen::VectorXd::Ones(1);
  }

  StepResult step(const Action& action) override {
    guard_.advance();
    const int a = detail::discrete_action(action, 2);
    StepResult r;
    r.next_state = Eigen::VectorXd::Ones(1);
    r.reward = a == kSafe ? kSafeReward : (std::uniform_int_distribution<int>(0, 1)(rng_) == 0 ? 1.0 : -1.0);
    r.terminal = true;
    guard_.finish();
    return r;
  }

 private:
  EnvSpec spec_;
  std::mt19937_64 rng_;
  detail::EpisodeGuard guard_;
};

// ---------------------------------------------------------------------------

/// Pendulum with angle measured from upright: theta'' = (g/l) sin(theta) + u/(m l^2),
/// g = 10, l = m = 1, |u| <= 2, dt = 0.05, semi-implicit Euler, |theta'| <= 8.
/// Reward -(wrap(theta)^2 + 0.1 theta'^2 + 0.001 u^2), evaluated before the step.
/// Episodes start hanging down with +-0.05 noise and last 200 steps.
class SwingUpPendulum final : public Environment {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMass = 1.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kDt = 0.05;
  static constexpr int kHorizon = 200;

  SwingUpPendulum() {
    spec_.state_dim = 3;
    spec_.action = {ActionSpace::Kind::Box, 1, Eigen::VectorXd::Constant(1, -kMaxTorque),
                    Eigen::VectorXd::Constant(1, kMaxTorque)};
    spec_.horizon = kHorizon;
    spec_.reward_min = -(std::numbers::pi * std::numbers::pi + 0.1 * kMaxSpeed * kMaxSpeed +
                         0.001 * kMaxTorque * kMaxTorque);
    spec_.reward_max = 0.0;
  }

  std::string id() const override { return "pendulum"; }
  const EnvSpec& spec() const override { return spec_; }

  static double wrap(double theta) {
    double t = std::fmod(theta + std::numbers::pi, 2.0 * std::numbers::pi);
    if (t < 0.0) t += 2.0 * std::numbers::pi;
    return t - std::numbers::pi;
  }

  /// Total energy, zero potential at the pivot height.
  static double energy(double theta, double theta_dot) {
    return 0.5 * kMass * kLength * kLength * theta_dot * theta_dot + kMass * kGravity * kLength * std::cos(theta);
  }

  Eigen::VectorXd observation() const {
    Eigen::VectorXd s(3);
    s << std::cos(theta_), std::sin(theta_), theta_dot_;
    return s;
  }

  Eigen::VectorXd reset(std::mt19937_64& rng) override {
    std::uniform_real_distribution<double> noise(-0.05, 0.05);
    theta_ = std::numbers::pi + noise(rng);
    theta_dot_ = noise(rng);
    guard_.start(kHorizon);
    return observation();
  }

  /// Places the pendulum at an exact state and starts a fresh episode.
  void set_state(double theta, double theta_dot) {
    theta_ = theta;
    theta_dot_ = std::clamp(theta_dot, -kMaxSpeed, kMaxSpeed);
    guard_.start(kHorizon);
  }

  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

  StepResult step(const Action& action) override {
    if (action.size() != 1 || !std::isfinite(action(0))) throw std::invalid_argument("invalid pendulum action");
    const bool at_horizon = guard_.advance();
    const double u = std::clamp(action(0), -kMaxTorque, kMaxTorque);
    const double w = wrap(theta_);
    StepResult r;
    r.reward = -(w * w + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);
    const double accel = (kGravity / kLength) * std::sin(theta_) + u / (kMass * kLength * kLength);
    theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
    theta_ += theta_dot_ * kDt;
    r.next_state = observation();
    r.truncated = at_horizon;
    if (r.done()) guard_.finish();
    return r;
  }

 private:
  EnvSpec spec_;
  double theta_ = std::numbers::pi;
  double theta_dot_ = 0.0;
  detail::EpisodeGuard guard_;
};

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& environment_ids() {
  static const std::vector<std::string> ids{"grid", "bandit", "pendulum"};
  return ids;
}

inline std::unique_ptr<Environment> make_environment(const std::string& id) {
  if (id == "grid") return std::make_unique<DistractorGrid>();
  if (id == "bandit") return std::make_unique<RiskyBandit>();
  if (id == "pendulum") return std::make_unique<SwingUpPendulum>();
  throw std::invalid_argument("unknown environment '" + id + "' (expected grid, bandit or pendulum)");
}

/// Policy head matching an environment's action space.
inline PolicyHead policy_head_for(const EnvSpec& spec) {
  if (spec.action.discrete()) return {PolicyHead::Kind::Categorical, spec.action.size};
  return {PolicyHead::Kind::Gaussian, spec.action.size};
}

}  // namespace fklrl

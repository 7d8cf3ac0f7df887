#pragma once

// The two fixed architectures built on the MLP: a value network with
// bootstrapped heads, and a policy network producing either a diagonal
// Gaussian (continuous actions) or a categorical distribution (finite actions).

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <variant>

#include "fklrl/divergence.hpp"
#include "fklrl/mlp.hpp"

namespace fklrl {

/// Continuous actions are vectors; a finite action is stored as its index in
/// element 0.
using Action = Eigen::VectorXd;

inline constexpr int kValueHeads = 5;

// ---------------------------------------------------------------------------
// Value network

struct ValueHeads {
  Eigen::VectorXd head_values;
  double mean_value = 0.0;
};

inline MlpShape value_shape(int input_dim, int width, int depth) {
  return {input_dim, width, depth, kValueHeads};
}

inline ValueHeads value_forward(const MlpParams& params, const Eigen::VectorXd& state) {
  if (params.shape().output_dim != kValueHeads) throw std::invalid_argument("not a value network");
  ValueHeads out;
  out.head_values = mlp_forward(params, state);
  out.mean_value = out.head_values.mean();
  return out;
}

/// Mean value for every column of `states`.
inline Eigen::VectorXd value_means(const MlpParams& params, const Eigen::MatrixXd& states) {
  return mlp_forward(params, states).colwise().mean().transpose();
}

/// Gradient of sum_i seeds(i) * V(states.col(i)), with V the head mean.
inline Eigen::VectorXd value_backprop(const MlpParams& params, const Eigen::MatrixXd& states,
                                      const Eigen::VectorXd& seeds) {
  if (seeds.size() != states.cols()) throw std::invalid_argument("one seed per state required");
  MlpCache cache;
  mlp_forward(params, states, &cache);
  Eigen::MatrixXd d_out(kValueHeads, states.cols());
  d_out.rowwise() = seeds.transpose() / static_cast<double>(kValueHeads);
  return mlp_backward(params, cache, d_out);
}

// ---------------------------------------------------------------------------
// Distributions

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

class DiagonalGaussian {
 public:
  DiagonalGaussian(Eigen::VectorXd mean, Eigen::VectorXd std) : mean_(std::move(mean)), std_(std::move(std)) {
    if (mean_.size() != std_.size()) throw std::invalid_argument("mean/std dimension mismatch");
    if (!(std_.array() > 0.0).all()) throw std::invalid_argument("standard deviations must be positive");
  }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& std() const { return std_; }
  int dim() const { return static_cast<int>(mean_.size()); }

  double log_prob(const Action& a) const {
    if (a.size() != mean_.size()) throw std::invalid_argument("action dimension mismatch");
    const Eigen::ArrayXd z = (a - mean_).array() / std_.array();
    return -0.5 * z.square().sum() - std_.array().log().sum() -
           0.5 * static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi);
  }

  template <class Rng>
  Action sample(Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Action a(mean_.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = mean_(i) + std_(i) * normal(rng);
    return a;
  }

  Action mode() const { return mean_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd std_;
};

class Categorical {
 public:
  explicit Categorical(Eigen::VectorXd logits) : logits_(std::move(logits)) {
    if (logits_.size() < 1) throw std::invalid_argument("categorical needs at least one outcome");
    const double m = logits_.maxCoeff();
    log_norm_ = m + std::log((logits_.array() - m).exp().sum());
  }

  const Eigen::VectorXd& logits() const { return logits_; }
  int size() const { return static_cast<int>(logits_.size()); }
  Eigen::VectorXd probabilities() const { return (logits_.array() - log_norm_).exp().matrix(); }

  double log_prob(const Action& a) const { return logits_(index_of(a)) - log_norm_; }

  template <class Rng>
  Action sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double target = u(rng);
    const Eigen::VectorXd p = probabilities();
    double acc = 0.0;
    int chosen = size() - 1;
    for (int k = 0; k < size(); ++k) {
      acc += p(k);
      if (target < acc) {
        chosen = k;
        break;
      }
    }
    return Action::Constant(1, static_cast<double>(chosen));
  }

  /// Most likely outcome; ties go to the lowest index.
  Action mode() const {
    Eigen::Index best = 0;
    logits_.maxCoeff(&best);
    return Action::Constant(1, static_cast<double>(best));
  }

  int index_of(const Action& a) const {
    if (a.size() != 1) throw std::invalid_argument("categorical action must hold one index");
    const double v = a(0);
    if (!(v >= 0.0) || v >= static_cast<double>(size()) || v != std::floor(v)) {
      throw std::invalid_argument("categorical action index out of range");
    }
    return static_cast<int>(v);
  }

 private:
  Eigen::VectorXd logits_;
  double log_norm_ = 0.0;
};

/// pi(a | s) for one state.
class PolicyDistribution {
 public:
  PolicyDistribution(DiagonalGaussian g) : dist_(std::move(g)) {}  // NOLINT
  PolicyDistribution(Categorical c) : dist_(std::move(c)) {}       // NOLINT

  double log_prob(const Action& a) const {
    return std::visit([&](const auto& d) { return d.log_prob(a); }, dist_);
  }
  template <class Rng>
  Action sample(Rng& rng) const {
    return std::visit([&](const auto& d) { return d.sample(rng); }, dist_);
  }
  Action mode() const {
    return std::visit([](const auto& d) { return d.mode(); }, dist_);
  }

  bool is_gaussian() const { return std::holds_alternative<DiagonalGaussian>(dist_); }
  const DiagonalGaussian& gaussian() const { return std::get<DiagonalGaussian>(dist_); }
  const Categorical& categorical() const { return std::get<Categorical>(dist_); }

 private:
  std::variant<DiagonalGaussian, Categorical> dist_;
};

// ---------------------------------------------------------------------------
// Policy network

struct PolicyHead {
  enum class Kind { Gaussian, Categorical };
  Kind kind = Kind::Gaussian;
  /// Action dimension (Gaussian) or number of actions (categorical).
  int size = 1;

  int output_dim() const { return kind == Kind::Gaussian ? 2 * size : size; }
  friend bool operator==(const PolicyHead&, const PolicyHead&) = default;
};

inline MlpShape policy_shape(int input_dim, int width, int depth, PolicyHead head) {
  return {input_dim, width, depth, head.output_dim()};
}

/// Maps one column of raw network output to a distribution. Gaussian outputs
/// are [mean; raw_std] with std = softplus(raw_std).
inline PolicyDistribution make_distribution(const PolicyHead& head, const Eigen::VectorXd& raw) {
  if (raw.size() != head.output_dim()) throw std::invalid_argument("policy output size mismatch");
  if (!raw.allFinite()) throw NumericalError("policy network produced non-finite outputs");
  if (head.kind == PolicyHead::Kind::Categorical) return Categorical(raw);
  Eigen::VectorXd std(head.size);
  for (int i = 0; i < head.size; ++i) std(i) = softplus(raw(head.size + i));
  if (!(std.array() > 0.0).all() || !std.allFinite()) throw NumericalError("policy standard deviation collapsed");
  return DiagonalGaussian(raw.head(head.size), std);
}

inline PolicyDistribution policy_forward(const MlpParams& params, const PolicyHead& head,
                                         const Eigen::VectorXd& state) {
  return make_distribution(head, mlp_forward(params, state));
}

/// ln pi(a_i | s_i) for each column.
inline Eigen::VectorXd policy_log_probs(const MlpParams& params, const PolicyHead& head,
                                        const Eigen::MatrixXd& states, const std::vector<Action>& actions) {
  if (static_cast<Eigen::Index>(actions.size()) != states.cols()) {
    throw std::invalid_argument("one action per state required");
  }
  const Eigen::MatrixXd raw = mlp_forward(params, states);
  Eigen::VectorXd out(states.cols());
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    out(i) = make_distribution(head, raw.col(i)).log_prob(actions[static_cast<std::size_t>(i)]);
  }
  return out;
}

/// d ln pi(a | raw) / d raw for one column of raw output.
inline Eigen::VectorXd log_prob_output_gradient(const PolicyHead& head, const Eigen::VectorXd& raw,
                                                const Action& a) {
  Eigen::VectorXd g(head.output_dim());
  if (head.kind == PolicyHead::Kind::Categorical) {
    const Categorical c(raw);
    g = -c.probabilities();
    g(c.index_of(a)) += 1.0;
    return g;
  }
  if (a.size() != head.size) throw std::invalid_argument("action dimension mismatch");
  for (int i = 0; i < head.size; ++i) {
    const double mu = raw(i);
    const double r = raw(head.size + i);
    const double sd = softplus(r);
    const double diff = a(i) - mu;
    g(i) = diff / (sd * sd);
    g(head.size + i) = (-1.0 / sd + diff * diff / (sd * sd * sd)) * sigmoid(r);
  }
  return g;
}

/// Gradient of sum_i seeds(i) * ln pi(a_i | s_i) with respect to the policy
/// parameters.
inline Eigen::VectorXd policy_backprop(const MlpParams& params, const PolicyHead& head,
                                       const Eigen::MatrixXd& states, const std::vector<Action>& actions,
                                       const Eigen::VectorXd& seeds) {
  if (static_cast<Eigen::Index>(actions.size()) != states.cols() || seeds.size() != states.cols()) {
    throw std::invalid_argument("one action and one seed per state required");
  }
  MlpCache cache;
  mlp_forward(params, states, &cache);
  Eigen::MatrixXd d_out(head.output_dim(), states.cols());
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    d_out.col(i) = seeds(i) * log_prob_output_gradient(head, cache.output.col(i), actions[static_cast<std::size_t>(i)]);
  }
  return mlp_backward(params, cache, d_out);
}

}  // namespace fklrl

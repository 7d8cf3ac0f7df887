#pragma once

// Lambda-return machinery. The forward view weights the k-th future TD error by
// (1 - lambda) * (d * lambda)^k, where d = 1 (GaeDiscount::Paper) or gamma
// (GaeDiscount::Standard). Errors after the end of the episode count as zero.
// The backward view (EligibilityTrace) uses the same decay d * lambda, so summed
// trace updates reproduce the forward view exactly for fixed parameters.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fklrl/divergence.hpp"

namespace fklrl {

enum class GaeDiscount { Paper, Standard };

inline std::string to_string(GaeDiscount d) { return d == GaeDiscount::Paper ? "paper" : "standard"; }

inline GaeDiscount parse_gae_discount(const std::string& s) {
  if (s == "paper") return GaeDiscount::Paper;
  if (s == "standard") return GaeDiscount::Standard;
  throw std::invalid_argument("unknown gae discount '" + s + "' (expected paper or standard)");
}

inline void validate_lambda(double lambda) {
  if (lambda == 1.0) {
    throw std::invalid_argument("lambda = 1 gives all-zero (1 - lambda) weights; use lambda < 1");
  }
  if (!(lambda >= 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in [0, 1)");
}

/// Per-step decay of the trace: lambda or gamma * lambda.
inline double trace_decay(double lambda, double gamma, GaeDiscount discount) {
  return discount == GaeDiscount::Paper ? lambda : gamma * lambda;
}

namespace detail {

template <class Term>
std::vector<double> weighted_lambda_sum(std::span<const double> deltas, double lambda, double gamma,
                                        GaeDiscount discount, Term term) {
  validate_lambda(lambda);
  const double decay = trace_decay(lambda, gamma, discount);
  std::vector<double> out(deltas.size());
  double acc = 0.0;
  for (std::size_t i = deltas.size(); i-- > 0;) {
    acc = (1.0 - lambda) * term(deltas[i]) + decay * acc;
    out[i] = acc;
  }
  return out;
}

}  // namespace detail

/// delta^lambda_t = sum_k (1 - lambda)(d lambda)^k delta_{t+k}.
inline std::vector<double> gae(std::span<const double> deltas, double lambda, double gamma = 1.0,
                               GaeDiscount discount = GaeDiscount::Paper) {
  return detail::weighted_lambda_sum(deltas, lambda, gamma, discount, [](double d) {
    detail::require_finite(d, "TD error");
    return d;
  });
}

/// Same weights applied to the per-step surrogates; an upper bound of the
/// surrogate of delta^lambda.
inline std::vector<double> surrogated_gae(std::span<const double> deltas, double lambda, Uncertainty tau,
                                          double gamma = 1.0, GaeDiscount discount = GaeDiscount::Paper) {
  return detail::weighted_lambda_sum(deltas, lambda, gamma, discount,
                                     [tau](double d) { return surrogate_td(d, tau); });
}

/// tau * ln( sum_k w_k exp(delta_{t+k}/tau) + (1 - sum_k w_k) ), the log-exp
/// bound sitting between delta^lambda and the surrogated GAE. The last term is
/// the weight mass of the zero errors past the end of the episode.
inline std::vector<double> gae_log_exp_bound(std::span<const double> deltas, double lambda, double tau,
                                             double gamma = 1.0, GaeDiscount discount = GaeDiscount::Paper) {
  validate_lambda(lambda);
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  const double decay = trace_decay(lambda, gamma, discount);
  const std::size_t n = deltas.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    // log-sum-exp over the in-episode terms and the tail mass
    double m = 0.0;
    for (std::size_t k = t; k < n; ++k) m = std::max(m, deltas[k] / tau);
    double sum = 0.0;
    double weight = 1.0 - lambda;
    double mass = 0.0;
    for (std::size_t k = t; k < n; ++k) {
      sum += weight * std::exp(deltas[k] / tau - m);
      mass += weight;
      weight *= decay;
    }
    sum += std::max(0.0, 1.0 - mass) * std::exp(-m);
    out[t] = tau * (m + std::log(sum));
  }
  return out;
}

/// Accumulating traces for the value and policy parameters.
///
/// z <- d lambda z + (1 - lambda) g, and the delivered descent gradient is
/// -e_t z, with e_t the step's effective error (delta or surrogated delta).
/// For lambda = 0 this is exactly the one-sample update.
class EligibilityTrace {
 public:
  EligibilityTrace(Eigen::Index value_size, Eigen::Index policy_size, double lambda, double gamma,
                   GaeDiscount discount)
      : lambda_(lambda),
        decay_(trace_decay(lambda, gamma, discount)),
        value_(Eigen::VectorXd::Zero(value_size)),
        policy_(Eigen::VectorXd::Zero(policy_size)) {
    validate_lambda(lambda);
  }

  void reset() {
    value_.setZero();
    policy_.setZero();
  }

  struct Update {
    Eigen::VectorXd value_gradient;
    Eigen::VectorXd policy_gradient;
  };

  /// `value_grad` is grad V(s_t); `policy_grad` is rho_t * grad ln pi(a_t|s_t).
  Update step(const Eigen::VectorXd& value_grad, const Eigen::VectorXd& policy_grad, double effective_error) {
    if (value_grad.size() != value_.size() || policy_grad.size() != policy_.size()) {
      throw std::invalid_argument("trace shape does not match gradient shape");
    }
    value_ = decay_ * value_ + (1.0 - lambda_) * value_grad;
    policy_ = decay_ * policy_ + (1.0 - lambda_) * policy_grad;
    return {-effective_error * value_, -effective_error * policy_};
  }

  double lambda() const { return lambda_; }
  double decay() const { return decay_; }
  const Eigen::VectorXd& value_trace() const { return value_; }
  const Eigen::VectorXd& policy_trace() const { return policy_; }

 private:
  double lambda_;
  double decay_;
  Eigen::VectorXd value_;
  Eigen::VectorXd policy_;
};

}  // namespace fklrl

#pragma once

// Stateless math behind the reverse-KL and forward-KL actor-critic updates:
// TD errors, the exponential surrogate of the TD error, Bernoulli optimality
// probabilities with their divergences, and the adaptive uncertainty schedule.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace fklrl {

/// Raised when a computation produces or receives non-finite numbers.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest exponent fed to exp() by the surrogate and density-ratio paths.
/// e^30 ~ 1e13 keeps every downstream product finite in double precision.
inline constexpr double kMaxExponent = 30.0;

namespace detail {

inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw NumericalError(std::string(what) + " must be finite");
  }
}

}  // namespace detail

/// Temperature of the optimality probabilities. Either a finite positive value
/// or the infinite limit, where the surrogate TD error reduces to the TD error.
class Uncertainty {
 public:
  static Uncertainty finite(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      throw std::invalid_argument("uncertainty tau must be finite and > 0");
    }
    return Uncertainty(tau);
  }
  static Uncertainty infinite() {
    return Uncertainty(std::numeric_limits<double>::infinity());
  }

  bool is_infinite() const { return std::isinf(tau_); }
  /// +inf in the infinite limit.
  double value() const { return tau_; }

  friend bool operator==(const Uncertainty&, const Uncertainty&) = default;

 private:
  explicit Uncertainty(double tau) : tau_(tau) {}
  double tau_;
};

/// User-facing optimism knob eta in (0, 1), or the dedicated zero mode.
class Optimism {
 public:
  static Optimism zero() { return Optimism(0.0); }
  static Optimism of(double eta) {
    if (!(eta > 0.0 && eta < 1.0)) {
      throw std::invalid_argument("optimism eta must lie in (0, 1); use zero mode for 0");
    }
    return Optimism(eta);
  }
  /// Accepts "zero" (or "0") and decimal values in (0, 1).
  static Optimism parse(const std::string& text) {
    if (text == "zero" || text == "0") return zero();
    std::size_t used = 0;
    double eta = 0.0;
    try {
      eta = std::stod(text, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse optimism '" + text + "'");
    }
    if (used != text.size()) throw std::invalid_argument("cannot parse optimism '" + text + "'");
    if (eta == 0.0) return zero();
    return of(eta);
  }

  bool is_zero() const { return eta_ == 0.0; }
  double eta() const { return eta_; }
  std::string to_string() const {
    if (is_zero()) return "zero";
    std::string s = std::to_string(eta_);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }

  friend bool operator==(const Optimism&, const Optimism&) = default;

 private:
  explicit Optimism(double eta) : eta_(eta) {}
  double eta_;
};

/// r + gamma * V(s') - V(s); the bootstrap is dropped on terminal transitions.
inline double td_error(double reward, double next_value, double value, double gamma,
                       bool terminal) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  detail::require_finite(reward, "reward");
  detail::require_finite(value, "value");
  if (terminal) return reward - value;
  detail::require_finite(next_value, "next value");
  return reward + gamma * next_value - value;
}

/// True when delta / tau exceeds kMaxExponent and the surrogate saturates.
inline bool surrogate_exponent_clamped(double delta, Uncertainty tau) {
  return !tau.is_infinite() && delta / tau.value() > kMaxExponent;
}

/// tau * (exp(delta / tau) - 1), or delta itself in the infinite limit.
/// Always > -tau, never below delta (up to the exponent clamp), same sign as delta.
inline double surrogate_td(double delta, Uncertainty tau) {
  detail::require_finite(delta, "TD error");
  if (tau.is_infinite()) return delta;
  const double t = tau.value();
  return t * std::expm1(std::min(delta / t, kMaxExponent));
}

/// -clamp(delta_scale, eps, 1/eps) / ln(1 - eta). Chosen so that
/// surrogate_td(-clamped scale, tau) == -eta * tau.
inline double tau_from_eta(double delta_scale, double eta, double epsilon) {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  const double clamped = std::max(std::min(delta_scale, 1.0 / epsilon), epsilon);
  return -clamped / std::log1p(-eta);
}

/// Raw and surrogated TD error of one sample.
struct TdPair {
  double raw = 0.0;
  double surrogated = 0.0;
};

inline TdPair make_td_pair(double delta, Uncertainty tau) {
  return {delta, surrogate_td(delta, tau)};
}

/// Tracks the running TD-error scale and turns the optimism knob into tau.
///
/// Delta_max <- max(beta * Delta_max, max|delta|)
/// Delta     <- beta * Delta + (1 - beta) * Delta_max
/// tau        = tau_from_eta(Delta, eta, eps)
///
/// Both statistics start at 1/eps, i.e. a huge tau and almost no optimism.
/// In zero mode the statistics are still tracked but tau stays infinite.
class OptimismScheduler {
 public:
  explicit OptimismScheduler(Optimism optimism, double beta = 0.999, double epsilon = 1e-5)
      : optimism_(optimism), beta_(beta), epsilon_(epsilon) {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0, 1)");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    delta_max_ = delta_scale_ = 1.0 / epsilon;
  }

  /// One update per gradient-computation event. An empty batch is a no-op.
  Uncertainty update(std::span<const double> abs_deltas) {
    if (abs_deltas.empty()) return tau();
    double batch_max = 0.0;
    for (double d : abs_deltas) {
      if (!(d >= 0.0) || !std::isfinite(d)) {
        throw std::invalid_argument("scheduler expects finite non-negative |delta|");
      }
      batch_max = std::max(batch_max, d);
    }
    delta_max_ = std::max(beta_ * delta_max_, batch_max);
    delta_scale_ = beta_ * delta_scale_ + (1.0 - beta_) * delta_max_;
    return tau();
  }

  Uncertainty tau() const {
    if (optimism_.is_zero()) return Uncertainty::infinite();
    return Uncertainty::finite(tau_from_eta(delta_scale_, optimism_.eta(), epsilon_));
  }

  /// Overrides the running statistics (restoring state, worked examples).
  void set_state(double delta_max, double delta_scale) {
    if (!(delta_max >= 0.0) || !(delta_scale >= 0.0)) {
      throw std::invalid_argument("scheduler statistics must be non-negative");
    }
    delta_max_ = delta_max;
    delta_scale_ = delta_scale;
  }

  Optimism optimism() const { return optimism_; }
  double beta() const { return beta_; }
  double epsilon() const { return epsilon_; }
  double delta_max() const { return delta_max_; }
  double delta_scale() const { return delta_scale_; }

 private:
  Optimism optimism_;
  double beta_;
  double epsilon_;
  double delta_max_;
  double delta_scale_;
};

/// V, Q, the ceiling C and tau, with the optimality probabilities
/// p_V = exp((V - C) / tau) and p_Q = exp((Q - C) / tau).
///
/// C is unknown in practice; this type exists for diagnostics and exact-KL
/// checks. The training path only ever needs exp((Q - V) / tau).
class OptimalityModel {
 public:
  OptimalityModel(double value, double action_value, double ceiling, double tau)
      : value_(value), action_value_(action_value), ceiling_(ceiling), tau_(tau) {
    detail::require_finite(value, "V");
    detail::require_finite(action_value, "Q");
    detail::require_finite(ceiling, "C");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be finite and > 0");
    if (!(value < ceiling) || !(action_value < ceiling)) {
      throw std::invalid_argument("V and Q must lie strictly below the ceiling C");
    }
    p_value_ = std::exp((value - ceiling) / tau);
    p_action_value_ = std::exp((action_value - ceiling) / tau);
    if (!(p_value_ > 0.0) || !(p_action_value_ > 0.0) || !(p_value_ < 1.0) ||
        !(p_action_value_ < 1.0)) {
      throw std::invalid_argument("optimality probabilities fall outside (0, 1) numerically");
    }
  }

  double value() const { return value_; }
  double action_value() const { return action_value_; }
  double ceiling() const { return ceiling_; }
  double tau() const { return tau_; }
  /// p(O = 1 | s)
  double p_value() const { return p_value_; }
  /// p(O = 1 | s, a)
  double p_action_value() const { return p_action_value_; }

 private:
  double value_;
  double action_value_;
  double ceiling_;
  double tau_;
  double p_value_;
  double p_action_value_;
};

/// KL(Bern(p) || Bern(q)) for p, q in (0, 1).
inline double bernoulli_kl(double p, double q) {
  if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("Bernoulli parameters must lie in (0, 1)");
  }
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

/// KL(p(O | s, a) || p(O | s)).
inline double bernoulli_forward_kl(const OptimalityModel& m) {
  return bernoulli_kl(m.p_action_value(), m.p_value());
}

/// KL(p(O | s) || p(O | s, a)).
inline double bernoulli_reverse_kl(const OptimalityModel& m) {
  return bernoulli_kl(m.p_value(), m.p_action_value());
}

/// Coefficient multiplying grad_theta V(s) in a KL gradient, in two forms:
/// the exact one (needs C) and the computable one actually used in training.
struct ValueGradient {
  double exact = 0.0;
  double computable = 0.0;
};

/// Forward KL: exact -(1/tau)(p_Q - p_V)/(1 - p_V), computable
/// -tau(exp((Q - V)/tau) - 1). The computable form is the exact one scaled by
/// the positive factor tau^2 (1 - p_V) / p_V.
inline ValueGradient value_grad_forward(const OptimalityModel& m) {
  const double pv = m.p_value();
  const double pq = m.p_action_value();
  ValueGradient g;
  g.exact = -(pq - pv) / ((1.0 - pv) * m.tau());
  g.computable = -surrogate_td(m.action_value() - m.value(), Uncertainty::finite(m.tau()));
  return g;
}

/// Reverse KL: exact -(p_V/tau){(Q - V)/tau + ln((1 - p_V)/(1 - p_Q))}; the
/// tau -> 0 computable form -(Q - V) is the squared-error gradient.
inline ValueGradient value_grad_reverse(const OptimalityModel& m) {
  const double pv = m.p_value();
  const double pq = m.p_action_value();
  const double tau = m.tau();
  const double diff = m.action_value() - m.value();
  ValueGradient g;
  g.exact = -(pv / tau) * (diff / tau + std::log((1.0 - pv) / (1.0 - pq)));
  g.computable = -diff;
  return g;
}

/// p_Q / p_V = exp((Q - V)/tau): weight of the optimal policy relative to the
/// baseline policy. Independent of C.
inline double optimality_ratio(double value, double action_value, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be finite and > 0");
  detail::require_finite(value, "V");
  detail::require_finite(action_value, "Q");
  return std::exp((action_value - value) / tau);
}

/// (1 - p_Q) / (1 - p_V): weight of the non-optimal policy. Depends on C, so
/// it is only available with an explicit model.
inline double non_optimality_ratio(const OptimalityModel& m) {
  return (1.0 - m.p_action_value()) / (1.0 - m.p_value());
}

}  // namespace fklrl

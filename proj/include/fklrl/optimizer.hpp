#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "fklrl/divergence.hpp"

namespace fklrl {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment descent on a flat parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index size, AdamConfig config = {})
      : config_(config), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {
    if (!(config.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  }

  /// params <- params - lr * m_hat / (sqrt(v_hat) + eps)
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
    if (params.size() != m_.size() || gradient.size() != m_.size()) {
      throw std::invalid_argument("optimizer state does not match parameter shape");
    }
    if (!gradient.allFinite()) {
      Eigen::Index bad = 0;
      for (; bad < gradient.size() && std::isfinite(gradient(bad)); ++bad) {
      }
      throw NumericalError("non-finite gradient at coordinate " + std::to_string(bad));
    }
    ++steps_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * gradient;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * gradient.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
  }

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t steps_ = 0;
};

}  // namespace fklrl

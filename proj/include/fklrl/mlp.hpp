#pragma once

// Fully connected network with a fixed block structure:
//   input -> depth x (linear(width) -> layer norm -> swish) -> linear head.
// Parameters live in one flat vector so that optimizers, soft updates and
// checkpoints can treat them uniformly. Forward and backward passes work on
// batches stored column-wise (one sample per column).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace fklrl {

inline constexpr double kLayerNormEpsilon = 1e-5;

struct MlpShape {
  int input_dim = 1;
  int hidden_width = 100;
  int hidden_depth = 5;
  int output_dim = 1;

  int layer_input_dim(int layer) const { return layer == 0 ? input_dim : hidden_width; }
  int head_input_dim() const { return hidden_depth == 0 ? input_dim : hidden_width; }

  /// Per hidden layer: weight, bias, norm gain, norm offset.
  std::size_t hidden_layer_size(int layer) const {
    const auto in = static_cast<std::size_t>(layer_input_dim(layer));
    const auto w = static_cast<std::size_t>(hidden_width);
    return w * in + 3 * w;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l < hidden_depth; ++l) n += hidden_layer_size(l);
    const auto out = static_cast<std::size_t>(output_dim);
    return n + out * static_cast<std::size_t>(head_input_dim()) + out;
  }

  void validate() const {
    if (input_dim < 1 || output_dim < 1 || hidden_depth < 0 || (hidden_depth > 0 && hidden_width < 1)) {
      throw std::invalid_argument("invalid network shape");
    }
  }

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// Flat parameter vector plus typed views into it.
///
/// Stable ordering: for each hidden layer l, W_l (column-major), b_l, gain_l,
/// offset_l; then the head weight (column-major) and head bias.
class MlpParams {
 public:
  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  explicit MlpParams(MlpShape shape) : shape_(shape) {
    shape_.validate();
    flat_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape_.parameter_count()));
  }

  MlpParams(MlpShape shape, Eigen::VectorXd flat) : shape_(shape), flat_(std::move(flat)) {
    shape_.validate();
    if (static_cast<std::size_t>(flat_.size()) != shape_.parameter_count()) {
      throw std::invalid_argument("flat parameter vector does not match network shape");
    }
  }

  const MlpShape& shape() const { return shape_; }
  const Eigen::VectorXd& flat() const { return flat_; }
  Eigen::VectorXd& flat() { return flat_; }
  std::size_t size() const { return static_cast<std::size_t>(flat_.size()); }

  ConstMatrixMap weight(int layer) const {
    return {flat_.data() + weight_offset(layer), shape_.hidden_width, shape_.layer_input_dim(layer)};
  }
  MatrixMap weight(int layer) {
    return {flat_.data() + weight_offset(layer), shape_.hidden_width, shape_.layer_input_dim(layer)};
  }
  ConstVectorMap bias(int layer) const { return {flat_.data() + bias_offset(layer), shape_.hidden_width}; }
  VectorMap bias(int layer) { return {flat_.data() + bias_offset(layer), shape_.hidden_width}; }
  ConstVectorMap gain(int layer) const {
    return {flat_.data() + bias_offset(layer) + shape_.hidden_width, shape_.hidden_width};
  }
  VectorMap gain(int layer) {
    return {flat_.data() + bias_offset(layer) + shape_.hidden_width, shape_.hidden_width};
  }
  ConstVectorMap offset(int layer) const {
    return {flat_.data() + bias_offset(layer) + 2 * shape_.hidden_width, shape_.hidden_width};
  }
  VectorMap offset(int layer) {
    return {flat_.data() + bias_offset(layer) + 2 * shape_.hidden_width, shape_.hidden_width};
  }
  ConstMatrixMap head_weight() const {
    return {flat_.data() + head_offset(), shape_.output_dim, shape_.head_input_dim()};
  }
  MatrixMap head_weight() {
    return {flat_.data() + head_offset(), shape_.output_dim, shape_.head_input_dim()};
  }
  ConstVectorMap head_bias() const {
    return {flat_.data() + head_offset() + shape_.output_dim * shape_.head_input_dim(), shape_.output_dim};
  }
  VectorMap head_bias() {
    return {flat_.data() + head_offset() + shape_.output_dim * shape_.head_input_dim(), shape_.output_dim};
  }

  /// Offset of the first weight of hidden layer `layer` in the flat vector.
  Eigen::Index weight_offset(int layer) const {
    Eigen::Index off = 0;
    for (int l = 0; l < layer; ++l) off += static_cast<Eigen::Index>(shape_.hidden_layer_size(l));
    return off;
  }
  Eigen::Index head_offset() const { return weight_offset(shape_.hidden_depth); }

 private:
  Eigen::Index bias_offset(int layer) const {
    return weight_offset(layer) +
           static_cast<Eigen::Index>(shape_.hidden_width) * shape_.layer_input_dim(layer);
  }

  MlpShape shape_;
  Eigen::VectorXd flat_;
};

/// Hidden weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)) (unit variance scaling),
/// norm gains 1, offsets and biases 0. The head weights use the same law scaled
/// by `head_scale`; head biases start at zero.
template <class Rng>
MlpParams init_mlp(const MlpShape& shape, Rng& rng, double head_scale) {
  MlpParams p(shape);
  auto fill_uniform = [&rng](auto&& m, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  };
  for (int l = 0; l < shape.hidden_depth; ++l) {
    fill_uniform(p.weight(l), std::sqrt(3.0 / shape.layer_input_dim(l)));
    p.gain(l).setOnes();
  }
  fill_uniform(p.head_weight(), head_scale * std::sqrt(3.0 / shape.head_input_dim()));
  return p;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double swish(double x) { return x * sigmoid(x); }

inline double swish_derivative(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

/// Intermediate values of a batched forward pass, kept for backprop.
struct MlpCache {
  struct Layer {
    Eigen::MatrixXd input;       // in x n
    Eigen::MatrixXd normalized;  // width x n, before gain/offset
    Eigen::RowVectorXd inv_std;  // 1 x n
    Eigen::MatrixXd affine;      // width x n, after gain/offset (swish input)
  };
  std::vector<Layer> layers;
  Eigen::MatrixXd head_input;  // head_in x n
  Eigen::MatrixXd output;      // out x n
};

/// Column-wise layer normalization of `z` (width x n).
inline void layer_normalize(const Eigen::MatrixXd& z, Eigen::MatrixXd& normalized,
                            Eigen::RowVectorXd& inv_std) {
  const double width = static_cast<double>(z.rows());
  const Eigen::RowVectorXd mean = z.colwise().sum() / width;
  normalized = z.rowwise() - mean;
  const Eigen::RowVectorXd var = normalized.array().square().colwise().sum() / width;
  inv_std = (var.array() + kLayerNormEpsilon).rsqrt();
  normalized.array().rowwise() *= inv_std.array();
}

inline Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& x, MlpCache* cache = nullptr) {
  const MlpShape& s = p.shape();
  if (x.rows() != s.input_dim) throw std::invalid_argument("input dimension does not match network");
  Eigen::MatrixXd h = x;
  if (cache) cache->layers.resize(static_cast<std::size_t>(s.hidden_depth));
  for (int l = 0; l < s.hidden_depth; ++l) {
    Eigen::MatrixXd z = p.weight(l) * h;
    z.colwise() += p.bias(l);
    Eigen::MatrixXd normalized;
    Eigen::RowVectorXd inv_std;
    layer_normalize(z, normalized, inv_std);
    Eigen::MatrixXd affine = (normalized.array().colwise() * p.gain(l).array()).colwise() + p.offset(l).array();
    Eigen::MatrixXd out = affine.unaryExpr([](double v) { return swish(v); });
    if (cache) {
      auto& c = cache->layers[static_cast<std::size_t>(l)];
      c.input = std::move(h);
      c.normalized = std::move(normalized);
      c.inv_std = std::move(inv_std);
      c.affine = std::move(affine);
    }
    h = std::move(out);
  }
  Eigen::MatrixXd y = p.head_weight() * h;
  y.colwise() += p.head_bias();
  if (cache) {
    cache->head_input = std::move(h);
    cache->output = y;
  }
  return y;
}

/// Reverse-mode gradient of sum_{i,j} d_out(i, j) * output(i, j) with respect
/// to all parameters, in flat order.
inline Eigen::VectorXd mlp_backward(const MlpParams& p, const MlpCache& cache, const Eigen::MatrixXd& d_out) {
  const MlpShape& s = p.shape();
  if (d_out.rows() != s.output_dim || d_out.cols() != cache.output.cols()) {
    throw std::invalid_argument("upstream gradient does not match forward pass");
  }
  MlpParams grad(s);
  grad.head_weight().noalias() = d_out * cache.head_input.transpose();
  grad.head_bias() = d_out.rowwise().sum();
  Eigen::MatrixXd dh = p.head_weight().transpose() * d_out;
  const double width = static_cast<double>(s.hidden_width);
  for (int l = s.hidden_depth - 1; l >= 0; --l) {
    const auto& c = cache.layers[static_cast<std::size_t>(l)];
    const Eigen::MatrixXd d_affine =
        dh.array() * c.affine.unaryExpr([](double v) { return swish_derivative(v); }).array();
    grad.gain(l) = (d_affine.array() * c.normalized.array()).rowwise().sum();
    grad.offset(l) = d_affine.rowwise().sum();
    const Eigen::MatrixXd d_norm = d_affine.array().colwise() * p.gain(l).array();
    const Eigen::RowVectorXd mean_d = d_norm.colwise().sum() / width;
    const Eigen::RowVectorXd mean_dx = (d_norm.array() * c.normalized.array()).colwise().sum() / width;
    Eigen::MatrixXd dz = d_norm.rowwise() - mean_d;
    dz.array() -= c.normalized.array().rowwise() * mean_dx.array();
    dz.array().rowwise() *= c.inv_std.array();
    grad.weight(l).noalias() = dz * c.input.transpose();
    grad.bias(l) = dz.rowwise().sum();
    if (l > 0) dh = p.weight(l).transpose() * dz;
  }
  return std::move(grad.flat());
}

/// target <- (1 - rate) * target + rate * main.
inline void soft_update(MlpParams& target, const MlpParams& main, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("soft update rate must lie in (0, 1]");
  if (target.shape() != main.shape()) throw std::invalid_argument("soft update between different shapes");
  if (rate == 1.0) {
    target.flat() = main.flat();
    return;
  }
  target.flat() = (1.0 - rate) * target.flat() + rate * main.flat();
}

}  // namespace fklrl

#pragma once

// Capacity-bounded prioritized replay. Records keep their most recent signed TD
// error; sampling weights are derived from it at draw time under either rule:
//   RKL: w = |delta| + eps
//   FKL: w = |surrogate(delta, tau)| + eps   (tau = the current value)
// p_i = w_i^alpha / sum_j w_j^alpha.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "fklrl/divergence.hpp"

namespace fklrl {

enum class PriorityRule { Rkl, Fkl };

/// Binary tree of partial sums over a fixed number of leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity) : leaves_(1) {
    if (capacity == 0) throw std::invalid_argument("sum tree capacity must be > 0");
    while (leaves_ < capacity) leaves_ *= 2;
    nodes_.assign(2 * leaves_, 0.0);
    capacity_ = capacity;
  }

  std::size_t capacity() const { return capacity_; }
  double total() const { return nodes_[1]; }
  double get(std::size_t leaf) const { return nodes_[leaves_ + leaf]; }

  void set(std::size_t leaf, double value) {
    if (leaf >= capacity_) throw std::out_of_range("sum tree leaf out of range");
    std::size_t node = leaves_ + leaf;
    nodes_[node] = value;
    for (node /= 2; node >= 1; node /= 2) nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
  }

  /// Replaces all leaves at once in O(n).
  void assign(std::span<const double> values) {
    if (values.size() > capacity_) throw std::out_of_range("too many sum tree leaves");
    std::fill(nodes_.begin(), nodes_.end(), 0.0);
    std::copy(values.begin(), values.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(leaves_));
    for (std::size_t node = leaves_ - 1; node >= 1; --node) nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
  }

  /// Leaf whose cumulative interval contains `u` in [0, total()).
  std::size_t find(double u) const {
    std::size_t node = 1;
    while (node < leaves_) {
      const std::size_t left = 2 * node;
      if (u < nodes_[left]) {
        node = left;
      } else {
        u -= nodes_[left];
        node = left + 1;
      }
    }
    std::size_t leaf = node - leaves_;
    // rounding can push u past the last positive leaf
    while (leaf > 0 && (leaf >= capacity_ || nodes_[leaves_ + leaf] <= 0.0)) --leaf;
    return leaf;
  }

 private:
  std::size_t leaves_;
  std::size_t capacity_ = 0;
  std::vector<double> nodes_;
};

struct ReplayConfig {
  std::size_t capacity = 100000;
  double alpha = 0.6;
  double beta = 0.4;
  double epsilon = 1e-5;
};

/// Handle to a stored record: a monotone insertion id. Ids of evicted records
/// are detected as stale.
using RecordId = std::uint64_t;

struct ReplaySample {
  std::vector<RecordId> ids;
  /// (N p_i)^-beta, divided by the batch maximum.
  std::vector<double> weights;
};

template <class Record>
class PrioritizedReplay {
 public:
  explicit PrioritizedReplay(ReplayConfig config) : config_(config), tree_(config.capacity) {
    if (config.capacity == 0) throw std::invalid_argument("replay capacity must be > 0");
    if (!(config.alpha >= 0.0)) throw std::invalid_argument("alpha_P must be >= 0");
    if (!(config.beta >= 0.0 && config.beta <= 1.0)) throw std::invalid_argument("beta_P must lie in [0, 1]");
    if (!(config.epsilon > 0.0)) throw std::invalid_argument("priority epsilon must be > 0");
    records_.reserve(std::min<std::size_t>(config.capacity, 1 << 16));
  }

  const ReplayConfig& config() const { return config_; }
  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return config_.capacity; }
  bool empty() const { return records_.empty(); }

  /// Stores a record with its signed TD error; the oldest record is evicted
  /// once the buffer is full.
  RecordId push(Record record, double delta) {
    detail::require_finite(delta, "TD error");
    const std::size_t slot = static_cast<std::size_t>(next_id_ % config_.capacity);
    if (records_.size() < config_.capacity) {
      records_.push_back(std::move(record));
      deltas_.push_back(delta);
    } else {
      records_[slot] = std::move(record);
      deltas_[slot] = delta;
    }
    refresh_leaf(slot);
    return next_id_++;
  }

  bool contains(RecordId id) const { return id < next_id_ && next_id_ - id <= records_.size(); }

  const Record& at(RecordId id) const {
    if (!contains(id)) throw std::out_of_range("replay record was evicted or never stored");
    return records_[slot_of(id)];
  }
  double delta(RecordId id) const {
    if (!contains(id)) throw std::out_of_range("replay record was evicted or never stored");
    return deltas_[slot_of(id)];
  }

  /// Replaces stored TD errors; ids evicted since sampling are skipped.
  void update_priorities(std::span<const RecordId> ids, std::span<const double> deltas) {
    if (ids.size() != deltas.size()) throw std::invalid_argument("one TD error per id required");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!contains(ids[i])) continue;
      detail::require_finite(deltas[i], "TD error");
      const std::size_t slot = slot_of(ids[i]);
      deltas_[slot] = deltas[i];
      refresh_leaf(slot);
    }
  }

  /// Unnormalized priority w of a stored TD error under `rule`.
  double weight_of(double delta, PriorityRule rule, Uncertainty tau) const {
    const double magnitude = rule == PriorityRule::Rkl ? std::abs(delta) : std::abs(surrogate_td(delta, tau));
    return magnitude + config_.epsilon;
  }

  /// w^alpha, the value held by the sum tree.
  double leaf_value(double delta, PriorityRule rule, Uncertainty tau) const {
    if (config_.alpha == 0.0) return 1.0;
    return std::exp(config_.alpha * std::log(weight_of(delta, rule, tau)));
  }

  /// Exact sampling probabilities, in slot order.
  std::vector<double> probabilities(PriorityRule rule, Uncertainty tau) const {
    std::vector<double> p(records_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] = leaf_value(deltas_[i], rule, tau));
    for (double& v : p) v /= total;
    return p;
  }

  /// Id of the record currently held in a slot.
  RecordId id_of_slot(std::size_t slot) const {
    if (slot >= records_.size()) throw std::out_of_range("replay slot out of range");
    const RecordId base = next_id_ - records_.size();
    const RecordId base_slot = base % config_.capacity;
    const RecordId offset = (slot + config_.capacity - base_slot) % config_.capacity;
    return base + offset;
  }

  /// Slot drawn for a uniform `u` in [0, total) by the sum tree.
  std::size_t find_slot(double u, PriorityRule rule, Uncertainty tau) {
    ensure_tree(rule, tau);
    return tree_.find(u);
  }

  double total_priority(PriorityRule rule, Uncertainty tau) {
    ensure_tree(rule, tau);
    return tree_.total();
  }

  /// Draws n records with replacement.
  template <class Rng>
  ReplaySample sample(std::size_t n, PriorityRule rule, Uncertainty tau, Rng& rng) {
    if (records_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
    ensure_tree(rule, tau);
    const double total = tree_.total();
    std::uniform_real_distribution<double> uniform(0.0, total);
    ReplaySample out;
    out.ids.reserve(n);
    out.weights.reserve(n);
    const double count = static_cast<double>(records_.size());
    double max_weight = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t slot = tree_.find(uniform(rng));
      const double p = tree_.get(slot) / total;
      const double w = std::pow(count * p, -config_.beta);
      max_weight = std::max(max_weight, w);
      out.ids.push_back(id_of_slot(slot));
      out.weights.push_back(w);
    }
    for (double& w : out.weights) w /= max_weight;
    return out;
  }

 private:
  std::size_t slot_of(RecordId id) const { return static_cast<std::size_t>(id % config_.capacity); }

  // The tree is valid for one (rule, tau) pair at a time; a different pair
  // triggers an O(n) rebuild, otherwise leaves are refreshed in O(log n).
  void ensure_tree(PriorityRule rule, Uncertainty tau) {
    const Uncertainty key = rule == PriorityRule::Rkl ? Uncertainty::infinite() : tau;
    if (tree_rule_ == rule && tree_tau_ == key) return;
    tree_rule_ = rule;
    tree_tau_ = key;
    std::vector<double> leaves(records_.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i] = leaf_value(deltas_[i], rule, tau);
    tree_.assign(leaves);
  }

  void refresh_leaf(std::size_t slot) {
    if (!tree_rule_) return;
    tree_.set(slot, leaf_value(deltas_[slot], *tree_rule_, tree_tau_));
  }

  ReplayConfig config_;
  SumTree tree_;
  std::vector<Record> records_;
  std::vector<double> deltas_;
  RecordId next_id_ = 0;
  std::optional<PriorityRule> tree_rule_;
  Uncertainty tree_tau_ = Uncertainty::infinite();
};

}  // namespace fklrl

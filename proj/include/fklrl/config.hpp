#pragma once

// Run configuration and its flat `key = value` text form. The same form is used
// for user config files and for the metadata written next to every run.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "fklrl/agent.hpp"
#include "fklrl/divergence.hpp"
#include "fklrl/traces.hpp"

namespace fklrl {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& text, const std::string& key) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("bad number '" + text + "' for " + key);
  }
  return v;
}

template <class Int>
Int parse_integer(const std::string& text, const std::string& key) {
  Int v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("bad integer '" + text + "' for " + key);
  }
  return v;
}

inline bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("bad boolean '" + text + "' for " + key);
}

struct RunConfig {
  std::string env = "grid";
  Variant mode = Variant::Fkl;
  Optimism eta = Optimism::of(0.5);
  double gamma = 0.99;
  double learning_rate = 5e-4;
  double epsilon = 1e-5;
  double beta = 0.999;
  double tau_h = 0.1;
  double lambda = 0.5;
  double soft_update_rate = 0.01;
  std::size_t replay_capacity = 100000;
  int replay_batches = 32;
  int batch_size = 32;
  double priority_alpha = 0.6;
  double priority_beta = 0.4;
  double rho_clip = 1.3;
  GaeDiscount gae_discount = GaeDiscount::Paper;
  int hidden_width = 100;
  int hidden_depth = 5;
  int episodes = 200;
  std::uint64_t seed = 0;
  std::string out = "runs/run";
  int checkpoint_every = 50;
  /// Off by default so that metrics files are reproducible byte for byte.
  bool record_wall_clock = false;

  AgentMode agent_mode() const {
    switch (mode) {
      case Variant::Rkl: return AgentMode::rkl();
      case Variant::RklClipped: return AgentMode::rkl_clipped(rho_clip);
      case Variant::Fkl: return AgentMode::fkl(eta);
    }
    return AgentMode::rkl();
  }

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0, 1)");
    if (!(tau_h >= 0.0)) throw std::invalid_argument("tau_h must be >= 0");
    validate_lambda(lambda);
    if (!(soft_update_rate > 0.0 && soft_update_rate <= 1.0)) throw std::invalid_argument("soft_update_rate must lie in (0, 1]");
    if (replay_capacity == 0) throw std::invalid_argument("replay_capacity must be > 0");
    if (replay_batches < 0 || batch_size < 1) throw std::invalid_argument("replay batch settings must be positive");
    if (!(priority_alpha >= 0.0)) throw std::invalid_argument("priority_alpha must be >= 0");
    if (!(priority_beta >= 0.0 && priority_beta <= 1.0)) throw std::invalid_argument("priority_beta must lie in [0, 1]");
    if (!(rho_clip > 0.0)) throw std::invalid_argument("rho_clip must be > 0");
    if (hidden_width < 1 || hidden_depth < 0) throw std::invalid_argument("invalid network size");
    if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be >= 1");
    if (out.empty()) throw std::invalid_argument("output directory must be set");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Ordered key/value view of a config; every field appears exactly once.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const RunConfig& c) {
  return {
      {"env", c.env},
      {"mode", to_string(c.mode)},
      {"eta", c.eta.to_string()},
      {"gamma", format_double(c.gamma)},
      {"learning_rate", format_double(c.learning_rate)},
      {"epsilon", format_double(c.epsilon)},
      {"beta", format_double(c.beta)},
      {"tau_h", format_double(c.tau_h)},
      {"lambda", format_double(c.lambda)},
      {"soft_update_rate", format_double(c.soft_update_rate)},
      {"replay_capacity", std::to_string(c.replay_capacity)},
      {"replay_batches", std::to_string(c.replay_batches)},
      {"batch_size", std::to_string(c.batch_size)},
      {"priority_alpha", format_double(c.priority_alpha)},
      {"priority_beta", format_double(c.priority_beta)},
      {"rho_clip", format_double(c.rho_clip)},
      {"gae_discount", to_string(c.gae_discount)},
      {"hidden_width", std::to_string(c.hidden_width)},
      {"hidden_depth", std::to_string(c.hidden_depth)},
      {"episodes", std::to_string(c.episodes)},
      {"seed", std::to_string(c.seed)},
      {"out", c.out},
      {"checkpoint_every", std::to_string(c.checkpoint_every)},
      {"record_wall_clock", c.record_wall_clock ? "true" : "false"},
  };
}

/// Sets one field from its text form. Unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "env") c.env = value;
  else if (key == "mode") c.mode = parse_variant(value);
  else if (key == "eta") c.eta = Optimism::parse(value);
  else if (key == "gamma") c.gamma = parse_double(value, key);
  else if (key == "learning_rate") c.learning_rate = parse_double(value, key);
  else if (key == "epsilon") c.epsilon = parse_double(value, key);
  else if (key == "beta") c.beta = parse_double(value, key);
  else if (key == "tau_h") c.tau_h = parse_double(value, key);
  else if (key == "lambda") c.lambda = parse_double(value, key);
  else if (key == "soft_update_rate") c.soft_update_rate = parse_double(value, key);
  else if (key == "replay_capacity") c.replay_capacity = parse_integer<std::size_t>(value, key);
  else if (key == "replay_batches") c.replay_batches = parse_integer<int>(value, key);
  else if (key == "batch_size") c.batch_size = parse_integer<int>(value, key);
  else if (key == "priority_alpha") c.priority_alpha = parse_double(value, key);
  else if (key == "priority_beta") c.priority_beta = parse_double(value, key);
  else if (key == "rho_clip") c.rho_clip = parse_double(value, key);
  else if (key == "gae_discount") c.gae_discount = parse_gae_discount(value);
  else if (key == "hidden_width") c.hidden_width = parse_integer<int>(value, key);
  else if (key == "hidden_depth") c.hidden_depth = parse_integer<int>(value, key);
  else if (key == "episodes") c.episodes = parse_integer<int>(value, key);
  else if (key == "seed") c.seed = parse_integer<std::uint64_t>(value, key);
  else if (key == "out") c.out = value;
  else if (key == "checkpoint_every") c.checkpoint_every = parse_integer<int>(value, key);
  else if (key == "record_wall_clock") c.record_wall_clock = parse_bool(value, key);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. Keys are returned in file
/// order; a repeated key keeps its last value.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(number) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("line " + std::to_string(number) + ": empty key");
    out[key] = detail::trim(line.substr(eq + 1));
  }
  return out;
}

/// Applies a config document on top of `base`. Keys starting with `run.` are
/// run metadata and are ignored here.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  for (const auto& [key, value] : parse_key_values(in)) {
    if (key.rfind("run.", 0) == 0) continue;
    set_config_value(base, key, value);
  }
  return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  return parse_config(in, std::move(base));
}

inline void write_config(std::ostream& out, const RunConfig& c) {
  for (const auto& [key, value] : to_key_values(c)) out << key << " = " << value << '\n';
}

}  // namespace fklrl

#pragma once

// Checkpoints are single JSON documents: architecture metadata plus the flat
// parameter arrays in their stable order. Doubles are written in shortest
// round-trip form, so save/load is bit exact.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fklrl/agent.hpp"
#include "fklrl/mlp.hpp"
#include "fklrl/networks.hpp"

namespace fklrl {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::string env;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  int episode = 0;
  ActorCritic main;
  ActorCritic target;
};

namespace detail {

inline nlohmann::json shape_to_json(const MlpShape& s) {
  return {{"input_dim", s.input_dim}, {"hidden_width", s.hidden_width}, {"hidden_depth", s.hidden_depth},
          {"output_dim", s.output_dim}};
}

inline MlpShape shape_from_json(const nlohmann::json& j) {
  MlpShape s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_width = j.at("hidden_width").get<int>();
  s.hidden_depth = j.at("hidden_depth").get<int>();
  s.output_dim = j.at("output_dim").get<int>();
  s.validate();
  return s;
}

inline nlohmann::json params_to_json(const MlpParams& p) {
  if (!p.flat().allFinite()) throw NumericalError("refusing to checkpoint non-finite parameters");
  return {{"shape", shape_to_json(p.shape())},
          {"values", std::vector<double>(p.flat().data(), p.flat().data() + p.flat().size())}};
}

inline MlpParams params_from_json(const nlohmann::json& j) {
  const MlpShape shape = shape_from_json(j.at("shape"));
  const auto values = j.at("values").get<std::vector<double>>();
  return MlpParams(shape, Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
}

inline nlohmann::json actor_critic_to_json(const ActorCritic& ac) {
  return {{"value", params_to_json(ac.value)}, {"policy", params_to_json(ac.policy)}};
}

inline ActorCritic actor_critic_from_json(const nlohmann::json& j, const PolicyHead& head) {
  ActorCritic ac{params_from_json(j.at("value")), params_from_json(j.at("policy")), head};
  if (ac.value.shape().output_dim != kValueHeads) throw std::invalid_argument("checkpoint value network has wrong head count");
  if (ac.policy.shape().output_dim != head.output_dim()) throw std::invalid_argument("checkpoint policy head mismatch");
  return ac;
}

}  // namespace detail

inline std::string checkpoint_to_text(const Checkpoint& c) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["env"] = c.env;
  j["gamma"] = c.gamma;
  j["seed"] = c.seed;
  j["episode"] = c.episode;
  j["policy_head"] = {{"kind", c.main.head.kind == PolicyHead::Kind::Gaussian ? "gaussian" : "categorical"},
                      {"size", c.main.head.size}};
  j["main"] = detail::actor_critic_to_json(c.main);
  j["target"] = detail::actor_critic_to_json(c.target);
  return j.dump(1);
}

inline Checkpoint checkpoint_from_text(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw std::invalid_argument("unsupported checkpoint format version " + std::to_string(version));
  }
  PolicyHead head;
  const auto kind = j.at("policy_head").at("kind").get<std::string>();
  if (kind == "gaussian") head.kind = PolicyHead::Kind::Gaussian;
  else if (kind == "categorical") head.kind = PolicyHead::Kind::Categorical;
  else throw std::invalid_argument("unknown policy head kind '" + kind + "'");
  head.size = j.at("policy_head").at("size").get<int>();
  Checkpoint c{j.at("env").get<std::string>(), j.at("gamma").get<double>(), j.at("seed").get<std::uint64_t>(),
               j.at("episode").get<int>(), detail::actor_critic_from_json(j.at("main"), head),
               detail::actor_critic_from_json(j.at("target"), head)};
  return c;
}

/// Writes through a temporary file and a rename, so an existing checkpoint is
/// only ever replaced by a complete one.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const std::string text = checkpoint_to_text(c);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_text(buf.str());
}

}  // namespace fklrl

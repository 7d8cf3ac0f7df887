// Command-line front end: train, sweep, eval and oracle.
//
// Exit codes: 0 success, 1 usage or input error, 2 numerical abort.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fklrl/fklrl.hpp"

namespace {

using namespace fklrl;

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// "0..9" (inclusive) or "0,3,7".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = parse_integer<std::uint64_t>(text.substr(0, dots), "seeds");
    const auto hi = parse_integer<std::uint64_t>(text.substr(dots + 2), "seeds");
    if (hi < lo) throw std::invalid_argument("empty seed range '" + text + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  for (const auto& item : split(text, ',')) seeds.push_back(parse_integer<std::uint64_t>(item, "seeds"));
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

std::vector<Optimism> parse_etas(const std::string& text) {
  std::vector<Optimism> etas;
  for (const auto& item : split(text, ',')) etas.push_back(Optimism::parse(item));
  if (etas.empty()) throw std::invalid_argument("no etas given");
  return etas;
}

/// Config flags shared by train and sweep. Values given on the command line
/// override the config file, which overrides the defaults.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void add_to(CLI::App& cmd, bool with_eta_and_seed) {
    cmd.add_option("--config", config_file, "key = value config file");
    add(cmd, "--env", "env", "environment: grid, bandit or pendulum");
    add(cmd, "--mode", "mode", "rkl, rkl-clipped or fkl");
    if (with_eta_and_seed) {
      add(cmd, "--eta", "eta", "optimism level in (0, 1), or zero");
      add(cmd, "--seed", "seed", "random seed");
    }
    add(cmd, "--episodes", "episodes", "number of training episodes");
    add(cmd, "--out", "out", "output directory");
    add(cmd, "--lambda", "lambda", "trace decay in [0, 1)");
    add(cmd, "--tau-h", "tau_h", "entropy bonus weight");
    add(cmd, "--gae-discount", "gae_discount", "paper or standard");
    add(cmd, "--gamma", "gamma", "discount factor");
    add(cmd, "--learning-rate", "learning_rate", "Adam step size");
    add(cmd, "--hidden-width", "hidden_width", "neurons per hidden layer");
    add(cmd, "--hidden-depth", "hidden_depth", "number of hidden layers");
    add(cmd, "--replay-batches", "replay_batches", "replay batches per episode");
    add(cmd, "--batch-size", "batch_size", "samples per replay batch");
    add(cmd, "--checkpoint-every", "checkpoint_every", "episodes between checkpoints");
    cmd.add_flag_callback("--wall-clock", [this] { values["record_wall_clock"] = "true"; },
                          "record elapsed milliseconds (makes metrics non-reproducible)");
  }

  RunConfig resolve() const {
    RunConfig c = config_file.empty() ? RunConfig{} : load_config_file(config_file);
    for (const auto& [key, value] : values) set_config_value(c, key, value);
    c.validate();
    return c;
  }

 private:
  void add(CLI::App& cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd.add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }
};

int run_train(const ConfigFlags& flags) {
  const RunConfig config = flags.resolve();
  const TrainResult r = train(config);
  std::cout << "run " << to_string(r.status) << ": " << r.records.size() << " episodes -> "
            << r.directory.string() << '\n';
  if (r.status == RunStatus::NumericalAbort) {
    std::cerr << "numerical abort: " << r.error << '\n';
    return kExitNumerical;
  }
  return 0;
}

int run_sweep(const ConfigFlags& flags, const std::string& etas, const std::string& seeds, int workers) {
  const RunConfig base = flags.resolve();
  const auto rows = sweep(base, parse_etas(etas), parse_seeds(seeds), workers);
  write_summary(std::cout, rows);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& env, int episodes, std::uint64_t seed,
             const std::string& out) {
  const auto rows = evaluate_checkpoint(checkpoint, env, episodes, seed);
  if (out.empty()) {
    write_eval_csv(std::cout, rows);
  } else {
    std::ofstream file(out, std::ios::trunc);
    if (!file) throw std::invalid_argument("cannot write '" + out + "'");
    write_eval_csv(file, rows);
  }
  return 0;
}

int run_oracle(const std::string& env_id, const std::string& tau_grid, const std::string& policy_name) {
  auto env = make_environment(env_id);
  const TabularMdp mdp = enumerate_mdp(*env);
  TabularPolicy pi = uniform_policy(mdp);
  if (policy_name != "uniform") {
    const int a = parse_integer<int>(policy_name, "policy");
    if (a < 0 || a >= mdp.n_actions()) throw std::invalid_argument("policy action out of range");
    pi = deterministic_policy(mdp, std::vector<int>(static_cast<std::size_t>(mdp.n_states()), a));
  }
  std::vector<double> taus;
  for (const auto& item : split(tau_grid, ',')) taus.push_back(parse_double(item, "tau-grid"));

  const Eigen::VectorXd exact = policy_evaluation_exact(mdp, pi);
  std::vector<Eigen::VectorXd> optimistic;
  for (double tau : taus) optimistic.push_back(risk_seeking_evaluation(mdp, pi, tau).values);
  const Eigen::VectorXd best = value_iteration(mdp).values;

  std::cout << "state,v_exact";
  for (double tau : taus) std::cout << ",v_fkl_tau_" << format_double(tau);
  std::cout << ",v_star\n";
  for (int s = 0; s < mdp.n_states(); ++s) {
    std::cout << s << ',' << format_double(exact(s));
    for (const auto& v : optimistic) std::cout << ',' << format_double(v(s));
    std::cout << ',' << format_double(best(s)) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward/reverse KL actor-critic training and analysis"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train one agent");
  train_flags.add_to(*train_cmd, true);

  ConfigFlags sweep_flags;
  std::string etas = "zero,0.1,0.5,0.9";
  std::string seeds = "0..9";
  int workers = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "train every (eta, seed) pair and summarize");
  sweep_flags.add_to(*sweep_cmd, false);
  sweep_cmd->add_option("--etas", etas, "comma-separated optimism levels")->capture_default_str();
  sweep_cmd->add_option("--seeds", seeds, "seed range a..b or comma list")->capture_default_str();
  sweep_cmd->add_option("--workers", workers, "concurrent training processes")->capture_default_str();

  std::string checkpoint, eval_env, eval_out;
  int eval_episodes = kDefaultEvalEpisodes;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with a sampling policy");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint.json path")->required();
  eval_cmd->add_option("--env", eval_env, "environment id")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "evaluation episodes")->capture_default_str();
  eval_cmd->add_option("--seed", eval_seed, "random seed")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "write CSV here instead of stdout");

  std::string oracle_env = "bandit";
  std::string tau_grid = "0.5,1,2,5";
  std::string oracle_policy = "uniform";
  auto* oracle_cmd = app.add_subcommand("oracle", "exact tabular values for grid or bandit");
  oracle_cmd->add_option("--env", oracle_env, "grid or bandit")->capture_default_str();
  oracle_cmd->add_option("--tau-grid", tau_grid, "comma-separated tau values")->capture_default_str();
  oracle_cmd->add_option("--policy", oracle_policy, "uniform, or an action index taken everywhere")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train_flags);
    if (*sweep_cmd) return run_sweep(sweep_flags, etas, seeds, workers);
    if (*eval_cmd) return run_eval(checkpoint, eval_env, eval_episodes, eval_seed, eval_out);
    if (*oracle_cmd) return run_oracle(oracle_env, tau_grid, oracle_policy);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

#pragma once

// Cross-product sweeps over optimism levels and seeds. Each run executes in
// its own forked process with a private output directory
// <out>/eta_<eta>/seed_<seed>; results are summarized into <out>/summary.csv.

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fklrl/config.hpp"
#include "fklrl/metrics.hpp"
#include "fklrl/train.hpp"

namespace fklrl {

inline constexpr std::size_t kSummaryWindow = 100;

struct SweepRow {
  Optimism eta = Optimism::zero();
  std::uint64_t seed = 0;
  /// completed, numerical_abort or failed
  std::string status;
  int episodes = 0;
  double median_return = 0.0;
  double mean_abs_delta = 0.0;
  double mean_log_pi = 0.0;
  double final_tau = 0.0;
  double tau_cv = 0.0;
};

inline std::filesystem::path sweep_run_directory(const std::filesystem::path& root, Optimism eta, std::uint64_t seed) {
  return root / ("eta_" + eta.to_string()) / ("seed_" + std::to_string(seed));
}

/// Summary statistics over the final window of a run's metrics.
inline SweepRow summarize_run(Optimism eta, std::uint64_t seed, const std::string& status,
                              const std::vector<RunRecord>& rows) {
  SweepRow s{eta, seed, status, static_cast<int>(rows.size())};
  const auto last = tail(rows, kSummaryWindow);
  s.median_return = median(column(last, &RunRecord::episode_return));
  s.mean_abs_delta = mean(column(last, &RunRecord::mean_abs_delta));
  s.mean_log_pi = mean(column(last, &RunRecord::mean_log_pi));
  s.final_tau = rows.empty() ? std::nan("") : rows.back().tau;
  s.tau_cv = coefficient_of_variation(column(last, &RunRecord::tau));
  return s;
}

inline void write_summary(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "eta,seed,status,episodes,median_return,mean_abs_delta,mean_log_pi,final_tau,tau_cv\n";
  for (const auto& r : rows) {
    out << r.eta.to_string() << ',' << r.seed << ',' << r.status << ',' << r.episodes << ','
        << format_double(r.median_return) << ',' << format_double(r.mean_abs_delta) << ','
        << format_double(r.mean_log_pi) << ',' << format_double(r.final_tau) << ',' << format_double(r.tau_cv)
        << '\n';
  }
}

namespace detail {

enum : int { kChildCompleted = 0, kChildNumericalAbort = 2, kChildFailed = 3 };

[[noreturn]] inline void run_child(const RunConfig& config) {
  int code = kChildFailed;
  try {
    code = train(config).status == RunStatus::Completed ? kChildCompleted : kChildNumericalAbort;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "run %s failed: %s\n", config.out.c_str(), e.what());
  }
  std::fflush(nullptr);
  _exit(code);
}

inline std::string child_status(int wait_status) {
  if (!WIFEXITED(wait_status)) return "failed";
  switch (WEXITSTATUS(wait_status)) {
    case kChildCompleted: return "completed";
    case kChildNumericalAbort: return "numerical_abort";
    default: return "failed";
  }
}

}  // namespace detail

/// Runs every (eta, seed) pair with at most `workers` concurrent processes.
/// A failed run is recorded in the summary and the sweep carries on.
inline std::vector<SweepRow> sweep(const RunConfig& base, const std::vector<Optimism>& etas,
                                   const std::vector<std::uint64_t>& seeds, int workers = 1) {
  if (etas.empty() || seeds.empty()) throw std::invalid_argument("sweep needs at least one eta and one seed");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  base.validate();
  const std::filesystem::path root = base.out;
  std::filesystem::create_directories(root);

  std::vector<RunConfig> jobs;
  for (const Optimism& eta : etas) {
    for (std::uint64_t seed : seeds) {
      RunConfig c = base;
      c.eta = eta;
      c.seed = seed;
      c.out = sweep_run_directory(root, eta, seed).string();
      jobs.push_back(c);
    }
  }

  std::vector<std::string> status(jobs.size());
  std::map<pid_t, std::size_t> running;
  auto reap_one = [&] {
    int ws = 0;
    const pid_t pid = ::waitpid(-1, &ws, 0);
    if (pid < 0) throw std::runtime_error("waitpid failed");
    if (auto it = running.find(pid); it != running.end()) {
      status[it->second] = detail::child_status(ws);
      running.erase(it);
    }
  };

  std::fflush(nullptr);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    while (static_cast<int>(running.size()) >= workers) reap_one();
    const pid_t pid = ::fork();
    if (pid < 0) {
      status[i] = "failed";
      continue;
    }
    if (pid == 0) detail::run_child(jobs[i]);
    running.emplace(pid, i);
  }
  while (!running.empty()) reap_one();

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    std::vector<RunRecord> records;
    const RunFiles files{jobs[i].out};
    if (std::filesystem::exists(files.metrics())) {
      try {
        records = read_metrics(files.metrics());
      } catch (const std::exception&) {
        status[i] = "failed";
      }
    }
    rows.push_back(summarize_run(jobs[i].eta, jobs[i].seed, status[i], records));
  }
  std::ofstream out(root / "summary.csv", std::ios::trunc);
  write_summary(out, rows);
  return rows;
}

}  // namespace fklrl

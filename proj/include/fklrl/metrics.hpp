#pragma once

// Per-episode metrics rows and their CSV persistence. Rows are appended and
// flushed one at a time, so a crashed run leaves every completed episode on disk.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fklrl/config.hpp"

namespace fklrl {

struct RunRecord {
  int episode = 0;
  /// Sum of raw rewards; the entropy bonus is not included.
  double episode_return = 0.0;
  double mean_abs_delta = 0.0;
  double mean_log_pi = 0.0;
  /// Current tau: inf in zero-optimism mode, nan for reverse-KL runs.
  double tau = 0.0;
  double delta_scale = 0.0;
  double wall_ms = 0.0;
};

inline const std::string& metrics_header() {
  static const std::string header = "episode,return,mean_abs_delta,mean_log_pi,tau,delta_scale,wall_ms";
  return header;
}

inline std::string format_record(const RunRecord& r) {
  return std::to_string(r.episode) + ',' + format_double(r.episode_return) + ',' + format_double(r.mean_abs_delta) +
         ',' + format_double(r.mean_log_pi) + ',' + format_double(r.tau) + ',' + format_double(r.delta_scale) + ',' +
         format_double(r.wall_ms);
}

/// Appends rows to a metrics CSV. The header is written only when the file is
/// new or empty; episode indices must increase strictly.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path) : path_(path) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw std::runtime_error("cannot open metrics file '" + path.string() + "'");
    if (fresh) {
      out_ << metrics_header() << '\n';
      out_.flush();
    }
  }

  void append(const RunRecord& r) {
    if (r.episode <= last_episode_) throw std::logic_error("metrics episode index must increase");
    last_episode_ = r.episode;
    out_ << format_record(r) << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("failed writing metrics file '" + path_.string() + "'");
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  int last_episode_ = -1;
};

inline std::vector<RunRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open metrics file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) {
    throw std::invalid_argument("'" + path.string() + "' is not a metrics CSV");
  }
  std::vector<RunRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 7) throw std::invalid_argument("malformed metrics row: " + line);
    RunRecord r;
    r.episode = parse_integer<int>(cells[0], "episode");
    r.episode_return = parse_double(cells[1], "return");
    r.mean_abs_delta = parse_double(cells[2], "mean_abs_delta");
    r.mean_log_pi = parse_double(cells[3], "mean_log_pi");
    r.tau = parse_double(cells[4], "tau");
    r.delta_scale = parse_double(cells[5], "delta_scale");
    r.wall_ms = parse_double(cells[6], "wall_ms");
    rows.push_back(r);
  }
  return rows;
}

// Summary statistics used by sweeps and trend checks.

inline double median(std::vector<double> xs) {
  if (xs.empty()) return std::nan("");
  const auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  if (xs.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(xs.begin(), mid);
  return 0.5 * (lower + upper);
}

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) return std::nan("");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Population standard deviation over mean; nan for an empty or zero-mean series.
inline double coefficient_of_variation(const std::vector<double>& xs) {
  const double m = mean(xs);
  if (xs.empty() || m == 0.0) return std::nan("");
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size())) / std::abs(m);
}

/// The last `window` rows (or all of them, if fewer).
inline std::vector<RunRecord> tail(const std::vector<RunRecord>& rows, std::size_t window) {
  const std::size_t start = rows.size() > window ? rows.size() - window : 0;
  return {rows.begin() + static_cast<std::ptrdiff_t>(start), rows.end()};
}

template <class Field>
std::vector<double> column(const std::vector<RunRecord>& rows, Field field) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.*field);
  return out;
}

}  // namespace fklrl

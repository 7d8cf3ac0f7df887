#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

namespace fklrl::testing {

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <class F>
double central_difference(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Fourth-order central difference.
template <class F>
double five_point_difference(F&& f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12.0 * h);
}

/// Largest relative error between `grad` and a finite-difference estimate of
/// d loss / d flat(i), over `coords` random coordinates of `flat`.
template <class Loss, class Rng>
double max_coordinate_error(Eigen::VectorXd& flat, const Eigen::VectorXd& grad, Loss&& loss, int coords, Rng& rng,
                            double h = 1e-4, double floor = 1e-7) {
  std::uniform_int_distribution<Eigen::Index> pick(0, flat.size() - 1);
  double worst = 0.0;
  for (int k = 0; k < coords; ++k) {
    const Eigen::Index i = pick(rng);
    const double saved = flat(i);
    const double fd = five_point_difference(
        [&](double x) {
          flat(i) = x;
          return loss();
        },
        saved, h);
    flat(i) = saved;
    worst = std::max(worst, relative_error(grad(i), fd, floor));
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fklrl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fklrl::testing

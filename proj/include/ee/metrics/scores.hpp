#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/types.hpp"

namespace ee::metrics {

struct ComponentError {
  double mape = 0.0;   ///< percent
  double mdape = 0.0;  ///< percent
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw ShapeError("median of empty set");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// Per-component mean and median of |est - truth| / (|truth| + eps), in percent.
inline std::vector<ComponentError> mape_mdape(std::span<const ParamVector> estimates, std::span<const ParamVector> truths,
                                              double eps = 1e-6) {
  ee::detail::require_shape(estimates.size() == truths.size() && !truths.empty(), "mape_mdape: batch mismatch");
  const std::size_t k = truths.front().size();
  std::vector<ComponentError> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> r;
    r.reserve(truths.size());
    for (std::size_t i = 0; i < truths.size(); ++i) {
      ee::detail::require_shape(estimates[i].size() == k && truths[i].size() == k, "mape_mdape: dimension mismatch");
      r.push_back(100.0 * std::abs(estimates[i][j] - truths[i][j]) / (std::abs(truths[i][j]) + eps));
    }
    double s = 0.0;
    for (double v : r) s += v;
    out[j].mape = s / static_cast<double>(r.size());
    out[j].mdape = median(std::move(r));
  }
  return out;
}

/// Empirical CRPS: -(1/2M^2) sum |x_m - x_m'| + (1/M) sum |x_m - truth|.
inline double crps_empirical(std::span<const double> particles, double truth) {
  ee::detail::require_shape(!particles.empty(), "crps_empirical: empty ensemble");
  const auto M = static_cast<double>(particles.size());
  // Pairwise term via sorting: sum_{m,m'} |x_m - x_m'| = 2 sum_i (2i - M + 1) x_(i)
  std::vector<double> s(particles.begin(), particles.end());
  std::sort(s.begin(), s.end());
  double pair = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) pair += (2.0 * static_cast<double>(i) - M + 1.0) * s[i];
  pair *= 2.0;
  double abs_err = 0.0;
  for (double x : particles) abs_err += std::abs(x - truth);
  return -pair / (2.0 * M * M) + abs_err / M;
}

}  // namespace ee::metrics

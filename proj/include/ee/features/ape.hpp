#pragma once

#include <cmath>
#include <span>

#include "ee/common/error.hpp"

namespace ee::features {

inline constexpr double kDefaultEps = 1e-6;

/// APE(b; a) = sum_l |a_l - b_l| / (|a_l| + eps); `a` is the reference.
inline double ape(std::span<const double> b, std::span<const double> a, double eps = kDefaultEps) {
  detail::require_shape(a.size() == b.size(), "ape: parameter vectors differ in dimension");
  double s = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) s += std::abs(a[l] - b[l]) / (std::abs(a[l]) + eps);
  return s;
}

/// Symmetrised APE used for nearest-neighbour positives.
inline double delta(std::span<const double> a, std::span<const double> b, double eps = kDefaultEps) {
  return 0.5 * (ape(a, b, eps) + ape(b, a, eps));
}

}  // namespace ee::features

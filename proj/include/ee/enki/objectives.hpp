#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>

#include "ee/common/error.hpp"
#include "ee/common/types.hpp"

namespace ee::enki {

/// 1/2 sum_j (y_j - m_j)^2 / var_j for the moment vector m of a simulation
/// at phi; +inf when the simulation was rejected.
inline double moment_objective(std::span<const double> phi, const Vector& y_moments, const Vector& var_diag,
                               const std::function<std::optional<Vector>(std::span<const double>)>& simulate_moments) {
  ee::detail::require_shape(y_moments.size() == var_diag.size(), "moment_objective: dimension mismatch");
  for (Eigen::Index j = 0; j < var_diag.size(); ++j)
    if (!(var_diag(j) > 0.0)) throw ConfigError("moment_objective: variances must be > 0");
  const auto m = simulate_moments(phi);
  if (!m || !m->allFinite()) return std::numeric_limits<double>::infinity();
  ee::detail::require_shape(m->size() == y_moments.size(), "moment_objective: simulator output dimension mismatch");
  return 0.5 * ((y_moments - *m).array().square() / var_diag.array()).sum();
}

/// |g - f|^2 for unit vectors g = emulator(phi) and f = encoder(Z); in [0, 4].
inline double emulator_objective(const Eigen::Ref<const Vector>& g, const Eigen::Ref<const Vector>& f) {
  ee::detail::require_shape(g.size() == f.size(), "emulator_objective: dimension mismatch");
  return (g - f).squaredNorm();
}

}  // namespace ee::enki

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/dynamics/trajectory.hpp"

namespace ee::dynamics {

/// Classical four-stage Runge-Kutta with a fixed internal step.
///
/// Records z0 and then one row every `dt`, each interval split into
/// `substeps` RK4 steps, for a total of steps + 1 rows. The first
/// `burn_in` intervals are integrated but not recorded. If the state stops
/// being finite the remaining rows are filled with NaN and
/// meta.integration_failed is set.
template <class Rhs>
Trajectory integrate_rk4(const Rhs& rhs, std::span<const double> z0, double dt, std::size_t steps,
                         std::size_t substeps, std::size_t burn_in = 0) {
  if (!(dt > 0.0)) throw ConfigError("integrate_rk4: dt must be > 0");
  if (substeps < 1) throw ConfigError("integrate_rk4: substeps must be >= 1");
  const std::size_t n = z0.size();
  const double h = dt / static_cast<double>(substeps);

  std::vector<double> z(z0.begin(), z0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
  auto finite = [&] {
    for (double v : z)
      if (!std::isfinite(v)) return false;
    return true;
  };

  auto step = [&]() -> bool {
    try {
      rhs(std::span<const double>(z), std::span<double>(k1));
      for (std::size_t i = 0; i < n; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
      rhs(std::span<const double>(tmp), std::span<double>(k2));
      for (std::size_t i = 0; i < n; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
      rhs(std::span<const double>(tmp), std::span<double>(k3));
      for (std::size_t i = 0; i < n; ++i) tmp[i] = z[i] + h * k3[i];
      rhs(std::span<const double>(tmp), std::span<double>(k4));
    } catch (const NumericalError&) {
      return false;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return finite();
  };

  Trajectory out;
  out.dt = dt;
  out.states.resize(static_cast<Eigen::Index>(steps + 1), static_cast<Eigen::Index>(n));

  bool ok = finite();
  for (std::size_t s = 0; ok && s < burn_in * substeps; ++s) ok = step();

  std::size_t row = 0;
  if (ok) {
    std::copy(z.begin(), z.end(), out.states.row(0).data());
    row = 1;
    for (; row <= steps; ++row) {
      for (std::size_t s = 0; ok && s < substeps; ++s) ok = step();
      if (!ok) break;
      std::copy(z.begin(), z.end(), out.states.row(static_cast<Eigen::Index>(row)).data());
    }
  }
  if (!ok) {
    out.meta.integration_failed = true;
    for (std::size_t r = row; r <= steps; ++r) out.states.row(static_cast<Eigen::Index>(r)).setConstant(NAN);
  }
  return out;
}

}  // namespace ee::dynamics

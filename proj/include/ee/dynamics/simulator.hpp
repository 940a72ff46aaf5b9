#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/types.hpp"
#include "ee/dynamics/kse.hpp"
#include "ee/dynamics/l96.hpp"
#include "ee/dynamics/rk4.hpp"
#include "ee/dynamics/trajectory.hpp"

namespace ee::dynamics {

/// Which system and at what size.
struct SystemSpec {
  SystemKind kind = SystemKind::l96;
  std::size_t K = 8;          ///< L96 slow variables
  std::size_t J = 4;          ///< L96 fast variables per slow variable
  std::size_t d = 64;         ///< KSE grid points
  double L = 32.0;            ///< KSE half-period

  std::size_t state_dim() const { return kind == SystemKind::l96 ? K * (J + 1) : d; }
  std::size_t param_dim() const { return kind == SystemKind::l96 ? 4 : 3; }

  std::vector<std::string> param_names() const {
    if (kind == SystemKind::l96) return {"F", "h", "c", "b"};
    return {"lambda2", "lambda4", "lambda_nl"};
  }
};

struct IntegrationSpec {
  double dt = 0.1;
  std::size_t substeps = 50;  ///< 0 selects the stability bound (KSE) or 50 (L96)
  std::size_t burn_in = 0;
};

/// Runs the simulator H(phi) from `ic` and records `length` rows (including the IC).
inline Trajectory simulate(const SystemSpec& sys, std::span<const double> phi, std::span<const double> ic,
                           std::size_t length, const IntegrationSpec& integ) {
  if (length == 0) throw ConfigError("simulate: length must be >= 1");
  detail::require_shape(ic.size() == sys.state_dim(), "simulate: initial condition has wrong dimension");
  Trajectory out;
  if (sys.kind == SystemKind::l96) {
    const auto p = L96Params::from_vector(phi);
    L96Rhs rhs(sys.K, sys.J, p);
    const std::size_t sub = integ.substeps == 0 ? 50 : integ.substeps;
    out = integrate_rk4(rhs, ic, integ.dt, length - 1, sub, integ.burn_in);
  } else {
    const auto p = KseParams::from_vector(phi);
    KseRhs rhs(sys.d, sys.L, p);
    std::size_t sub = integ.substeps;
    if (sub == 0) {
      double amp = 0.0;
      for (double v : ic) amp = std::max(amp, std::abs(v));
      sub = kse_stable_substeps(rhs, integ.dt, amp);
    }
    out = integrate_rk4(rhs, ic, integ.dt, length - 1, sub, integ.burn_in);
  }
  const bool failed = out.meta.integration_failed;
  out.meta.system = sys.kind;
  out.meta.params.assign(phi.begin(), phi.end());
  out.meta.integration_failed = failed;
  return out;
}

}  // namespace ee::dynamics

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "ee/common/error.hpp"
#include "ee/common/random.hpp"
#include "ee/common/types.hpp"

namespace ee::dynamics {

enum class SystemKind { l96, kse };

inline std::string to_string(SystemKind k) { return k == SystemKind::l96 ? "l96" : "kse"; }

inline SystemKind system_from_string(const std::string& s) {
  if (s == "l96") return SystemKind::l96;
  if (s == "kse") return SystemKind::kse;
  throw ConfigError("unknown system '" + s + "' (expected l96 or kse)");
}

struct TrajectoryMeta {
  SystemKind system = SystemKind::l96;
  ParamVector params;
  std::uint64_t seed = 0;
  bool integration_failed = false;
  double noise_r = 0.0;
};

/// T x d matrix of recorded states at spacing dt.
struct Trajectory {
  StateMatrix states;
  double dt = 1.0;
  TrajectoryMeta meta;

  std::size_t length() const { return static_cast<std::size_t>(states.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(states.cols()); }
};

/// Sampled initial condition: L96 i.i.d. standard normal, KSE i.i.d. uniform on [-pi, pi].
inline Vector sample_initial_condition(SystemKind system, std::size_t dim, Rng& rng) {
  Vector z(static_cast<Eigen::Index>(dim));
  if (system == SystemKind::l96) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& v : z) v = n01(rng);
  } else {
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    for (auto& v : z) v = u(rng);
  }
  return z;
}

/// A uniformly chosen row of an observed trajectory.
inline Vector ic_from_observation(const Trajectory& z, Rng& rng) {
  if (z.length() == 0) throw ShapeError("ic_from_observation: empty trajectory");
  std::uniform_int_distribution<std::size_t> pick(0, z.length() - 1);
  return z.states.row(static_cast<Eigen::Index>(pick(rng))).transpose();
}

enum class Verdict { accept, reject_nan, reject_degenerate, reject_empty };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::reject_nan: return "nan";
    case Verdict::reject_degenerate: return "degenerate";
    case Verdict::reject_empty: return "empty";
  }
  return "?";
}

/// Trajectories whose entries have overall standard deviation below this are degenerate.
inline constexpr double kDegenerateStd = 5e-5;

struct Validation {
  Verdict verdict = Verdict::accept;
  double std_dev = 0.0;
  bool accepted() const { return verdict == Verdict::accept; }
};

inline Validation validate_trajectory(const Trajectory& z) {
  if (z.meta.integration_failed) return {Verdict::reject_nan, 0.0};
  const auto n = z.states.size();
  if (n == 0) return {Verdict::reject_empty, 0.0};
  double mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = z.states.data()[i];
    if (!std::isfinite(v)) return {Verdict::reject_nan, 0.0};
    mean += v;
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dv = z.states.data()[i] - mean;
    ss += dv * dv;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (sd < kDegenerateStd) return {Verdict::reject_degenerate, sd};
  return {Verdict::accept, sd};
}

/// Per-channel temporal variance (population), the diagonal of Gamma.
inline Vector temporal_variance(const Trajectory& z) {
  const auto T = z.states.rows();
  Vector var = Vector::Zero(z.states.cols());
  if (T == 0) return var;
  const Eigen::RowVectorXd mean = z.states.colwise().mean();
  for (Eigen::Index t = 0; t < T; ++t) var += (z.states.row(t) - mean).array().square().matrix().transpose();
  return var / static_cast<double>(T);
}

/// Adds independent Gaussian noise with variance r * Var_t[Z_c] to every channel c.
inline Trajectory add_observation_noise(const Trajectory& z, double r, Rng& rng) {
  if (!(r >= 0.0)) throw ConfigError("observation noise scale r must be >= 0");
  Trajectory out = z;
  out.meta.noise_r = r;
  if (r == 0.0) return out;
  const Vector gamma = temporal_variance(z);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Eigen::Index t = 0; t < out.states.rows(); ++t)
    for (Eigen::Index c = 0; c < out.states.cols(); ++c)
      out.states(t, c) += std::sqrt(r * gamma[c]) * n01(rng);
  return out;
}

}  // namespace ee::dynamics

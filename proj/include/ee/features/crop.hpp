#pragma once

#include <cstddef>
#include <random>

#include "ee/common/error.hpp"
#include "ee/common/random.hpp"
#include "ee/dynamics/trajectory.hpp"

namespace ee::features {

inline std::size_t draw_crop_start(std::size_t T, std::size_t len, Rng& rng) {
  if (len == 0 || len > T)
    throw ShapeError("crop: length " + std::to_string(len) + " not in [1, " + std::to_string(T) + "]");
  std::uniform_int_distribution<std::size_t> pick(0, T - len);
  return pick(rng);
}

inline dynamics::Trajectory crop_at(const dynamics::Trajectory& z, std::size_t start, std::size_t len) {
  if (start + len > z.length()) throw ShapeError("crop_at: window exceeds trajectory");
  dynamics::Trajectory out;
  out.dt = z.dt;
  out.meta = z.meta;
  out.states = z.states.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len));
  return out;
}

/// Contiguous window of `len` rows at a uniformly drawn start.
inline dynamics::Trajectory crop(const dynamics::Trajectory& z, std::size_t len, Rng& rng) {
  return crop_at(z, draw_crop_start(z.length(), len, rng), len);
}

}  // namespace ee::features

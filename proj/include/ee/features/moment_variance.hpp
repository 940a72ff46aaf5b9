#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/random.hpp"
#include "ee/dynamics/simulator.hpp"
#include "ee/features/moments.hpp"

namespace ee::features {

/// Population variance (divide by B) of a set of per-block moment vectors.
inline Vector block_variance(std::span<const Vector> block_moments) {
  if (block_moments.empty()) throw NumericalError("block_variance: no blocks");
  const auto n = block_moments.front().size();
  Vector mean = Vector::Zero(n);
  for (const auto& m : block_moments) mean += m;
  mean /= static_cast<double>(block_moments.size());
  Vector var = Vector::Zero(n);
  for (const auto& m : block_moments) var += (m - mean).array().square().matrix();
  return var / static_cast<double>(block_moments.size());
}

struct MomentVarianceConfig {
  std::size_t blocks = 20;
  std::size_t block_length = 1000;  ///< rows per block; set to the observation length
  dynamics::IntegrationSpec integration;
};

/// Estimates Var[m(Z)_j] at `params` for trajectories of `block_length`
/// rows: one simulation of blocks * block_length rows is split into equal
/// blocks and the empirical variance of the per-block moment vectors taken.
/// Blocks rejected by validate_trajectory are dropped.
inline Vector moment_variance(const dynamics::SystemSpec& sys, std::span<const double> params,
                              const MomentVarianceConfig& cfg, Rng& rng) {
  if (cfg.blocks < 2) throw ConfigError("moment_variance: need at least 2 blocks");
  if (cfg.block_length < 1) throw ConfigError("moment_variance: block_length must be >= 1");
  const Vector ic = dynamics::sample_initial_condition(sys.kind, sys.state_dim(), rng);
  const auto traj = dynamics::simulate(sys, params, {ic.data(), static_cast<std::size_t>(ic.size())},
                                       cfg.blocks * cfg.block_length, cfg.integration);
  std::vector<Vector> block_moments;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    dynamics::Trajectory block;
    block.dt = traj.dt;
    block.meta = traj.meta;
    block.meta.integration_failed = false;
    block.states = traj.states.middleRows(static_cast<Eigen::Index>(b * cfg.block_length),
                                          static_cast<Eigen::Index>(cfg.block_length));
    if (!dynamics::validate_trajectory(block).accepted()) continue;
    block_moments.push_back(moments(sys, block.states));
  }
  if (block_moments.empty()) throw NumericalError("moment_variance: every block was rejected");
  if (block_moments.size() < 2) throw NumericalError("moment_variance: fewer than two valid blocks");
  return block_variance(block_moments);
}

/// Variance of the full-length moment vector estimated from the observation
/// itself: variance of B sub-block moments divided by B.
inline Vector observation_moment_variance(const dynamics::SystemSpec& sys, const StateMatrix& z, std::size_t blocks) {
  if (blocks < 2) throw ConfigError("observation_moment_variance: need at least 2 blocks");
  const auto len = static_cast<std::size_t>(z.rows()) / blocks;
  if (len == 0) throw ShapeError("observation_moment_variance: observation shorter than block count");
  std::vector<Vector> ms;
  for (std::size_t b = 0; b < blocks; ++b)
    ms.push_back(moments(sys, z.middleRows(static_cast<Eigen::Index>(b * len), static_cast<Eigen::Index>(len))));
  return block_variance(ms) / static_cast<double>(blocks);
}

}  // namespace ee::features

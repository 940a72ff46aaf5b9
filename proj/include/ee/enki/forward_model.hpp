#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/parallel.hpp"
#include "ee/common/random.hpp"
#include "ee/common/types.hpp"
#include "ee/dynamics/simulator.hpp"
#include "ee/features/moments.hpp"
#include "ee/nn/emulator.hpp"

namespace ee::enki {

/// phi (physical) -> observation-space vector. A missing value marks a
/// failed evaluation (e.g. a rejected simulation).
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual std::size_t output_dim() const = 0;

  /// Evaluates every row of `phys`. `iteration` and the row index identify
  /// the call so that stochastic models can derive independent streams.
  virtual std::vector<std::optional<Vector>> evaluate(const std::vector<ParamVector>& phys, std::size_t iteration,
                                                      std::size_t threads) const = 0;
};

/// m(H(phi)): simulate from an initial condition drawn from the observation
/// and take the moment vector.
class MomentForward : public ForwardModel {
 public:
  MomentForward(dynamics::SystemSpec sys, dynamics::IntegrationSpec integ, std::size_t length,
                const dynamics::Trajectory& observation, std::uint64_t seed)
      : sys_(sys), integ_(integ), length_(length), obs_(&observation), seed_(seed) {
    ee::detail::require_config(length_ >= 1, "MomentForward: simulation length must be >= 1");
  }

  std::size_t output_dim() const override { return features::moment_dim(sys_); }

  std::optional<Vector> evaluate_one(const ParamVector& phi, std::size_t iteration, std::size_t index) const {
    Rng rng = make_rng(seed_, Stream::forward_ic, {iteration, index});
    const Vector ic = dynamics::ic_from_observation(*obs_, rng);
    dynamics::Trajectory z;
    try {
      z = dynamics::simulate(sys_, phi, {ic.data(), static_cast<std::size_t>(ic.size())}, length_, integ_);
    } catch (const NumericalError&) {
      return std::nullopt;
    } catch (const ConfigError&) {
      return std::nullopt;  // e.g. c <= 0 from a Normal-coordinate particle
    }
    if (!dynamics::validate_trajectory(z).accepted()) return std::nullopt;
    return features::moments(sys_, z.states);
  }

  std::vector<std::optional<Vector>> evaluate(const std::vector<ParamVector>& phys, std::size_t iteration,
                                              std::size_t threads) const override {
    std::vector<std::optional<Vector>> out(phys.size());
    parallel_for(phys.size(), threads, [&](std::size_t m) { out[m] = evaluate_one(phys[m], iteration, m); });
    return out;
  }

 private:
  dynamics::SystemSpec sys_;
  dynamics::IntegrationSpec integ_;
  std::size_t length_;
  const dynamics::Trajectory* obs_;
  std::uint64_t seed_;
};

/// Learned emulator g(phi) on the unit sphere; never fails.
class EmulatorForward : public ForwardModel {
 public:
  explicit EmulatorForward(const nn::Emulator& emu) : emu_(&emu) {}

  std::size_t output_dim() const override { return emu_->spec().embed; }

  std::vector<std::optional<Vector>> evaluate(const std::vector<ParamVector>& phys, std::size_t,
                                              std::size_t) const override {
    nn::Graph g;
    const auto& y = emu_->forward(g, phys).value();
    const std::size_t p = output_dim();
    std::vector<std::optional<Vector>> out;
    out.reserve(phys.size());
    for (std::size_t m = 0; m < phys.size(); ++m) out.emplace_back(Eigen::Map<const Vector>(y.data.data() + m * p, static_cast<Eigen::Index>(p)));
    return out;
  }

 private:
  const nn::Emulator* emu_;
};

}  // namespace ee::enki

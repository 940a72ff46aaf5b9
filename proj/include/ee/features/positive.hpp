#pragma once

#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/random.hpp"
#include "ee/common/types.hpp"
#include "ee/dynamics/trajectory.hpp"
#include "ee/features/ape.hpp"
#include "ee/features/crop.hpp"

namespace ee::features {

struct PositivePairRule {
  double threshold = 0.4;     ///< accept the nearest neighbour when delta <= threshold
  double perturb_prob = 0.5;  ///< chance of multiplicative noise on the fallback parameter
  double perturb_std = 0.04;  ///< std of the relative noise xi
  std::size_t crop_len = 100;
  double eps = kDefaultEps;

  void validate() const {
    if (!(threshold > 0.0)) throw ConfigError("positive rule: threshold must be > 0");
    if (!(perturb_prob >= 0.0 && perturb_prob <= 1.0)) throw ConfigError("positive rule: perturb_prob must be in [0, 1]");
    if (!(perturb_std >= 0.0)) throw ConfigError("positive rule: perturb_std must be >= 0");
    if (crop_len == 0) throw ConfigError("positive rule: crop_len must be >= 1");
  }
};

enum class PositiveSource { neighbor, fallback };

struct Neighbor {
  std::size_t index = 0;
  double distance = std::numeric_limits<double>::infinity();
};

/// Exact nearest neighbour of sample i under delta, excluding i itself.
/// Ties go to the lowest index.
inline Neighbor nearest_neighbor(std::size_t i, std::span<const ParamVector> params, double eps = kDefaultEps) {
  detail::require_shape(params.size() >= 2, "nearest_neighbor: need at least two samples");
  detail::require_shape(i < params.size(), "nearest_neighbor: index out of range");
  Neighbor best;
  best.index = i == 0 ? 1 : 0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (j == i) continue;
    const double d = delta(params[i], params[j], eps);
    if (d < best.distance) best = {j, d};
  }
  return best;
}

struct PositiveSample {
  dynamics::Trajectory crop;
  ParamVector phi;
  PositiveSource source = PositiveSource::fallback;
  std::size_t source_index = 0;
  bool perturbed = false;
};

/// Positive-pair selection over a fixed dataset. The neighbour table is
/// computed once at construction.
class PositiveSelector {
 public:
  PositiveSelector(std::span<const dynamics::Trajectory> trajectories, std::span<const ParamVector> params,
                   PositivePairRule rule)
      : trajs_(trajectories), params_(params), rule_(rule) {
    rule_.validate();
    detail::require_shape(trajs_.size() == params_.size(), "PositiveSelector: trajectories/params size mismatch");
    detail::require_shape(params_.size() >= 2, "PositiveSelector: dataset needs at least two samples");
    neighbors_.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) neighbors_.push_back(nearest_neighbor(i, params_, rule_.eps));
  }

  const Neighbor& neighbor(std::size_t i) const { return neighbors_.at(i); }
  const PositivePairRule& rule() const { return rule_; }

  /// Returns the neighbour when it passes the threshold, otherwise a fresh
  /// crop of sample i with (possibly) perturbed parameters.
  PositiveSample select(std::size_t i, Rng& rng) const {
    const Neighbor& nb = neighbors_.at(i);
    PositiveSample out;
    if (nb.distance <= rule_.threshold) {
      out.source = PositiveSource::neighbor;
      out.source_index = nb.index;
      out.crop = crop(trajs_[nb.index], rule_.crop_len, rng);
      out.phi = params_[nb.index];
      return out;
    }
    out.source = PositiveSource::fallback;
    out.source_index = i;
    out.crop = crop(trajs_[i], rule_.crop_len, rng);
    out.phi = params_[i];
    std::bernoulli_distribution coin(rule_.perturb_prob);
    if (coin(rng)) {
      out.perturbed = true;
      std::normal_distribution<double> xi(0.0, rule_.perturb_std);
      for (auto& v : out.phi) v += xi(rng) * v;
    }
    return out;
  }

 private:
  std::span<const dynamics::Trajectory> trajs_;
  std::span<const ParamVector> params_;
  PositivePairRule rule_;
  std::vector<Neighbor> neighbors_;
};

inline PositiveSample select_positive(std::size_t i, std::span<const dynamics::Trajectory> trajectories,
                                      std::span<const ParamVector> params, const PositivePairRule& rule, Rng& rng) {
  return PositiveSelector(trajectories, params, rule).select(i, rng);
}

}  // namespace ee::features

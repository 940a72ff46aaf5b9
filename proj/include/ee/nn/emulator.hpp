#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/random.hpp"
#include "ee/common/types.hpp"
#include "ee/nn/layers.hpp"

namespace ee::nn {

struct EmulatorSpec {
  std::size_t in = 4;          ///< k
  std::size_t component = 16;  ///< per-component embedding width
  std::size_t blocks = 3;
  std::size_t embed = 32;      ///< p

  std::size_t width() const { return in * component; }

  void validate() const {
    ee::detail::require_config(in >= 1 && component >= 1 && embed >= 1, "emulator: dims must be >= 1");
  }
};

/// Parameter emulator: each component of phi goes through its own residual
/// projection, the results are concatenated, passed through width-preserving
/// residual blocks and projected onto the unit sphere.
class Emulator {
 public:
  Emulator() = default;
  Emulator(EmulatorSpec spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    for (std::size_t j = 0; j < spec_.in; ++j)
      in_.emplace_back("emu.in" + std::to_string(j), 1, spec_.component, spec_.component, rng);
    for (std::size_t i = 0; i < spec_.blocks; ++i)
      blocks_.emplace_back("emu.block" + std::to_string(i), spec_.width(), rng);
    out_ = ResidualProjection("emu.out", spec_.width(), spec_.width(), spec_.embed, rng);
    mean_.assign(spec_.in, 0.0);
    std_.assign(spec_.in, 1.0);
  }

  const EmulatorSpec& spec() const { return spec_; }

  void set_param_stats(std::vector<double> mean, std::vector<double> stdev) {
    ee::detail::require_shape(mean.size() == spec_.in && stdev.size() == spec_.in,
                          "Emulator::set_param_stats: wrong length");
    for (auto& s : stdev) s = s > 1e-12 ? s : 1.0;
    mean_ = std::move(mean);
    std_ = std::move(stdev);
  }
  const std::vector<double>& param_mean() const { return mean_; }
  const std::vector<double>& param_std() const { return std_; }

  Tensor pack(std::span<const ParamVector> phis) const {
    ee::detail::require_shape(!phis.empty(), "Emulator: empty batch");
    Tensor x({phis.size(), spec_.in});
    for (std::size_t i = 0; i < phis.size(); ++i) {
      if (phis[i].size() != spec_.in)
        throw ShapeError("Emulator: parameter has " + std::to_string(phis[i].size()) + " components, expected " +
                         std::to_string(spec_.in));
      for (std::size_t j = 0; j < spec_.in; ++j) x.data[i * spec_.in + j] = (phis[i][j] - mean_[j]) / std_[j];
    }
    return x;
  }

  /// Returns (B, p) unit rows.
  Var forward(Graph& g, std::span<const ParamVector> phis) const { return forward_packed(g, g.constant(pack(phis))); }

  Var forward_packed(Graph& g, Var x) const {
    std::vector<Var> parts;
    for (std::size_t j = 0; j < spec_.in; ++j) parts.push_back(in_[j](g, column(x, j)));
    Var h = concat_cols(parts);
    for (const auto& blk : blocks_) h = blk(g, h);
    return l2_normalize_rows(out_(g, h));
  }

  void collect(ParamRefs& refs) {
    for (auto& p : in_) p.collect(refs);
    for (auto& b : blocks_) b.collect(refs);
    out_.collect(refs);
  }

 private:
  EmulatorSpec spec_;
  std::vector<ResidualProjection> in_;
  std::vector<ResidualBlock> blocks_;
  ResidualProjection out_;
  std::vector<double> mean_, std_;
};

}  // namespace ee::nn

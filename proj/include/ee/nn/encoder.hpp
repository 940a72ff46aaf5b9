#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/random.hpp"
#include "ee/common/types.hpp"
#include "ee/nn/layers.hpp"

namespace ee::nn {

struct EncoderSpec {
  std::size_t crop_len = 100;
  std::size_t channels = 40;
  std::vector<std::size_t> widths{32, 64, 128};
  std::vector<std::size_t> kernels{5, 5, 3};
  std::size_t hidden = 128;  ///< H
  std::size_t embed = 32;    ///< p
  std::size_t out = 4;       ///< k

  void validate() const {
    ee::detail::require_config(crop_len >= 1 && channels >= 1, "encoder: crop_len and channels must be >= 1");
    ee::detail::require_config(!widths.empty() && widths.size() == kernels.size(),
                           "encoder: widths and kernels must be non-empty and equal length");
    for (auto k : kernels) ee::detail::require_config(k % 2 == 1, "encoder: kernel sizes must be odd");
    ee::detail::require_config(embed >= out, "encoder: embedding dim must be >= regression dim");
    ee::detail::require_config(hidden >= 1 && out >= 1, "encoder: hidden and out must be >= 1");
  }
};

struct EncoderOutput {
  Var hidden;      ///< (B, H) shared representation
  Var embedding;   ///< (B, p), unit rows
  Var regression;  ///< (B, k), affine in `hidden`
};

/// Temporal-convolution trajectory encoder with a unit-sphere embedding and
/// a linear regression head sharing one hidden representation.
class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t in = spec_.channels;
    for (std::size_t i = 0; i < spec_.widths.size(); ++i) {
      convs_.emplace_back("enc.conv" + std::to_string(i), in, spec_.widths[i], spec_.kernels[i], rng);
      in = spec_.widths[i];
    }
    fc_ = Linear("enc.fc", in, spec_.hidden, rng);
    proj_ = ResidualProjection("enc.proj", spec_.hidden, spec_.hidden, spec_.embed, rng);
    head_ = Linear("enc.head", spec_.hidden, spec_.out, rng);
    in_mean_.assign(spec_.channels, 0.0);
    in_std_.assign(spec_.channels, 1.0);
  }

  const EncoderSpec& spec() const { return spec_; }
  Linear& head() { return head_; }
  const Linear& head() const { return head_; }

  /// Per-channel input standardisation, fitted on training trajectories.
  void set_input_stats(std::vector<double> mean, std::vector<double> stdev) {
    ee::detail::require_shape(mean.size() == spec_.channels && stdev.size() == spec_.channels,
                          "Encoder::set_input_stats: wrong length");
    for (auto& s : stdev) s = s > 1e-12 ? s : 1.0;
    in_mean_ = std::move(mean);
    in_std_ = std::move(stdev);
  }
  const std::vector<double>& input_mean() const { return in_mean_; }
  const std::vector<double>& input_std() const { return in_std_; }

  /// Sets the head bias, e.g. to the training parameter mean.
  void set_head_bias(std::span<const double> b) {
    ee::detail::require_shape(b.size() == spec_.out, "Encoder::set_head_bias: wrong length");
    std::copy(b.begin(), b.end(), head_.b.value.data.begin());
  }

  /// Packs crops (each crop_len x channels) into a (B, channels, crop_len) tensor.
  Tensor pack(std::span<const StateMatrix* const> crops) const {
    const std::size_t B = crops.size(), C = spec_.channels, L = spec_.crop_len;
    ee::detail::require_shape(B >= 1, "Encoder: empty batch");
    Tensor x({B, C, L});
    for (std::size_t b = 0; b < B; ++b) {
      const StateMatrix& z = *crops[b];
      if (static_cast<std::size_t>(z.rows()) != L || static_cast<std::size_t>(z.cols()) != C)
        throw ShapeError("Encoder: crop is " + std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                         ", expected " + std::to_string(L) + "x" + std::to_string(C));
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < L; ++t)
          x.data[(b * C + c) * L + t] = (z(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) - in_mean_[c]) / in_std_[c];
    }
    return x;
  }

  EncoderOutput forward(Graph& g, std::span<const StateMatrix* const> crops) const {
    return forward_packed(g, g.constant(pack(crops)));
  }

  EncoderOutput forward_packed(Graph& g, Var x) const {
    for (const auto& conv : convs_) x = silu(conv(g, x));
    Var h = silu(fc_(g, mean_last(x)));
    EncoderOutput out;
    out.hidden = h;
    out.embedding = l2_normalize_rows(proj_(g, h));
    out.regression = head_(g, h);
    return out;
  }

  void collect(ParamRefs& refs) {
    for (auto& c : convs_) c.collect(refs);
    fc_.collect(refs);
    proj_.collect(refs);
    head_.collect(refs);
  }

 private:
  EncoderSpec spec_;
  std::vector<Conv1d> convs_;
  Linear fc_;
  ResidualProjection proj_;
  Linear head_;
  std::vector<double> in_mean_, in_std_;
};

}  // namespace ee::nn

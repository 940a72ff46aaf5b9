#pragma once

#include <vector>

#include "ee/common/random.hpp"
#include "ee/dynamics/trajectory.hpp"
#include "ee/features/crop.hpp"
#include "ee/nn/model.hpp"

namespace ee::pipeline {

/// Head estimate and embedding of one observation, each averaged over random
/// crops; the mean embedding is renormalised onto the sphere.
struct CropSummary {
  ParamVector head;
  Vector embedding;
};

inline CropSummary summarize_crops(const nn::Encoder& enc, const dynamics::Trajectory& z, std::size_t crops, Rng& rng) {
  const std::size_t L = enc.spec().crop_len;
  std::vector<StateMatrix> windows;
  windows.reserve(crops);
  for (std::size_t c = 0; c < crops; ++c) windows.push_back(features::crop(z, L, rng).states);
  std::vector<const StateMatrix*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  nn::Graph g;
  const auto out = enc.forward(g, ptrs);
  const auto& reg = out.regression.value();
  const auto& emb = out.embedding.value();
  const std::size_t k = reg.shape[1], p = emb.shape[1];
  CropSummary s;
  s.head.assign(k, 0.0);
  s.embedding = Vector::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t c = 0; c < crops; ++c) {
    for (std::size_t j = 0; j < k; ++j) s.head[j] += reg.data[c * k + j] / static_cast<double>(crops);
    for (std::size_t j = 0; j < p; ++j) s.embedding(static_cast<Eigen::Index>(j)) += emb.data[c * p + j];
  }
  const double n = s.embedding.norm();
  if (!(n > 0) || !std::isfinite(n)) throw NumericalError("summarize_crops: degenerate mean embedding");
  s.embedding /= n;
  for (double v : s.head)
    if (!std::isfinite(v)) throw NumericalError("summarize_crops: non-finite regression output");
  return s;
}

/// Crop stream for observation `index` of a stage; fixed across epochs and runs.
inline Rng crop_rng(std::uint64_t seed, std::uint64_t stage_tag, std::size_t index) {
  return make_rng(seed, Stream::crops, {stage_tag, index});
}

}  // namespace ee::pipeline

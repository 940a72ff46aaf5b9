#pragma once

#include "ee/common/random.hpp"
#include "ee/nn/emulator.hpp"
#include "ee/nn/encoder.hpp"

namespace ee::nn {

/// Encoder (with regression head) and emulator trained jointly.
struct Model {
  Encoder encoder;
  Emulator emulator;

  Model() = default;
  Model(const EncoderSpec& es, const EmulatorSpec& ms, Rng& rng) : encoder(es, rng), emulator(ms, rng) {}

  // Pointers stay valid as long as the model is not copied or moved.
  ParamRefs parameters() {
    ParamRefs refs;
    encoder.collect(refs);
    emulator.collect(refs);
    return refs;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }
};

}  // namespace ee::nn

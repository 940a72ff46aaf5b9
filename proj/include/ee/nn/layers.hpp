#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "ee/common/random.hpp"
#include "ee/nn/graph.hpp"
#include "ee/nn/ops.hpp"

namespace ee::nn {

using ParamRefs = std::vector<Parameter*>;

/// He (fan-in) normal initialisation.
inline Tensor he_normal(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.data) v = n(rng);
  return t;
}

struct Linear {
  Parameter W, b;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : W(name + ".W", he_normal({in, out}, in, rng)), b(name + ".b", Tensor({out})) {}

  std::size_t in() const { return W.value.dim(0); }
  std::size_t out() const { return W.value.dim(1); }

  Var operator()(Graph& g, Var x) const { return linear(x, g.parameter(W), g.parameter(b)); }
  void collect(ParamRefs& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

struct Conv1d {
  Parameter w, b;

  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng)
      : w(name + ".w", he_normal({out, in, kernel}, in * kernel, rng)), b(name + ".b", Tensor({out})) {}

  Var operator()(Graph& g, Var x) const { return conv1d_circular(x, g.parameter(w), g.parameter(b)); }
  void collect(ParamRefs& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

/// y = skip(x) + out(silu(hidden(x))). The skip is a linear map so input and
/// output widths may differ.
struct ResidualProjection {
  Linear skip, hidden, out;

  ResidualProjection() = default;
  ResidualProjection(const std::string& name, std::size_t in, std::size_t width, std::size_t out_dim, Rng& rng)
      : skip(name + ".skip", in, out_dim, rng), hidden(name + ".hidden", in, width, rng),
        out(name + ".out", width, out_dim, rng) {}

  Var operator()(Graph& g, Var x) const { return add(skip(g, x), out(g, silu(hidden(g, x)))); }
  void collect(ParamRefs& refs) {
    skip.collect(refs);
    hidden.collect(refs);
    out.collect(refs);
  }
};

/// Width-preserving block: y = silu(x + l2(silu(l1(x)))).
struct ResidualBlock {
  Linear l1, l2;

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, std::size_t width, Rng& rng)
      : l1(name + ".l1", width, width, rng), l2(name + ".l2", width, width, rng) {}

  Var operator()(Graph& g, Var x) const { return silu(add(x, l2(g, silu(l1(g, x))))); }
  void collect(ParamRefs& refs) {
    l1.collect(refs);
    l2.collect(refs);
  }
};

}  // namespace ee::nn

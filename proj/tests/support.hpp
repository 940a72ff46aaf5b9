#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "ee/losses/contrastive.hpp"
#include "ee/nn/model.hpp"

namespace ee::testing {

struct GradCheckResult {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `loss(graph)` against central
/// differences (fourth-order stencil) for up to `per_tensor` randomly chosen
/// entries of every parameter. The relative error is
/// |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(const std::vector<nn::Parameter*>& params,
                                  const std::function<nn::Var(nn::Graph&)>& loss, std::size_t per_tensor,
                                  std::uint64_t seed, double h = 1e-3, double floor = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    nn::Graph g;
    g.backward(loss(g));
  }
  auto eval = [&](nn::Parameter* p, std::size_t i, double x) {
    p->value.data[i] = x;
    nn::Graph g;
    return loss(g).value().item();
  };
  Rng rng(seed);
  GradCheckResult res;
  for (auto* p : params) {
    std::vector<std::size_t> idx(p->value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(per_tensor, idx.size()));
    for (auto i : idx) {
      const double x = p->value.data[i];
      const double num =
          (8 * (eval(p, i, x + h) - eval(p, i, x - h)) - (eval(p, i, x + 2 * h) - eval(p, i, x - 2 * h))) / (12 * h);
      p->value.data[i] = x;
      const double ana = p->grad.data[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      res.max_rel = std::max(res.max_rel, rel);
      ++res.checked;
    }
  }
  return res;
}

inline nn::EncoderSpec desk_encoder_spec(std::size_t crop_len = 100, std::size_t channels = 40) {
  nn::EncoderSpec s;
  s.crop_len = crop_len;
  s.channels = channels;
  return s;
}

inline nn::EmulatorSpec desk_emulator_spec() { return {}; }

inline StateMatrix random_crop(std::size_t T, std::size_t d, Rng& rng) {
  std::normal_distribution<double> n(0, 1);
  StateMatrix z(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
  return z;
}

inline std::vector<double> random_unit(std::size_t p, Rng& rng) {
  std::normal_distribution<double> n(0, 1);
  std::vector<double> v(p);
  double s = 0;
  for (auto& x : v) x = n(rng), s += x * x;
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

inline losses::MemoryBank random_bank(std::size_t cap, std::size_t count, std::size_t p, Rng& rng) {
  losses::MemoryBank b(cap, p);
  for (std::size_t i = 0; i < count; ++i) b.push(random_unit(p, rng));
  return b;
}

/// A small batch through the desk-scale encoder and emulator, plus filled
/// banks, for gradient checks of every loss.
struct LossFixture {
  std::unique_ptr<nn::Model> model;
  std::vector<StateMatrix> crops, pos_crops;
  std::vector<ParamVector> phis, pos_phis;
  losses::MemoryBank zbank, pbank;
  double tau = 0.3, tau_prime = 0.2;

  explicit LossFixture(std::uint64_t seed, std::size_t batch = 3, std::size_t crop_len = 16) {
    Rng rng(seed);
    model = std::make_unique<nn::Model>(desk_encoder_spec(crop_len), desk_emulator_spec(), rng);
    model->emulator.set_param_stats({7.5, 2.5, 12.5, 12.5}, {7.0, 1.4, 7.0, 7.0});
    model->encoder.set_head_bias(std::vector<double>{7.5, 2.5, 12.5, 12.5});
    std::uniform_real_distribution<double> u(0.5, 20.0);
    for (std::size_t i = 0; i < batch; ++i) {
      crops.push_back(random_crop(crop_len, 40, rng));
      pos_crops.push_back(random_crop(crop_len, 40, rng));
      phis.push_back({u(rng), u(rng) / 4, u(rng), u(rng)});
      ParamVector q = phis.back();
      for (auto& v : q) v *= 1.02;
      pos_phis.push_back(q);
    }
    zbank = random_bank(8, 6, 32, rng);
    pbank = random_bank(8, 6, 32, rng);
  }

  std::vector<const StateMatrix*> ptrs(const std::vector<StateMatrix>& v) const {
    std::vector<const StateMatrix*> out;
    for (const auto& m : v) out.push_back(&m);
    return out;
  }

  losses::LossComponents components(nn::Graph& g) const {
    const auto a = ptrs(crops), b = ptrs(pos_crops);
    const auto fa = model->encoder.forward(g, a);
    const auto fb = model->encoder.forward(g, b);
    const auto ga = model->emulator.forward(g, phis);
    const auto gb = model->emulator.forward(g, pos_phis);
    losses::LossComponents c;
    c.zz = losses::info_nce_zz(fa.embedding, fb.embedding, zbank, tau);
    c.pp = losses::info_nce_pp(ga, gb, pbank, tau);
    c.zp = losses::clip_loss(fa.embedding, ga, zbank, pbank, tau_prime);
    c.mape = losses::mape_loss(fa.regression, phis);
    return c;
  }
};

}  // namespace ee::testing

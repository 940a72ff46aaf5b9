#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/nn/graph.hpp"

namespace ee::nn {

/// Linear warm-up from 0 to `peak` over `warmup` steps, then cosine decay to
/// `floor` at `total` steps.
struct LrSchedule {
  double peak = 0.01;
  std::size_t warmup = 50;
  std::size_t total = 1000;
  double floor = 0.0;

  double at(std::size_t step) const {
    if (warmup > 0 && step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
    if (step >= total || total <= warmup) return step >= total ? floor : peak;
    const double t = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
    return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * t));
  }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  LrSchedule schedule;
};

/// AdamW with decoupled weight decay. Moment buffers are kept in the order
/// of the parameter list given at construction.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  std::size_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  double current_lr() const { return cfg_.schedule.at(step_); }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  /// Applies one update with the learning rate of the current step and
  /// advances the step counter.
  void step() {
    const double lr = cfg_.schedule.at(step_);
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      if (p.grad.shape != p.value.shape) p.zero_grad();
      if (!p.grad.all_finite()) throw NumericalError("AdamW: non-finite gradient for " + p.name);
      auto& m = m_[k].data;
      auto& v = v_[k].data;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad.data[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mh = m[i] / bc1, vh = v[i] / bc2;
        p.value.data[i] *= 1.0 - lr * cfg_.weight_decay;
        p.value.data[i] -= lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
    }
  }

  // checkpoint access
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_step_count(std::size_t s) { step_ = s; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace ee::nn

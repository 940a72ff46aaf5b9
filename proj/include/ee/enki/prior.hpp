#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/random.hpp"
#include "ee/common/types.hpp"

namespace ee::enki {

enum class PriorKind { normal, lognormal };

/// One prior component. For LogNormal, mean and variance refer to log(x).
struct PriorComponent {
  std::string name;
  PriorKind kind = PriorKind::normal;
  double mean = 0.0;
  double variance = 1.0;
};

struct Prior {
  std::vector<PriorComponent> components;

  std::size_t dim() const { return components.size(); }

  void validate() const {
    ee::detail::require_config(!components.empty(), "prior: no components");
    for (const auto& c : components)
      ee::detail::require_config(c.variance > 0.0 && std::isfinite(c.mean), "prior: component " + c.name +
                                                                                 " needs a finite mean and variance > 0");
  }

  /// Physical value -> working coordinate (log for LogNormal components).
  Vector to_working(std::span<const double> phys) const {
    ee::detail::require_shape(phys.size() == dim(), "Prior::to_working: wrong dimension");
    Vector w(static_cast<Eigen::Index>(dim()));
    for (std::size_t j = 0; j < dim(); ++j) {
      if (components[j].kind == PriorKind::lognormal && !(phys[j] > 0.0))
        throw NumericalError("Prior::to_working: LogNormal component " + components[j].name + " must be positive");
      w(static_cast<Eigen::Index>(j)) = components[j].kind == PriorKind::lognormal ? std::log(phys[j]) : phys[j];
    }
    return w;
  }

  ParamVector to_physical(const Eigen::Ref<const Vector>& w) const {
    ee::detail::require_shape(static_cast<std::size_t>(w.size()) == dim(), "Prior::to_physical: wrong dimension");
    ParamVector p(dim());
    for (std::size_t j = 0; j < dim(); ++j) {
      const double v = w(static_cast<Eigen::Index>(j));
      p[j] = components[j].kind == PriorKind::lognormal ? std::exp(v) : v;
    }
    return p;
  }

  ParamVector variances() const {
    ParamVector v;
    for (const auto& c : components) v.push_back(c.variance);
    return v;
  }
};

/// M particles in working coordinates, one per row.
struct Ensemble {
  Matrix particles;
  std::size_t iteration = 0;

  std::size_t size() const { return static_cast<std::size_t>(particles.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(particles.cols()); }
};

inline Ensemble sample_prior(const Prior& prior, std::size_t M, Rng& rng) {
  prior.validate();
  ee::detail::require_config(M >= 2, "sample_prior: ensemble size must be >= 2");
  Ensemble e;
  e.particles.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(prior.dim()));
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t j = 0; j < prior.dim(); ++j) {
      const auto& c = prior.components[j];
      e.particles(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) = c.mean + std::sqrt(c.variance) * n(rng);
    }
  return e;
}

/// Fixed L96 prior over [F, h, c, b]; c is LogNormal.
inline Prior l96_fixed_prior() {
  return Prior{{{"F", PriorKind::normal, 7.5, 36.0},
                {"h", PriorKind::normal, 2.5, 2.25},
                {"c", PriorKind::lognormal, std::log(11.5), 0.15},
                {"b", PriorKind::normal, 12.5, 36.0}}};
}

/// Variances of the L96 empirical Bayes prior.
inline ParamVector l96_empb_variances() { return {18.0, 1.125, 0.075, 18.0}; }

inline Prior kse_fixed_prior() {
  return Prior{{{"lambda2", PriorKind::normal, 5.0, 6.25},
                {"lambda4", PriorKind::normal, 5.0, 6.25},
                {"lambda_nl", PriorKind::normal, 5.0, 6.25}}};
}

inline ParamVector kse_empb_variances() { return {6.25, 6.25, 6.25}; }

struct EmpiricalBayesPrior {
  Prior prior;
  bool clamped = false;  ///< a LogNormal mean came from a nonpositive estimate
};

/// Template prior with means replaced by `estimate` (log-transformed for
/// LogNormal components) and variances replaced by `variances`.
inline EmpiricalBayesPrior empirical_bayes_prior(std::span<const double> estimate, const Prior& fixed,
                                                 std::span<const double> variances, double floor = 1e-3) {
  ee::detail::require_shape(estimate.size() == fixed.dim() && variances.size() == fixed.dim(),
                            "empirical_bayes_prior: dimension mismatch");
  EmpiricalBayesPrior out{fixed, false};
  for (std::size_t j = 0; j < fixed.dim(); ++j) {
    auto& c = out.prior.components[j];
    c.variance = variances[j];
    if (c.kind == PriorKind::lognormal) {
      double v = estimate[j];
      if (!(v > 0.0)) {
        v = floor;
        out.clamped = true;
      }
      c.mean = std::log(v);
    } else {
      c.mean = estimate[j];
    }
  }
  out.prior.validate();
  return out;
}

}  // namespace ee::enki

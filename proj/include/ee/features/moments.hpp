#pragma once

#include <cstddef>

#include "ee/common/error.hpp"
#include "ee/common/types.hpp"
#include "ee/dynamics/simulator.hpp"

namespace ee::features {

/// L96 moment vector of length 5K laid out as
/// [<X>, <Ybar>, <X^2>, <X Ybar>, <Ybar^2>], time averages over all rows,
/// Ybar_k the mean of the J fast variables attached to slow index k.
inline Vector l96_moments(const StateMatrix& z, std::size_t K, std::size_t J) {
  if (static_cast<std::size_t>(z.cols()) != K * (J + 1))
    throw ShapeError("l96_moments: trajectory has " + std::to_string(z.cols()) + " columns, expected K(J+1)");
  if (z.rows() == 0) throw ShapeError("l96_moments: empty trajectory");
  const auto Ki = static_cast<Eigen::Index>(K);
  Vector m = Vector::Zero(5 * Ki);
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    const double* row = z.row(t).data();
    for (std::size_t k = 0; k < K; ++k) {
      const double x = row[k];
      double ybar = 0.0;
      for (std::size_t j = 0; j < J; ++j) ybar += row[K + k * J + j];
      ybar /= static_cast<double>(J);
      const auto kk = static_cast<Eigen::Index>(k);
      m[kk] += x;
      m[Ki + kk] += ybar;
      m[2 * Ki + kk] += x * x;
      m[3 * Ki + kk] += x * ybar;
      m[4 * Ki + kk] += ybar * ybar;
    }
  }
  return m / static_cast<double>(z.rows());
}

/// Per-channel time average; the KSE moment function.
inline Vector kse_moments(const StateMatrix& v) {
  if (v.rows() == 0) throw ShapeError("kse_moments: empty trajectory");
  return v.colwise().mean().transpose();
}

inline Vector moments(const dynamics::SystemSpec& sys, const StateMatrix& z) {
  return sys.kind == dynamics::SystemKind::l96 ? l96_moments(z, sys.K, sys.J) : kse_moments(z);
}

inline std::size_t moment_dim(const dynamics::SystemSpec& sys) {
  return sys.kind == dynamics::SystemKind::l96 ? 5 * sys.K : sys.d;
}

}  // namespace ee::features

#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/QR>

#include "ee/common/error.hpp"
#include "ee/common/types.hpp"

namespace ee::metrics {

/// Least-squares affine map from embeddings (n x p) to parameters (n x k).
struct AffineProbe {
  Matrix coef;               ///< (p + 1) x k; last row is the intercept
  std::vector<double> r2;    ///< per component, on the data passed to evaluate()
  bool rank_deficient = false;

  Matrix predict(const Matrix& emb) const {
    ee::detail::require_shape(emb.cols() + 1 == coef.rows(), "AffineProbe::predict: embedding dimension mismatch");
    return (emb * coef.topRows(coef.rows() - 1)).rowwise() + coef.row(coef.rows() - 1);
  }
};

/// Per-component coefficient of determination 1 - SS_res / SS_tot.
inline std::vector<double> r_squared(const Matrix& pred, const Matrix& truth) {
  ee::detail::require_shape(pred.rows() == truth.rows() && pred.cols() == truth.cols(), "r_squared: shape mismatch");
  std::vector<double> r2;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    const double mean = truth.col(j).mean();
    const double ss_tot = (truth.col(j).array() - mean).square().sum();
    const double ss_res = (truth.col(j) - pred.col(j)).squaredNorm();
    r2.push_back(ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity()));
  }
  return r2;
}

/// Fits the probe; minimum-norm solution when the design is rank deficient.
/// r2 is filled in on the fitting data.
inline AffineProbe fit_affine_probe(const Matrix& emb, const Matrix& params) {
  ee::detail::require_shape(emb.rows() == params.rows(), "affine_probe: row count mismatch");
  ee::detail::require_shape(emb.rows() > params.cols() + 1, "affine_probe: need more samples than k + 1");
  Matrix X(emb.rows(), emb.cols() + 1);
  X.leftCols(emb.cols()) = emb;
  X.col(emb.cols()).setOnes();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(X);
  AffineProbe p;
  p.rank_deficient = cod.rank() < X.cols();
  p.coef = cod.solve(params);
  p.r2 = r_squared(p.predict(emb), params);
  return p;
}

/// Fit on (train_emb, train_params), report R^2 on the held-out pair.
inline AffineProbe affine_probe(const Matrix& train_emb, const Matrix& train_params, const Matrix& test_emb,
                                const Matrix& test_params) {
  AffineProbe p = fit_affine_probe(train_emb, train_params);
  p.r2 = r_squared(p.predict(test_emb), test_params);
  return p;
}

}  // namespace ee::metrics

#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Cholesky>

#include "ee/common/error.hpp"
#include "ee/common/random.hpp"
#include "ee/common/types.hpp"
#include "ee/enki/forward_model.hpp"
#include "ee/enki/prior.hpp"

namespace ee::enki {

struct EnkiConfig {
  std::size_t M = 100;
  std::size_t N = 50;
  double alpha = 0.3;
  std::size_t threads = 1;
  bool keep_history = false;  ///< store every iterate (for CSV export)

  void validate() const {
    ee::detail::require_config(M >= 2, "enki: ensemble size M must be >= 2");
    ee::detail::require_config(alpha > 0.0, "enki: step size alpha must be > 0");
  }
};

/// K = C (S)^-1 via an SPD factorisation of S; on failure a diagonal jitter
/// of 1e-10 * trace(S) / dim is added once before giving up.
inline Matrix kalman_gain(const Matrix& C_phig, const Matrix& S) {
  ee::detail::require_shape(S.rows() == S.cols() && C_phig.cols() == S.rows(), "kalman_gain: shape mismatch");
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * S.trace() / static_cast<double>(S.rows());
    llt.compute(S + jitter * Matrix::Identity(S.rows(), S.cols()));
    if (llt.info() != Eigen::Success || !(jitter > 0.0))
      throw NumericalError("kalman_gain: C_gg + R/alpha is not positive definite even after jitter");
  }
  // K S = C  <=>  S K^T = C^T (S symmetric)
  return llt.solve(C_phig.transpose()).transpose();
}

struct StepResult {
  std::size_t valid = 0;  ///< particles whose forward evaluation succeeded
};

/// One analysis step in working coordinates. Observation perturbations for
/// particle m use their own derived stream, so results do not depend on
/// the thread count.
inline StepResult enki_step(Ensemble& ens, const Prior& prior, const ForwardModel& fm, const Vector& y,
                            const Vector& R, const EnkiConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto M = static_cast<Eigen::Index>(ens.size());
  const auto k = static_cast<Eigen::Index>(ens.dim());
  const auto d = static_cast<Eigen::Index>(fm.output_dim());
  ee::detail::require_shape(y.size() == d && R.size() == d, "enki_step: observation / R dimension mismatch");
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(R(j) > 0.0)) throw ConfigError("enki_step: R entries must be > 0");

  std::vector<ParamVector> phys(static_cast<std::size_t>(M));
  for (Eigen::Index m = 0; m < M; ++m) phys[static_cast<std::size_t>(m)] = prior.to_physical(ens.particles.row(m).transpose());
  const auto G = fm.evaluate(phys, ens.iteration, cfg.threads);

  std::vector<Eigen::Index> valid;
  for (Eigen::Index m = 0; m < M; ++m)
    if (G[static_cast<std::size_t>(m)] && G[static_cast<std::size_t>(m)]->allFinite()) valid.push_back(m);
  if (valid.size() < 2)
    throw NumericalError("enki_step: fewer than two particles have a valid forward evaluation");

  const auto V = static_cast<Eigen::Index>(valid.size());
  Matrix Phi(V, k), Gm(V, d);
  for (Eigen::Index i = 0; i < V; ++i) {
    Phi.row(i) = ens.particles.row(valid[static_cast<std::size_t>(i)]);
    Gm.row(i) = G[static_cast<std::size_t>(valid[static_cast<std::size_t>(i)])]->transpose();
  }
  const Eigen::RowVectorXd phi_bar = Phi.colwise().mean();
  const Eigen::RowVectorXd g_bar = Gm.colwise().mean();
  const Matrix dPhi = Phi.rowwise() - phi_bar;
  const Matrix dG = Gm.rowwise() - g_bar;
  const Matrix C_phig = dPhi.transpose() * dG / static_cast<double>(V);
  const Matrix C_gg = dG.transpose() * dG / static_cast<double>(V);
  Matrix S = C_gg;
  S.diagonal() += R / cfg.alpha;
  const Matrix K = kalman_gain(C_phig, S);

  const Vector noise_sd = (R / cfg.alpha).cwiseSqrt();
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Eigen::Index i = 0; i < V; ++i) {
    const Eigen::Index m = valid[static_cast<std::size_t>(i)];
    Rng rng = make_rng(seed, Stream::enki_noise, {ens.iteration, static_cast<std::uint64_t>(m)});
    Vector yp = y;
    for (Eigen::Index j = 0; j < d; ++j) yp(j) += noise_sd(j) * n01(rng);
    ens.particles.row(m) += (K * (yp - Gm.row(i).transpose())).transpose();
  }
  ++ens.iteration;
  return {static_cast<std::size_t>(V)};
}

struct IterationDiagnostics {
  std::size_t iteration = 0;
  ParamVector mean;  ///< physical space
  double spread = 0.0;  ///< trace of the working-coordinate covariance
  double objective = std::numeric_limits<double>::quiet_NaN();  ///< 1/2 |y - g(mean)|^2_R
  std::size_t valid = 0;
};

struct EnkiResult {
  Ensemble ensemble;
  std::vector<IterationDiagnostics> diagnostics;  ///< iteration 0 (prior) .. N
  std::vector<Ensemble> history;                  ///< only with keep_history
  ParamVector estimate() const { return diagnostics.empty() ? ParamVector{} : diagnostics.back().mean; }
};

inline double ensemble_spread(const Ensemble& e) {
  const Matrix c = e.particles.rowwise() - e.particles.colwise().mean();
  return (c.array().square().sum()) / static_cast<double>(e.size());
}

/// Ensemble mean in working coordinates mapped to physical space.
inline ParamVector ensemble_mean(const Ensemble& e, const Prior& prior) {
  return prior.to_physical(e.particles.colwise().mean().transpose());
}

/// 1/2 sum_j r_j^2 / R_j, +inf when the evaluation failed.
inline double data_misfit(const std::optional<Vector>& g, const Vector& y, const Vector& R) {
  if (!g || !g->allFinite()) return std::numeric_limits<double>::infinity();
  return 0.5 * ((y - *g).array().square() / R.array()).sum();
}

inline EnkiResult run_enki(const Vector& y, const ForwardModel& fm, const Prior& prior, const Vector& R,
                           const EnkiConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  prior.validate();
  Rng prior_rng = make_rng(seed, Stream::prior);
  EnkiResult res;
  res.ensemble = sample_prior(prior, cfg.M, prior_rng);

  auto record = [&](std::size_t valid) {
    IterationDiagnostics d;
    d.iteration = res.ensemble.iteration;
    d.mean = ensemble_mean(res.ensemble, prior);
    d.spread = ensemble_spread(res.ensemble);
    if (!std::isfinite(d.spread)) throw NumericalError("run_enki: non-finite ensemble spread");
    // The objective at the mean uses a stream separate from the particles'.
    const auto g = fm.evaluate({d.mean}, res.ensemble.iteration + (std::size_t{1} << 32), 1);
    d.objective = data_misfit(g.front(), y, R);
    d.valid = valid;
    res.diagnostics.push_back(std::move(d));
    if (cfg.keep_history) res.history.push_back(res.ensemble);
  };

  record(cfg.M);
  for (std::size_t it = 0; it < cfg.N; ++it) {
    const auto step = enki_step(res.ensemble, prior, fm, y, R, cfg, seed);
    record(step.valid);
  }
  return res;
}

/// CSV rows: iteration, particle, then every component in physical space.
inline void write_ensemble_csv(const std::filesystem::path& path, const std::vector<Ensemble>& snapshots,
                               const Prior& prior) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << "iteration,particle";
  for (const auto& c : prior.components) os << ',' << c.name;
  os << '\n';
  os.precision(17);
  for (const auto& e : snapshots)
    for (std::size_t m = 0; m < e.size(); ++m) {
      const auto p = prior.to_physical(e.particles.row(static_cast<Eigen::Index>(m)).transpose());
      os << e.iteration << ',' << m;
      for (double v : p) os << ',' << v;
      os << '\n';
    }
}

}  // namespace ee::enki

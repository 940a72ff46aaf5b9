#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/types.hpp"
#include "ee/losses/memory_bank.hpp"
#include "ee/nn/graph.hpp"
#include "ee/nn/ops.hpp"

namespace ee::losses {

using nn::Graph;
using nn::NodeId;
using nn::RowMatrix;
using nn::Tensor;
using nn::Var;

/// InfoNCE with in-batch and bank negatives, as a single graph node:
///
///   loss = mean_i [ -s_ii+/tau + log( exp(s_ii+/tau) + sum_{j != i} exp(<a_i, n_j>/tau)
///                                     + sum_m exp(<a_i, b_m>/tau) ) ]
///
/// with s_ii+ = <a_i, p_i>. The anchor's own similarity is never in the
/// denominator. `negatives` may be absent; bank rows are constants.
inline Var nce(Var anchors, Var positives, std::optional<Var> negatives, const RowMatrix& bank, double tau) {
  ee::detail::require_config(tau > 0.0, "nce: temperature must be > 0");
  const auto& A = anchors.value();
  const auto& P = positives.value();
  if (A.rank() != 2 || A.shape != P.shape) throw ShapeError("nce: anchors/positives must be equal (n, p) matrices");
  const std::size_t n = A.dim(0), p = A.dim(1);
  if (n == 0) throw ShapeError("nce: empty batch");
  if (negatives && negatives->value().shape != A.shape) throw ShapeError("nce: in-batch negatives misaligned");
  if (bank.rows() > 0 && static_cast<std::size_t>(bank.cols()) != p) throw ShapeError("nce: bank dimension mismatch");

  const auto Am = A.matrix();
  const RowMatrix spos = (Am.array() * P.matrix().array()).rowwise().sum();
  RowMatrix sneg;
  if (negatives) sneg = Am * negatives->value().matrix().transpose();
  RowMatrix sbank;
  if (bank.rows() > 0) sbank = Am * bank.transpose();

  // Softmax weights per anchor over [positive, in-batch j != i, bank].
  RowMatrix wneg = RowMatrix::Zero(negatives ? n : 0, negatives ? n : 0);
  RowMatrix wbank = RowMatrix::Zero(n, bank.rows());
  std::vector<double> wpos(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double l0 = spos(ii, 0) / tau;
    double mx = l0;
    if (negatives)
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) mx = std::max(mx, sneg(ii, static_cast<Eigen::Index>(j)) / tau);
    for (Eigen::Index m = 0; m < sbank.cols(); ++m) mx = std::max(mx, sbank(ii, m) / tau);
    double z = std::exp(l0 - mx);
    wpos[i] = z;
    if (negatives)
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) {
          const double e = std::exp(sneg(ii, static_cast<Eigen::Index>(j)) / tau - mx);
          wneg(ii, static_cast<Eigen::Index>(j)) = e;
          z += e;
        }
    for (Eigen::Index m = 0; m < sbank.cols(); ++m) {
      const double e = std::exp(sbank(ii, m) / tau - mx);
      wbank(ii, m) = e;
      z += e;
    }
    total += -l0 + mx + std::log(z);
    wpos[i] /= z;
    if (negatives) wneg.row(ii) /= z;
    if (wbank.cols() > 0) wbank.row(ii) /= z;
  }
  total /= static_cast<double>(n);

  const NodeId ai = anchors.id, pi = positives.id;
  const std::optional<NodeId> ni = negatives ? std::optional<NodeId>(negatives->id) : std::nullopt;
  RowMatrix bank_copy = bank;
  return anchors.graph->record(
      Tensor::scalar(total), "nce",
      [ai, pi, ni, n, p, tau, wpos = std::move(wpos), wneg = std::move(wneg), wbank = std::move(wbank),
       bank_copy = std::move(bank_copy)](Graph& g, NodeId self) {
        const double scale = g.grad(self).data[0] / (static_cast<double>(n) * tau);
        const auto Am = g.value(ai).matrix();
        const auto Pm = g.value(pi).matrix();
        RowMatrix dA = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
        RowMatrix dP = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
        for (std::size_t i = 0; i < n; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          const double c = wpos[i] - 1.0;
          dA.row(ii) += c * Pm.row(ii);
          dP.row(ii) += c * Am.row(ii);
        }
        if (wbank.cols() > 0) dA.noalias() += wbank * bank_copy;
        if (ni) {
          const auto Nm = g.value(*ni).matrix();
          dA.noalias() += wneg * Nm;
          const RowMatrix dN = wneg.transpose() * Am;
          g.grad(*ni).matrix() += scale * dN;
        }
        g.grad(ai).matrix() += scale * dA;
        g.grad(pi).matrix() += scale * dP;
      });
}

/// Trajectory-side contrastive loss: anchors f(Z_i), positives f(Z~_i),
/// other anchors in the batch plus the trajectory bank as negatives.
inline Var info_nce_zz(Var anchors, Var positives, const MemoryBank& bank, double tau) {
  return nce(anchors, positives, anchors, bank.matrix(), tau);
}

/// Parameter-side contrastive loss, same structure with g(phi_i), g(phi~_i).
inline Var info_nce_pp(Var anchors, Var positives, const MemoryBank& bank, double tau) {
  return nce(anchors, positives, anchors, bank.matrix(), tau);
}

/// Symmetric cross-modal loss aligning f(Z_i) with g(phi_i): trajectory
/// anchors against parameter negatives plus parameter anchors against
/// trajectory negatives.
inline Var clip_loss(Var z_emb, Var p_emb, const MemoryBank& z_bank, const MemoryBank& p_bank, double tau_prime) {
  if (z_emb.value().shape != p_emb.value().shape) throw ShapeError("clip_loss: batch sizes or dims differ");
  Var a = nce(z_emb, p_emb, p_emb, p_bank.matrix(), tau_prime);
  Var b = nce(p_emb, z_emb, z_emb, z_bank.matrix(), tau_prime);
  return nn::add(a, b);
}

/// (1/n) sum_i sum_j |phi_ij - pred_ij| / (|phi_ij| + eps).
inline Var mape_loss(Var pred, std::span<const ParamVector> truths, double eps = 1e-6) {
  const auto& P = pred.value();
  if (P.rank() != 2 || P.dim(0) != truths.size()) throw ShapeError("mape_loss: batch size mismatch");
  const std::size_t n = P.dim(0), k = P.dim(1);
  std::vector<double> w(n * k), sgn(n * k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (truths[i].size() != k) throw ShapeError("mape_loss: parameter dimension mismatch");
    for (std::size_t j = 0; j < k; ++j) {
      const double phi = truths[i][j], e = P.data[i * k + j] - phi;
      w[i * k + j] = 1.0 / (std::abs(phi) + eps);
      sgn[i * k + j] = (e > 0) - (e < 0);
      total += std::abs(e) * w[i * k + j];
    }
  }
  const NodeId id = pred.id;
  return pred.graph->record(Tensor::scalar(total / static_cast<double>(n)), "mape",
                            [id, n, w = std::move(w), sgn = std::move(sgn)](Graph& g, NodeId self) {
                              const double s = g.grad(self).data[0] / static_cast<double>(n);
                              auto& gx = g.grad(id).data;
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * sgn[i] * w[i];
                            });
}

struct LossWeights {
  double zz = 1.0;
  double pp = 1.0;
  double zp = 1.0;
  double mape = 1.0;

  void validate() const {
    ee::detail::require_config(zz >= 0 && pp >= 0 && zp >= 0 && mape >= 0, "loss weights must be >= 0");
    ee::detail::require_config(zz > 0 || pp > 0 || zp > 0 || mape > 0, "at least one loss weight must be > 0");
  }
};

struct LossComponents {
  Var zz, pp, zp, mape;
};

inline Var total_loss(const LossComponents& c, const LossWeights& w) {
  const Var parts[] = {c.zz, c.pp, c.zp, c.mape};
  const double ws[] = {w.zz, w.pp, w.zp, w.mape};
  return nn::weighted_sum(parts, ws);
}

}  // namespace ee::losses

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/nn/graph.hpp"
#include "ee/nn/tensor.hpp"

namespace ee::nn {

namespace detail {

inline void expect_rank(const Var& v, std::size_t r, const char* op) {
  if (v.value().rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_string(v.value().shape));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// x (n, in) * W (in, out) + b (out).
inline Var linear(Var x, Var W, Var b) {
  detail::expect_rank(x, 2, "linear");
  detail::expect_rank(W, 2, "linear");
  const auto n = x.value().dim(0), in = x.value().dim(1), out = W.value().dim(1);
  if (W.value().dim(0) != in || b.value().size() != out)
    throw ShapeError("linear: x" + shape_string(x.shape()) + " W" + shape_string(W.shape()) + " b" +
                     shape_string(b.shape()));
  Tensor y({n, out});
  y.matrix() = x.value().matrix() * W.value().matrix();
  const auto bias = b.value().matrix(1, out);
  y.matrix().rowwise() += bias.row(0);
  Graph& g = *x.graph;
  const NodeId xi = x.id, wi = W.id, bi = b.id;
  return g.record(std::move(y), "linear", [xi, wi, bi, n, in, out](Graph& g, NodeId self) {
    const auto gy = g.grad(self).matrix();
    g.grad(xi).matrix().noalias() += gy * g.value(wi).matrix().transpose();
    g.grad(wi).matrix().noalias() += g.value(xi).matrix().transpose() * gy;
    g.grad(bi).matrix(1, out) += gy.colwise().sum();
    (void)n;
    (void)in;
  });
}

inline Var add(Var a, Var b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.value().data[i];
  const NodeId ai = a.id, bi = b.id;
  return a.graph->record(std::move(y), "add", [ai, bi](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    Tensor& ga = g.grad(ai);
    for (std::size_t i = 0; i < gy.size(); ++i) ga.data[i] += gy.data[i];
    Tensor& gb = g.grad(bi);
    for (std::size_t i = 0; i < gy.size(); ++i) gb.data[i] += gy.data[i];
  });
}

inline Var scale(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data) v *= s;
  const NodeId ai = a.id;
  return a.graph->record(std::move(y), "scale", [ai, s](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    Tensor& ga = g.grad(ai);
    for (std::size_t i = 0; i < gy.size(); ++i) ga.data[i] += s * gy.data[i];
  });
}

/// x * sigmoid(x), elementwise.
inline Var silu(Var x) {
  Tensor y = x.value();
  for (auto& v : y.data) v = v * detail::sigmoid(v);
  const NodeId xi = x.id;
  return x.graph->record(std::move(y), "silu", [xi](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    const Tensor& xv = g.value(xi);
    Tensor& gx = g.grad(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const double s = detail::sigmoid(xv.data[i]);
      gx.data[i] += gy.data[i] * s * (1.0 + xv.data[i] * (1.0 - s));
    }
  });
}

namespace detail {

// col(c*K + t, b*L + l) = x(b, c, (l + t - K/2) mod L)
inline void im2col_circular(const Tensor& x, std::size_t K, RowMatrix& col) {
  const auto B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t pad = K / 2;
  col.resize(static_cast<Eigen::Index>(C * K), static_cast<Eigen::Index>(B * L));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < K; ++t) {
      double* dst = col.row(static_cast<Eigen::Index>(c * K + t)).data();
      for (std::size_t b = 0; b < B; ++b) {
        const double* src = x.data.data() + (b * C + c) * L;
        double* d = dst + b * L;
        const std::size_t shift = (t + L - pad % L) % L;  // source index = (l + shift) mod L
        for (std::size_t l = 0; l < L; ++l) {
          std::size_t s = l + shift;
          if (s >= L) s -= L;
          d[l] = src[s];
        }
      }
    }
}

}  // namespace detail

/// 1-D convolution along the last axis with circular padding ("same" length).
/// x (B, C, L), w (Co, C, K) with K odd, b (Co) -> (B, Co, L).
inline Var conv1d_circular(Var x, Var w, Var b) {
  detail::expect_rank(x, 3, "conv1d_circular");
  detail::expect_rank(w, 3, "conv1d_circular");
  const auto B = x.value().dim(0), C = x.value().dim(1), L = x.value().dim(2);
  const auto Co = w.value().dim(0), K = w.value().dim(2);
  if (w.value().dim(1) != C || b.value().size() != Co || K % 2 == 0)
    throw ShapeError("conv1d_circular: x" + shape_string(x.shape()) + " w" + shape_string(w.shape()));
  RowMatrix col;
  detail::im2col_circular(x.value(), K, col);
  RowMatrix out = w.value().matrix(Co, C * K) * col;  // (Co, B*L)
  Tensor y({B, Co, L});
  for (std::size_t bb = 0; bb < B; ++bb)
    for (std::size_t o = 0; o < Co; ++o) {
      const double bias = b.value().data[o];
      const double* src = out.row(static_cast<Eigen::Index>(o)).data() + bb * L;
      double* dst = y.data.data() + (bb * Co + o) * L;
      for (std::size_t l = 0; l < L; ++l) dst[l] = src[l] + bias;
    }
  const NodeId xi = x.id, wi = w.id, bi = b.id;
  return x.graph->record(std::move(y), "conv1d", [=](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    RowMatrix dy(static_cast<Eigen::Index>(Co), static_cast<Eigen::Index>(B * L));
    for (std::size_t bb = 0; bb < B; ++bb)
      for (std::size_t o = 0; o < Co; ++o) {
        const double* src = gy.data.data() + (bb * Co + o) * L;
        double* dst = dy.row(static_cast<Eigen::Index>(o)).data() + bb * L;
        for (std::size_t l = 0; l < L; ++l) dst[l] = src[l];
      }
    RowMatrix colr;
    detail::im2col_circular(g.value(xi), K, colr);
    g.grad(wi).matrix(Co, C * K).noalias() += dy * colr.transpose();
    g.grad(bi).matrix(1, Co) += dy.rowwise().sum().transpose();
    const RowMatrix dcol = g.value(wi).matrix(Co, C * K).transpose() * dy;
    Tensor& gx = g.grad(xi);
    const std::size_t pad = K / 2;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < K; ++t) {
        const double* src = dcol.row(static_cast<Eigen::Index>(c * K + t)).data();
        const std::size_t shift = (t + L - pad % L) % L;
        for (std::size_t bb = 0; bb < B; ++bb) {
          double* dst = gx.data.data() + (bb * C + c) * L;
          const double* s = src + bb * L;
          for (std::size_t l = 0; l < L; ++l) {
            std::size_t idx = l + shift;
            if (idx >= L) idx -= L;
            dst[idx] += s[l];
          }
        }
      }
  });
}

/// Global average over the last axis: (B, C, L) -> (B, C).
inline Var mean_last(Var x) {
  detail::expect_rank(x, 3, "mean_last");
  const auto B = x.value().dim(0), C = x.value().dim(1), L = x.value().dim(2);
  Tensor y({B, C});
  for (std::size_t i = 0; i < B * C; ++i) {
    double s = 0.0;
    const double* src = x.value().data.data() + i * L;
    for (std::size_t l = 0; l < L; ++l) s += src[l];
    y.data[i] = s / static_cast<double>(L);
  }
  const NodeId xi = x.id;
  return x.graph->record(std::move(y), "mean_last", [xi, B, C, L](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad(xi);
    const double inv = 1.0 / static_cast<double>(L);
    for (std::size_t i = 0; i < B * C; ++i) {
      const double v = gy.data[i] * inv;
      double* dst = gx.data.data() + i * L;
      for (std::size_t l = 0; l < L; ++l) dst[l] += v;
    }
  });
}

/// Projects every row onto the unit sphere.
inline Var l2_normalize_rows(Var x) {
  detail::expect_rank(x, 2, "l2_normalize_rows");
  const auto n = x.value().dim(0), p = x.value().dim(1);
  Tensor y = x.value();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += y.data[i * p + j] * y.data[i * p + j];
    norms[i] = std::max(std::sqrt(s), 1e-12);
    for (std::size_t j = 0; j < p; ++j) y.data[i * p + j] /= norms[i];
  }
  const NodeId xi = x.id;
  // dx = (dy - y <y, dy>) / |x|
  return x.graph->record(std::move(y), "l2_normalize", [xi, n, p, norms](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    const Tensor& yv = g.value(self);
    Tensor& gx = g.grad(xi);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < p; ++j) dot += yv.data[i * p + j] * gy.data[i * p + j];
      for (std::size_t j = 0; j < p; ++j)
        gx.data[i * p + j] += (gy.data[i * p + j] - yv.data[i * p + j] * dot) / norms[i];
    }
  });
}

/// Concatenates rank-2 tensors with equal row counts along columns.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const auto n = parts[0].value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& v : parts) {
    detail::expect_rank(v, 2, "concat_cols");
    if (v.value().dim(0) != n) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(v.value().dim(1));
    total += widths.back();
  }
  Tensor y({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    y.matrix().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(widths[k])) =
        parts[k].value().matrix();
    off += widths[k];
  }
  std::vector<NodeId> ids;
  for (const auto& v : parts) ids.push_back(v.id);
  return parts[0].graph->record(std::move(y), "concat_cols", [ids, widths, n](Graph& g, NodeId self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      g.grad(ids[k]).matrix() +=
          g.grad(self).matrix().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(widths[k]));
      off += widths[k];
    }
    (void)n;
  });
}

/// Column j of a rank-2 tensor as an (n, 1) tensor.
inline Var column(Var x, std::size_t j) {
  detail::expect_rank(x, 2, "column");
  const auto n = x.value().dim(0), m = x.value().dim(1);
  if (j >= m) throw ShapeError("column: index out of range");
  Tensor y({n, 1});
  for (std::size_t i = 0; i < n; ++i) y.data[i] = x.value().data[i * m + j];
  const NodeId xi = x.id;
  return x.graph->record(std::move(y), "column", [xi, j, n, m](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad(xi);
    for (std::size_t i = 0; i < n; ++i) gx.data[i * m + j] += gy.data[i];
  });
}

/// Rows [begin, begin + count) of a tensor (leading axis).
inline Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const auto& s = x.value().shape;
  if (s.empty() || begin + count > s[0]) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t stride = x.value().size() / s[0];
  std::vector<std::size_t> shape = s;
  shape[0] = count;
  Tensor y(shape);
  std::copy_n(x.value().data.begin() + static_cast<std::ptrdiff_t>(begin * stride), count * stride, y.data.begin());
  const NodeId xi = x.id;
  return x.graph->record(std::move(y), "slice_rows", [xi, begin, count, stride](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad(xi);
    for (std::size_t i = 0; i < count * stride; ++i) gx.data[begin * stride + i] += gy.data[i];
  });
}

/// y(i, j) = x(i, j) * scale(j) + shift(j) with constant scale/shift.
inline Var affine_cols(Var x, std::span<const double> scale_by, std::span<const double> shift_by) {
  detail::expect_rank(x, 2, "affine_cols");
  const auto n = x.value().dim(0), m = x.value().dim(1);
  if (scale_by.size() != m || shift_by.size() != m) throw ShapeError("affine_cols: coefficient length mismatch");
  std::vector<double> s(scale_by.begin(), scale_by.end());
  Tensor y = x.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y.data[i * m + j] = y.data[i * m + j] * s[j] + shift_by[j];
  const NodeId xi = x.id;
  return x.graph->record(std::move(y), "affine_cols", [xi, s, n, m](Graph& g, NodeId self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad(xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx.data[i * m + j] += gy.data[i * m + j] * s[j];
  });
}

/// sum_k w_k * s_k over scalar nodes.
inline Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.empty() || scalars.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < scalars.size(); ++k) total += weights[k] * scalars[k].value().item();
  std::vector<NodeId> ids;
  for (const auto& v : scalars) ids.push_back(v.id);
  std::vector<double> w(weights.begin(), weights.end());
  return scalars[0].graph->record(Tensor::scalar(total), "weighted_sum", [ids, w](Graph& g, NodeId self) {
    const double gy = g.grad(self).data[0];
    for (std::size_t k = 0; k < ids.size(); ++k) g.grad(ids[k]).data[0] += w[k] * gy;
  });
}

/// Mean of all entries, as a scalar.
inline Var mean_all(Var x) {
  const auto& v = x.value();
  double s = 0.0;
  for (double e : v.data) s += e;
  const auto n = v.size();
  const NodeId xi = x.id;
  return x.graph->record(Tensor::scalar(s / static_cast<double>(n)), "mean_all", [xi, n](Graph& g, NodeId self) {
    const double gy = g.grad(self).data[0] / static_cast<double>(n);
    for (auto& e : g.grad(xi).data) e += gy;
  });
}

/// Sum of squares of all entries, as a scalar.
inline Var sum_squares(Var x) {
  double s = 0.0;
  for (double e : x.value().data) s += e * e;
  const NodeId xi = x.id;
  return x.graph->record(Tensor::scalar(s), "sum_squares", [xi](Graph& g, NodeId self) {
    const double gy = g.grad(self).data[0];
    const Tensor& xv = g.value(xi);
    Tensor& gx = g.grad(xi);
    for (std::size_t i = 0; i < xv.size(); ++i) gx.data[i] += 2.0 * xv.data[i] * gy;
  });
}

}  // namespace ee::nn

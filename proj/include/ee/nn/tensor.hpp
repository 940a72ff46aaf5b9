#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ee/common/error.hpp"

namespace ee::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

/// Dense row-major array of doubles with a runtime shape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(numel(shape), fill);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) throw ShapeError("Tensor: data length does not match shape");
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double item() const {
    if (data.size() != 1) throw ShapeError("Tensor::item on non-scalar");
    return data[0];
  }

  /// Views a rank-2 tensor (or a tensor reshaped to rows x cols).
  MatMap matrix(std::size_t rows, std::size_t cols) {
    if (rows * cols != data.size()) throw ShapeError("Tensor::matrix: bad view shape");
    return MatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  ConstMatMap matrix(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data.size()) throw ShapeError("Tensor::matrix: bad view shape");
    return ConstMatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  MatMap matrix() {
    if (rank() != 2) throw ShapeError("Tensor::matrix on rank-" + std::to_string(rank()) + " tensor");
    return matrix(shape[0], shape[1]);
  }
  ConstMatMap matrix() const {
    if (rank() != 2) throw ShapeError("Tensor::matrix on rank-" + std::to_string(rank()) + " tensor");
    return matrix(shape[0], shape[1]);
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_string(const std::vector<std::size_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

}  // namespace ee::nn

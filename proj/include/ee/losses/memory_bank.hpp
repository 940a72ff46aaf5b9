#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/nn/tensor.hpp"

namespace ee::losses {

/// FIFO queue of unit-norm embeddings used as extra negatives.
class MemoryBank {
 public:
  static constexpr double kUnitTolerance = 1e-6;

  MemoryBank() = default;
  MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  /// Appends one embedding, evicting the oldest entries beyond capacity.
  void push(std::span<const double> v) {
    ee::detail::require_shape(v.size() == dim_, "MemoryBank::push: wrong embedding dimension");
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (!(std::abs(std::sqrt(n2) - 1.0) <= kUnitTolerance))
      throw NumericalError("MemoryBank::push: embedding is not unit norm (norm " + std::to_string(std::sqrt(n2)) + ")");
    if (capacity_ == 0) return;
    items_.emplace_back(v.begin(), v.end());
    while (items_.size() > capacity_) items_.pop_front();
  }

  /// Appends every row of `rows` in order.
  void push_rows(const nn::RowMatrix& rows) {
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
      push({rows.row(r).data(), static_cast<std::size_t>(rows.cols())});
  }

  const std::vector<double>& at(std::size_t i) const { return items_.at(i); }

  /// Contents as a (size, dim) matrix, oldest first.
  nn::RowMatrix matrix() const {
    nn::RowMatrix m(static_cast<Eigen::Index>(items_.size()), static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < items_.size(); ++i)
      for (std::size_t j = 0; j < dim_; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = items_[i][j];
    return m;
  }

  void clear() { items_.clear(); }

 private:
  std::size_t capacity_ = 0;
  std::size_t dim_ = 0;
  std::deque<std::vector<double>> items_;
};

inline MemoryBank bank_update(MemoryBank bank, const nn::RowMatrix& rows) {
  bank.push_rows(rows);
  return bank;
}

}  // namespace ee::losses

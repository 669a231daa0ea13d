// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sherry/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sherry {

/// Row-major dense matrix. Weight matrices are stored as (rows = d_in,
/// cols = d_out); activation matrices as (rows = tokens, cols = d_in).
template <class T>
class Matrix {
public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    detail::require<ConstraintError>(values_.size() == rows_ * cols_,
                                     "matrix: value count does not match shape");
  }
  Matrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto &row : init) {
      detail::require<ConstraintError>(row.size() == cols_,
                                       "matrix: ragged initializer");
      values_.insert(values_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T &operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  const T &operator()(std::size_t r, std::size_t c) const noexcept {
    return values_[r * cols_ + c];
  }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::span<T> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  T *data() noexcept { return values_.data(); }
  const T *data() const noexcept { return values_.data(); }

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    std::transform(values_.begin(), values_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Matrix &) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

template <class T>
using EigenRowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<EigenRowMajor<T>> as_eigen(Matrix<T> &m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

template <class T>
Eigen::Map<const EigenRowMajor<T>> as_eigen(const Matrix<T> &m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

template <class T>
Matrix<T> from_eigen(const EigenRowMajor<T> &e) {
  Matrix<T> out(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  as_eigen(out) = e;
  return out;
}

template <class T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <class T>
void require_finite(const Matrix<T> &m, const std::string &what) {
  detail::require<ConstraintError>(all_finite(m.values()), what + ": non-finite value");
}

} // namespace sherry

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sherry/sherry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace sherry::testing {

template <class T = float>
Matrix<T> random_normal(std::size_t rows, std::size_t cols, std::mt19937_64 &rng, T stddev = 1) {
  std::normal_distribution<T> nd(T{0}, stddev);
  Matrix<T> m(rows, cols);
  for (auto &v : m.values())
    v = nd(rng);
  return m;
}

inline std::vector<float> random_vector(std::size_t n, std::mt19937_64 &rng) {
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto &x : v)
    x = nd(rng);
  return v;
}

/// Independent brute force over every code vector in {-1,0,+1}^n, keeping
/// only those with exactly three non-zeros per aligned 4-block. Shares no
/// enumeration logic with sparse34_oracle.
inline double brute_force_sparse34_error(std::span<const double> column, std::size_t seg_len) {
  const std::size_t n = column.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i)
    total *= 3;
  double best = INFINITY;
  std::vector<int> t(n);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rest % 3) - 1;
      rest /= 3;
    }
    bool ok = true;
    for (std::size_t b = 0; b < n && ok; b += 4)
      ok = std::count_if(t.begin() + b, t.begin() + b + 4, [](int v) { return v != 0; }) == 3;
    if (!ok)
      continue;
    double err = 0.0;
    for (std::size_t s = 0; s < n; s += seg_len) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = s; i < s + seg_len; ++i) {
        num += column[i] * t[i];
        den += t[i] * t[i];
      }
      const double a = std::max(0.0, num / den);
      for (std::size_t i = s; i < s + seg_len; ++i)
        err += (column[i] - a * t[i]) * (column[i] - a * t[i]);
    }
    best = std::min(best, err);
  }
  return best;
}

/// Random valid sparse34 ternary tensor with random positive scales.
inline TernaryTensor random_sparse34(std::size_t rows, std::size_t cols, const Granularity &g,
                                     std::mt19937_64 &rng) {
  auto w = random_normal<double>(rows, cols, rng);
  return sparse34_quantize(w, g);
}

/// Random dense ternary codes (any pattern) with absmean-style scales.
inline TernaryTensor random_dense_ternary(std::size_t rows, std::size_t cols, const Granularity &g,
                                          std::mt19937_64 &rng) {
  auto w = random_normal<double>(rows, cols, rng);
  return absmean_quantize(w, g);
}

inline double max_relative_error(std::span<const double> a, std::span<const double> ref) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - ref[i]);
    if (d == 0.0)
      continue;
    worst = std::max(worst, d / std::max(std::abs(ref[i]), 1e-300));
  }
  return worst;
}

template <class A, class B>
std::vector<double> to_double(const std::vector<A> &v) {
  return std::vector<double>(v.begin(), v.end());
}

} // namespace sherry::testing

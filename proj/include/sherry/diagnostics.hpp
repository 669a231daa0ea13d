// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sherry/error.hpp"
#include "sherry/granularity.hpp"
#include "sherry/matrix.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace sherry {

struct EffectiveRankResult {
  double er = 0.0;
  double entropy = 0.0; // nats
  std::vector<double> singular_values; // descending, floored values removed
  /// Set for an all-zero input, where er is reported as 0.
  bool zero_matrix = false;
};

/// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kSingularValueFloor = 1e-12;

/// exp of the Shannon entropy of the normalized singular-value distribution.
template <class T>
EffectiveRankResult effective_rank(const Matrix<T> &g) {
  detail::require<ConstraintError>(!g.empty(), "effective_rank: empty matrix");
  require_finite(g, "effective_rank");

  const EigenRowMajor<double> m = as_eigen(g).template cast<double>();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd sv = svd.singularValues();

  EffectiveRankResult r;
  const double smax = sv.size() ? sv.maxCoeff() : 0.0;
  if (!(smax > 0.0)) {
    r.zero_matrix = true;
    return r;
  }
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > kSingularValueFloor * smax)
      r.singular_values.push_back(sv[i]);
  std::sort(r.singular_values.begin(), r.singular_values.end(), std::greater<>());

  const double total = std::accumulate(r.singular_values.begin(), r.singular_values.end(), 0.0);
  double h = 0.0;
  for (double s : r.singular_values) {
    const double p = s / total;
    if (p > 0.0)
      h -= p * std::log(p);
  }
  r.entropy = h;
  r.er = std::exp(h);
  return r;
}

inline constexpr std::size_t kHistogramBins = 64;

struct WeightHistogram {
  std::array<std::uint64_t, kHistogramBins> counts{};
  double lo = -3.0;
  double hi = 3.0;
  /// Some scope had alpha == 0 and was normalized by 1 instead.
  bool zero_scale = false;

  std::uint64_t total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }
  std::size_t bin_of(double v) const noexcept {
    const double pos = (v - lo) / (hi - lo) * static_cast<double>(kHistogramBins);
    if (!(pos >= 0.0))
      return 0;
    return std::min(static_cast<std::size_t>(pos), kHistogramBins - 1);
  }
  double bin_center(std::size_t b) const noexcept {
    return lo + (static_cast<double>(b) + 0.5) * (hi - lo) / static_cast<double>(kHistogramBins);
  }
};

/// Histogram of W / alpha (per scope) over [-3, 3]; values outside the range
/// land in the edge bins.
template <class T>
WeightHistogram weight_histogram(const Matrix<T> &w, std::span<const float> scales,
                                 const Granularity &g) {
  g.validate(w.rows());
  detail::require<ConstraintError>(scales.size() == g.scale_count(w.rows(), w.cols()),
                                   "weight_histogram: scale count mismatch");
  WeightHistogram h;
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const std::size_t seg = g.kind == GranularityKind::per_group ? i / g.group_size : 0;
      double alpha = scales[g.scope_index(j, seg, w.rows())];
      if (alpha == 0.0) {
        h.zero_scale = true;
        alpha = 1.0;
      }
      ++h.counts[h.bin_of(static_cast<double>(w(i, j)) / alpha)];
    }
  return h;
}

struct TrapSummary {
  /// Mass fraction held by the two dominant non-zero modes.
  double score = 0.0;
  std::array<std::size_t, 2> mode_bins{};
  std::array<double, 2> mode_centers{};
};

/// Locates the two heaviest local maxima of the histogram outside the
/// bin(s) whose closed range contains zero and reports their combined mass
/// fraction, counting bins within `epsilon_bins` of each mode. A healthy ternary layer keeps mass
/// at zero as well; a trapped one concentrates it in two polarized modes.
inline TrapSummary trap_score(const WeightHistogram &h, std::size_t epsilon_bins = 0) {
  TrapSummary s;
  const std::uint64_t total = h.total();
  if (total == 0)
    return s;
  const std::size_t zero_bin = h.bin_of(0.0);
  // with an even bin count over a symmetric range zero sits on an edge
  const double left_edge =
      h.lo + static_cast<double>(zero_bin) * (h.hi - h.lo) / static_cast<double>(kHistogramBins);
  const bool zero_on_edge = zero_bin > 0 && left_edge == 0.0;
  auto is_zero_bin = [&](std::size_t b) {
    return b == zero_bin || (zero_on_edge && b + 1 == zero_bin);
  };

  std::vector<std::size_t> order;
  for (std::size_t b = 0; b < kHistogramBins; ++b)
    if (!is_zero_bin(b))
      order.push_back(b);
  auto is_local_max = [&](std::size_t b) {
    const bool left = b == 0 || h.counts[b] >= h.counts[b - 1];
    const bool right = b + 1 == kHistogramBins || h.counts[b] >= h.counts[b + 1];
    return left && right;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool la = is_local_max(a), lb = is_local_max(b);
    if (la != lb)
      return la;
    return h.counts[a] > h.counts[b];
  });

  s.mode_bins = {order[0], order[1]};
  std::sort(s.mode_bins.begin(), s.mode_bins.end());
  std::array<bool, kHistogramBins> counted{};
  std::uint64_t mass = 0;
  for (std::size_t m : s.mode_bins) {
    const std::size_t from = m >= epsilon_bins ? m - epsilon_bins : 0;
    const std::size_t to = std::min(kHistogramBins - 1, m + epsilon_bins);
    for (std::size_t b = from; b <= to; ++b)
      if (!counted[b]) {
        counted[b] = true;
        mass += h.counts[b];
      }
  }
  s.mode_centers = {h.bin_center(s.mode_bins[0]), h.bin_center(s.mode_bins[1])};
  s.score = static_cast<double>(mass) / static_cast<double>(total);
  return s;
}

} // namespace sherry

// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Ternary weight quantizers.
 *
 * All schemes map a weight matrix W (d_in x d_out) to codes T in {-1, 0, +1}
 * and one non-negative scale per scope, so that W ~= T * alpha element-wise:
 *
 *   absmean   alpha = mean|W|,              delta = alpha / 2
 *   twn       delta = 0.7 * mean|W|,        alpha = mean{|W| : |W| > delta}
 *   sparse34  per aligned 4-block along d_in, zero the smallest |W| (lowest
 *             index on ties) and keep sign(W) elsewhere, sign(0) = +1;
 *             alpha = 4 / (3 n_scope) * sum_{kept} |W|
 *   binary    T = sign(W), alpha = mean|W|   (1-bit ablation arm)
 *
 * The dense schemes map |W| <= delta to 0. Statistics are accumulated in
 * double precision with a fixed per-column order; scales are stored as float.
 */

#include "sherry/error.hpp"
#include "sherry/granularity.hpp"
#include "sherry/matrix.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace sherry {

enum class QuantScheme : std::uint8_t {
  absmean,
  twn,
  sparse34,
  binary,
  /// Codes recovered from a container that does not record their origin.
  unspecified,
};

inline std::string to_string(QuantScheme s) {
  switch (s) {
  case QuantScheme::absmean:
    return "absmean";
  case QuantScheme::twn:
    return "twn";
  case QuantScheme::sparse34:
    return "sparse34";
  case QuantScheme::binary:
    return "binary";
  case QuantScheme::unspecified:
    return "unspecified";
  }
  return "?";
}

inline QuantScheme parse_quant_scheme(const std::string &name) {
  if (name == "absmean")
    return QuantScheme::absmean;
  if (name == "twn")
    return QuantScheme::twn;
  if (name == "sparse34")
    return QuantScheme::sparse34;
  if (name == "binary")
    return QuantScheme::binary;
  throw ConstraintError("unknown quantization scheme '" + name + "'");
}

struct TernaryTensor {
  std::size_t rows = 0; // d_in
  std::size_t cols = 0; // d_out
  std::vector<std::int8_t> codes; // row-major
  std::vector<float> scales;
  std::vector<float> thresholds; // dense schemes only
  QuantScheme scheme = QuantScheme::unspecified;
  Granularity granularity;

  std::int8_t code(std::size_t i, std::size_t j) const noexcept { return codes[i * cols + j]; }

  std::size_t scope_of(std::size_t i, std::size_t j) const noexcept {
    const std::size_t seg = granularity.kind == GranularityKind::per_group
                                ? i / granularity.group_size
                                : 0;
    return granularity.scope_index(j, seg, rows);
  }
  float scale_for(std::size_t i, std::size_t j) const noexcept { return scales[scope_of(i, j)]; }

  void validate() const {
    using detail::require;
    granularity.validate(rows);
    require<ConstraintError>(codes.size() == rows * cols, "ternary tensor: code count mismatch");
    require<ConstraintError>(scales.size() == granularity.scale_count(rows, cols),
                             "ternary tensor: scale count mismatch");
    require<ConstraintError>(thresholds.empty() || thresholds.size() == scales.size(),
                             "ternary tensor: threshold count mismatch");
    for (auto c : codes)
      require<ConstraintError>(c >= -1 && c <= 1, "ternary tensor: code outside {-1,0,+1}");
    for (auto a : scales)
      require<ConstraintError>(std::isfinite(a) && a >= 0.0f,
                               "ternary tensor: scales must be finite and non-negative");
    if (scheme == QuantScheme::sparse34) {
      require<ConstraintError>(rows % 4 == 0, "ternary tensor: sparse34 requires d_in % 4 == 0");
      for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t b = 0; b < rows; b += 4) {
          int nz = 0;
          for (std::size_t k = 0; k < 4; ++k)
            nz += code(b + k, j) != 0;
          require<ConstraintError>(nz == 3, "ternary tensor: block without exactly 3 non-zeros");
        }
    }
  }

  /// Equality on the represented values: dims, codes, scales, granularity.
  friend bool same_representation(const TernaryTensor &a, const TernaryTensor &b) {
    return a.rows == b.rows && a.cols == b.cols && a.codes == b.codes &&
           a.scales == b.scales && a.granularity == b.granularity;
  }
};

namespace detail {

inline std::size_t scope_population(const Granularity &g, std::size_t d_in, std::size_t d_out) {
  switch (g.kind) {
  case GranularityKind::per_tensor:
    return d_in * d_out;
  case GranularityKind::per_channel:
    return d_in;
  case GranularityKind::per_group:
    return g.group_size;
  }
  return 0;
}

/// Per-scope sum of f(i, j). Each column segment is reduced sequentially;
/// per_tensor then adds the column totals in column order.
template <class F>
std::vector<double> scope_sums(std::size_t d_in, std::size_t d_out, const Granularity &g, F f) {
  std::vector<double> sums(g.scale_count(d_in, d_out), 0.0);
  const std::size_t seg_len = g.segment_length(d_in);
  const std::size_t segs = g.segments_per_column(d_in);
  for (std::size_t j = 0; j < d_out; ++j)
    for (std::size_t s = 0; s < segs; ++s) {
      double acc = 0.0;
      for (std::size_t i = s * seg_len; i < (s + 1) * seg_len; ++i)
        acc += f(i, j);
      sums[g.scope_index(j, s, d_in)] += acc;
    }
  return sums;
}

template <class T>
void check_quant_input(const Matrix<T> &w, const Granularity &g) {
  require<ConstraintError>(!w.empty(), "quantize: empty weight matrix");
  require_finite(w, "quantize");
  g.validate(w.rows());
}

inline TernaryTensor make_tensor(std::size_t rows, std::size_t cols, QuantScheme scheme,
                                 const Granularity &g) {
  TernaryTensor t;
  t.rows = rows;
  t.cols = cols;
  t.codes.assign(rows * cols, 0);
  t.scheme = scheme;
  t.granularity = g;
  return t;
}

inline std::int8_t sign_code(double v) noexcept { return v < 0.0 ? -1 : 1; }

inline std::int8_t threshold_code(double v, double delta) noexcept {
  if (v > delta)
    return 1;
  if (v < -delta)
    return -1;
  return 0;
}

} // namespace detail

template <class T>
TernaryTensor absmean_quantize(const Matrix<T> &w, const Granularity &g) {
  detail::check_quant_input(w, g);
  const std::size_t d_in = w.rows(), d_out = w.cols();
  const double n = static_cast<double>(detail::scope_population(g, d_in, d_out));
  auto abs_sums = detail::scope_sums(d_in, d_out, g, [&](std::size_t i, std::size_t j) {
    return std::abs(static_cast<double>(w(i, j)));
  });

  auto t = detail::make_tensor(d_in, d_out, QuantScheme::absmean, g);
  std::vector<double> delta(abs_sums.size());
  t.scales.resize(abs_sums.size());
  t.thresholds.resize(abs_sums.size());
  for (std::size_t s = 0; s < abs_sums.size(); ++s) {
    const double alpha = abs_sums[s] / n;
    delta[s] = alpha / 2.0;
    t.scales[s] = static_cast<float>(alpha);
    t.thresholds[s] = static_cast<float>(delta[s]);
  }
  for (std::size_t i = 0; i < d_in; ++i)
    for (std::size_t j = 0; j < d_out; ++j)
      t.codes[i * d_out + j] = detail::threshold_code(w(i, j), delta[t.scope_of(i, j)]);
  return t;
}

template <class T>
TernaryTensor twn_quantize(const Matrix<T> &w, const Granularity &g) {
  detail::check_quant_input(w, g);
  const std::size_t d_in = w.rows(), d_out = w.cols();
  const double n = static_cast<double>(detail::scope_population(g, d_in, d_out));
  auto t = detail::make_tensor(d_in, d_out, QuantScheme::twn, g);

  auto abs_sums = detail::scope_sums(d_in, d_out, g, [&](std::size_t i, std::size_t j) {
    return std::abs(static_cast<double>(w(i, j)));
  });
  std::vector<double> delta(abs_sums.size());
  for (std::size_t s = 0; s < delta.size(); ++s)
    delta[s] = 0.7 * (abs_sums[s] / n);

  auto above = [&](std::size_t i, std::size_t j) {
    return std::abs(static_cast<double>(w(i, j))) > delta[t.scope_of(i, j)];
  };
  auto kept_sums = detail::scope_sums(d_in, d_out, g, [&](std::size_t i, std::size_t j) {
    return above(i, j) ? std::abs(static_cast<double>(w(i, j))) : 0.0;
  });
  auto kept_counts = detail::scope_sums(d_in, d_out, g, [&](std::size_t i, std::size_t j) {
    return above(i, j) ? 1.0 : 0.0;
  });

  t.scales.resize(delta.size());
  t.thresholds.resize(delta.size());
  for (std::size_t s = 0; s < delta.size(); ++s) {
    // empty super-threshold set -> alpha = 0
    t.scales[s] = kept_counts[s] > 0.0 ? static_cast<float>(kept_sums[s] / kept_counts[s]) : 0.0f;
    t.thresholds[s] = static_cast<float>(delta[s]);
  }
  for (std::size_t i = 0; i < d_in; ++i)
    for (std::size_t j = 0; j < d_out; ++j)
      t.codes[i * d_out + j] = detail::threshold_code(w(i, j), delta[t.scope_of(i, j)]);
  return t;
}

/// Index (0..3) of the smallest-magnitude entry of a 4-block; lowest index
/// wins ties.
inline std::size_t block_argmin(std::span<const double, 4> block) noexcept {
  std::size_t best = 0;
  for (std::size_t k = 1; k < 4; ++k)
    if (std::abs(block[k]) < std::abs(block[best]))
      best = k;
  return best;
}

template <class T>
TernaryTensor sparse34_quantize(const Matrix<T> &w, const Granularity &g) {
  detail::require<ConstraintError>(w.rows() % 4 == 0,
                                   "sparse34: d_in " + std::to_string(w.rows()) +
                                       " not divisible by 4");
  detail::check_quant_input(w, g);
  const std::size_t d_in = w.rows(), d_out = w.cols();
  auto t = detail::make_tensor(d_in, d_out, QuantScheme::sparse34, g);

  for (std::size_t j = 0; j < d_out; ++j)
    for (std::size_t b = 0; b < d_in; b += 4) {
      std::array<double, 4> block;
      for (std::size_t k = 0; k < 4; ++k)
        block[k] = static_cast<double>(w(b + k, j));
      const std::size_t zero = block_argmin(block);
      for (std::size_t k = 0; k < 4; ++k)
        t.codes[(b + k) * d_out + j] = k == zero ? 0 : detail::sign_code(block[k]);
    }

  const double n = static_cast<double>(detail::scope_population(g, d_in, d_out));
  auto kept_sums = detail::scope_sums(d_in, d_out, g, [&](std::size_t i, std::size_t j) {
    return t.code(i, j) != 0 ? std::abs(static_cast<double>(w(i, j))) : 0.0;
  });
  t.scales.resize(kept_sums.size());
  for (std::size_t s = 0; s < kept_sums.size(); ++s)
    t.scales[s] = static_cast<float>(kept_sums[s] * 4.0 / (3.0 * n));
  return t;
}

template <class T>
TernaryTensor binary_quantize(const Matrix<T> &w, const Granularity &g) {
  detail::check_quant_input(w, g);
  const std::size_t d_in = w.rows(), d_out = w.cols();
  const double n = static_cast<double>(detail::scope_population(g, d_in, d_out));
  auto t = detail::make_tensor(d_in, d_out, QuantScheme::binary, g);
  auto abs_sums = detail::scope_sums(d_in, d_out, g, [&](std::size_t i, std::size_t j) {
    return std::abs(static_cast<double>(w(i, j)));
  });
  t.scales.resize(abs_sums.size());
  for (std::size_t s = 0; s < abs_sums.size(); ++s)
    t.scales[s] = static_cast<float>(abs_sums[s] / n);
  for (std::size_t i = 0; i < d_in; ++i)
    for (std::size_t j = 0; j < d_out; ++j)
      t.codes[i * d_out + j] = detail::sign_code(w(i, j));
  return t;
}

template <class T>
TernaryTensor quantize(const Matrix<T> &w, QuantScheme scheme, const Granularity &g) {
  switch (scheme) {
  case QuantScheme::absmean:
    return absmean_quantize(w, g);
  case QuantScheme::twn:
    return twn_quantize(w, g);
  case QuantScheme::sparse34:
    return sparse34_quantize(w, g);
  case QuantScheme::binary:
    return binary_quantize(w, g);
  case QuantScheme::unspecified:
    break;
  }
  throw ConstraintError("quantize: scheme has no quantizer");
}

/// T * alpha with each code scaled by its scope's alpha.
template <class T = float>
Matrix<T> dequantize(const TernaryTensor &t) {
  t.validate();
  Matrix<T> out(t.rows, t.cols);
  for (std::size_t i = 0; i < t.rows; ++i)
    for (std::size_t j = 0; j < t.cols; ++j)
      out(i, j) = static_cast<T>(t.code(i, j)) * static_cast<T>(t.scale_for(i, j));
  return out;
}

/// Sum over columns of || W[:, j] - T[:, j] alpha ||^2.
template <class T>
double reconstruction_error(const Matrix<T> &w, const TernaryTensor &t) {
  detail::require<ConstraintError>(w.rows() == t.rows && w.cols() == t.cols,
                                   "reconstruction_error: shape mismatch");
  t.validate();
  double err = 0.0;
  for (std::size_t j = 0; j < t.cols; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < t.rows; ++i) {
      const double r = static_cast<double>(w(i, j)) -
                       static_cast<double>(t.code(i, j)) * static_cast<double>(t.scale_for(i, j));
      col += r * r;
    }
    err += col;
  }
  return err;
}

struct OracleResult {
  double min_error = std::numeric_limits<double>::infinity();
  std::vector<std::int8_t> codes;
  /// One optimal alpha per scope segment of the column (a single entry for
  /// per_tensor / per_channel).
  std::vector<double> alphas;
};

/// Exhaustive search over every 3:4 code assignment of a single column
/// (at most three blocks, 32^3 candidates). For each candidate the per-scope
/// alpha is the closed-form least-squares value sum(W T) / sum(T^2), clamped
/// at zero. Enumeration visits zero positions in ascending order and
/// positive signs first, so the first minimum found is kept.
inline OracleResult sparse34_oracle(std::span<const double> column, const Granularity &g) {
  const std::size_t n = column.size();
  detail::require<ConstraintError>(n > 0 && n % 4 == 0, "oracle: length must be a positive multiple of 4");
  detail::require<ConstraintError>(n <= 12, "oracle: length must be at most 12");
  detail::require<ConstraintError>(all_finite(column), "oracle: non-finite value");
  g.validate(n);

  const std::size_t blocks = n / 4;
  const std::size_t seg_len = g.segment_length(n);
  const std::size_t segs = g.segments_per_column(n);
  std::size_t combos = 1;
  for (std::size_t b = 0; b < blocks; ++b)
    combos *= 32;

  OracleResult best;
  std::vector<std::int8_t> codes(n);
  std::vector<double> alphas(segs);
  for (std::size_t combo = 0; combo < combos; ++combo) {
    std::size_t rest = combo;
    // most significant digit = first block, so block 0 varies slowest
    std::size_t radix = combos / 32;
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t pattern = rest / radix;
      rest %= radix;
      radix = radix > 1 ? radix / 32 : 1;
      const std::size_t zero = pattern / 8;
      std::size_t sign_bits = pattern % 8;
      for (std::size_t k = 0; k < 4; ++k) {
        if (k == zero) {
          codes[b * 4 + k] = 0;
          continue;
        }
        codes[b * 4 + k] = (sign_bits & 1u) ? -1 : 1;
        sign_bits >>= 1;
      }
    }
    double err = 0.0;
    for (std::size_t s = 0; s < segs; ++s) {
      double corr = 0.0, norm = 0.0;
      for (std::size_t i = s * seg_len; i < (s + 1) * seg_len; ++i) {
        corr += column[i] * codes[i];
        norm += static_cast<double>(codes[i] * codes[i]);
      }
      const double alpha = std::max(corr / norm, 0.0);
      alphas[s] = alpha;
      for (std::size_t i = s * seg_len; i < (s + 1) * seg_len; ++i) {
        const double r = column[i] - codes[i] * alpha;
        err += r * r;
      }
    }
    if (err < best.min_error) {
      best.min_error = err;
      best.codes = codes;
      best.alphas = alphas;
    }
  }
  return best;
}

} // namespace sherry

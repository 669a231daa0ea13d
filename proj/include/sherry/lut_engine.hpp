// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Multiplication-free matrix-vector products over packed ternary tensors.
 *
 * For sherry125, every 4-long activation segment x[4b..4b+3] is expanded
 * once into a 16-entry table whose entry i is the signed sum of the three
 * activations selected by index i under a positive lead sign. Each output
 * channel then accumulates +/- table[index] per block; the only
 * multiplications are the per-scope alpha applications.
 *
 * Accumulation order is fixed: segments ascending within a scope segment,
 * scope segments ascending within a column. ref_matvec() follows the same
 * order with explicit T * x products, so both paths agree bit-for-bit.
 */

#include "sherry/bitpack.hpp"
#include "sherry/error.hpp"
#include "sherry/matrix.hpp"
#include "sherry/parallel.hpp"
#include "sherry/quant.hpp"

#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace sherry {

enum class Precision : std::uint8_t { single, dual };

inline Precision parse_precision(const std::string &name) {
  if (name == "single" || name == "float" || name == "f32")
    return Precision::single;
  if (name == "double" || name == "f64")
    return Precision::dual;
  throw ConstraintError("unknown precision '" + name + "'");
}

struct EngineConfig {
  Precision precision = Precision::single;
  /// Output-channel parallelism. Results do not depend on it.
  std::size_t threads = 1;
};

struct EngineCounters {
  std::size_t lut_lookups = 0;
  std::size_t scale_multiplies = 0;
};

template <class Acc>
struct SegmentLut {
  std::array<Acc, 16> entries{};
};

template <class Acc = float>
SegmentLut<Acc> build_lut(std::span<const float, 4> x) {
  SegmentLut<Acc> lut;
  for (unsigned index = 0; index < 16; ++index) {
    const unsigned zero = index >> 2;
    std::array<Acc, 3> sel{};
    for (unsigned k = 0, n = 0; k < 4; ++k)
      if (k != zero)
        sel[n++] = static_cast<Acc>(x[k]);
    Acc e = sel[0];
    e = (index & 2) ? e - sel[1] : e + sel[1];
    e = (index & 1) ? e - sel[2] : e + sel[2];
    lut.entries[index] = e;
  }
  return lut;
}

namespace detail {

inline void check_engine_input(const PackedTensor &p, std::size_t x_len) {
  p.validate_layout();
  require<ConstraintError>(x_len == p.rows, "matvec: activation length " + std::to_string(x_len) +
                                                " does not match d_in " +
                                                std::to_string(p.rows));
}

inline void merge_counters(EngineCounters *counters, std::span<const EngineCounters> per_col) {
  if (!counters)
    return;
  for (const auto &c : per_col) {
    counters->lut_lookups += c.lut_lookups;
    counters->scale_multiplies += c.scale_multiplies;
  }
}

/// A run of consecutive weights inside one LUT segment and one scope segment.
struct SegmentPart {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t unit = 0;    // segment index (code unit / block / pair)
  std::size_t scope = 0;   // scope segment within the column
};

/// Aligned width-w segments of [0, d_in), cut at scope-segment boundaries.
inline std::vector<SegmentPart> segment_parts(std::size_t d_in, std::size_t width,
                                              const Granularity &g) {
  std::vector<SegmentPart> parts;
  const std::size_t seg_len = g.segment_length(d_in);
  for (std::size_t i = 0; i < d_in;) {
    const std::size_t scope = i / seg_len;
    const std::size_t end = std::min({(i / width + 1) * width, (scope + 1) * seg_len, d_in});
    parts.push_back({i, end, i / width, scope});
    i = end;
  }
  return parts;
}

} // namespace detail

/// LUT matrix-vector product for sherry125 tensors.
template <class Acc = float>
std::vector<Acc> lut_matvec(const PackedTensor &p, std::span<const float> x,
                            const EngineConfig &cfg = {}, EngineCounters *counters = nullptr) {
  detail::require<ConstraintError>(p.scheme == PackScheme::sherry125,
                                   "lut_matvec: expected a sherry125 tensor, got " +
                                       to_string(p.scheme));
  detail::check_engine_input(p, x.size());

  const std::size_t blocks = p.rows / 4;
  std::vector<SegmentLut<Acc>> luts(blocks);
  for (std::size_t b = 0; b < blocks; ++b)
    luts[b] = build_lut<Acc>(std::span<const float, 4>(x.data() + 4 * b, 4));

  const auto l = p.layout();
  const std::size_t segs = p.granularity.segments_per_column(p.rows);
  const std::size_t blocks_per_seg = blocks / segs;
  std::vector<Acc> y(p.cols);
  std::vector<EngineCounters> per_col(counters ? p.cols : 0);

  parallel_for(p.cols, cfg.threads, [&](std::size_t j) {
    const std::uint8_t *idx = p.index_plane.data() + j * l.index_bytes_per_col;
    const std::uint8_t *sgn = p.sign_plane.data() + j * l.sign_bytes_per_col;
    Acc out{0};
    std::size_t muls = 0;
    for (std::size_t s = 0; s < segs; ++s) {
      Acc acc{0};
      for (std::size_t b = s * blocks_per_seg; b < (s + 1) * blocks_per_seg; ++b) {
        const Acc e = luts[b].entries[(idx[b / 2] >> (4 * (b & 1))) & 0xF];
        acc += ((sgn[b / 8] >> (b & 7)) & 1u) ? -e : e;
      }
      out += static_cast<Acc>(p.scales[p.granularity.scope_index(j, s, p.rows)]) * acc;
      ++muls;
    }
    y[j] = out;
    if (counters)
      per_col[j] = {blocks, muls};
  });
  detail::merge_counters(counters, per_col);
  return y;
}

/// dense2bit: one 16-entry table per activation pair, indexed by the
/// pair's 4-bit field.
template <class Acc = float>
std::vector<Acc> dense2bit_lut_matvec(const PackedTensor &p, std::span<const float> x,
                                      const EngineConfig &cfg = {},
                                      EngineCounters *counters = nullptr) {
  detail::require<ConstraintError>(p.scheme == PackScheme::dense2bit,
                                   "dense2bit_lut_matvec: scheme mismatch");
  detail::check_engine_input(p, x.size());

  const std::size_t pairs = (p.rows + 1) / 2;
  std::vector<SegmentLut<Acc>> luts(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    const Acc x0 = static_cast<Acc>(x[2 * k]);
    const bool has_hi = 2 * k + 1 < p.rows;
    const Acc x1 = has_hi ? static_cast<Acc>(x[2 * k + 1]) : Acc{0};
    for (unsigned n = 0; n < 16; ++n) {
      Acc e{0};
      const unsigned lo = n & 3u, hi = n >> 2;
      if (lo == 0b01)
        e = e + x0;
      else if (lo == 0b11)
        e = e - x0;
      if (hi == 0b01)
        e = e + x1;
      else if (hi == 0b11)
        e = e - x1;
      luts[k].entries[n] = e;
    }
  }

  const auto l = p.layout();
  const auto parts = detail::segment_parts(p.rows, 2, p.granularity);
  std::vector<Acc> y(p.cols);
  std::vector<EngineCounters> per_col(counters ? p.cols : 0);
  parallel_for(p.cols, cfg.threads, [&](std::size_t j) {
    const std::uint8_t *col = p.payload.data() + j * l.payload_bytes_per_col;
    Acc out{0}, acc{0};
    std::size_t muls = 0;
    for (std::size_t n = 0; n < parts.size(); ++n) {
      const std::size_t k = parts[n].unit;
      acc += luts[k].entries[(col[k / 2] >> (4 * (k & 1))) & 0xF];
      if (n + 1 == parts.size() || parts[n + 1].scope != parts[n].scope) {
        out += static_cast<Acc>(p.scales[p.granularity.scope_index(j, parts[n].scope, p.rows)]) *
               acc;
        acc = Acc{0};
        ++muls;
      }
    }
    y[j] = out;
    if (counters)
      per_col[j] = {parts.size(), muls};
  });
  detail::merge_counters(counters, per_col);
  return y;
}

/// tl2ref: one 27-entry table per 3-long activation segment (two tables
/// when a segment straddles a scope boundary), with unaligned 5-bit code
/// extraction from the bitstream.
template <class Acc = float>
std::vector<Acc> tl2ref_lut_matvec(const PackedTensor &p, std::span<const float> x,
                                   const EngineConfig &cfg = {},
                                   EngineCounters *counters = nullptr) {
  detail::require<ConstraintError>(p.scheme == PackScheme::tl2ref,
                                   "tl2ref_lut_matvec: scheme mismatch");
  detail::check_engine_input(p, x.size());

  const auto parts = detail::segment_parts(p.rows, 3, p.granularity);
  std::vector<std::array<Acc, 27>> luts(parts.size());
  for (std::size_t n = 0; n < parts.size(); ++n) {
    const auto &part = parts[n];
    for (std::uint8_t c = 0; c < 27; ++c) {
      const auto w = tl2_decode_unit(c);
      Acc e{0};
      for (std::size_t i = part.begin; i < part.end; ++i) {
        const auto t = w[i - 3 * part.unit];
        if (t > 0)
          e = e + static_cast<Acc>(x[i]);
        else if (t < 0)
          e = e - static_cast<Acc>(x[i]);
      }
      luts[n][c] = e;
    }
  }

  const auto l = p.layout();
  std::vector<Acc> y(p.cols);
  std::vector<EngineCounters> per_col(counters ? p.cols : 0);
  parallel_for(p.cols, cfg.threads, [&](std::size_t j) {
    std::span<const std::uint8_t> col{p.payload.data() + j * l.payload_bytes_per_col,
                                      l.payload_bytes_per_col};
    Acc out{0}, acc{0};
    std::size_t muls = 0;
    for (std::size_t n = 0; n < parts.size(); ++n) {
      const unsigned c = detail::get_bits(col, 5 * parts[n].unit, 5);
      // code units above 26 are rejected at load time; clamp keeps the read in bounds
      acc += luts[n][c <= 26 ? c : 0];
      if (n + 1 == parts.size() || parts[n + 1].scope != parts[n].scope) {
        out += static_cast<Acc>(p.scales[p.granularity.scope_index(j, parts[n].scope, p.rows)]) *
               acc;
        acc = Acc{0};
        ++muls;
      }
    }
    y[j] = out;
    if (counters)
      per_col[j] = {parts.size(), muls};
  });
  detail::merge_counters(counters, per_col);
  return y;
}

/// LUT product for any packed scheme.
template <class Acc = float>
std::vector<Acc> packed_matvec(const PackedTensor &p, std::span<const float> x,
                               const EngineConfig &cfg = {}, EngineCounters *counters = nullptr) {
  switch (p.scheme) {
  case PackScheme::sherry125:
    return lut_matvec<Acc>(p, x, cfg, counters);
  case PackScheme::dense2bit:
    return dense2bit_lut_matvec<Acc>(p, x, cfg, counters);
  case PackScheme::tl2ref:
    return tl2ref_lut_matvec<Acc>(p, x, cfg, counters);
  }
  throw ConstraintError("packed_matvec: unknown scheme");
}

/// Segment width whose summation order the reference uses to mirror the
/// LUT path of a packing scheme.
constexpr std::size_t reference_segment_width(PackScheme s) noexcept {
  switch (s) {
  case PackScheme::sherry125:
    return 4;
  case PackScheme::dense2bit:
    return 2;
  case PackScheme::tl2ref:
    return 3;
  }
  return 4;
}

/// Y = X T alpha for one activation vector, with explicit products.
/// Summation: each width-`segment_width` segment (cut at scope boundaries)
/// is summed from zero, added to its scope accumulator, and each scope
/// accumulator is scaled by alpha and added to the output.
template <class Acc = float>
std::vector<Acc> ref_matvec(const TernaryTensor &t, std::span<const float> x,
                            std::size_t segment_width = 4) {
  t.validate();
  detail::require<ConstraintError>(x.size() == t.rows, "ref_matvec: activation length mismatch");
  detail::require<ConstraintError>(segment_width > 0, "ref_matvec: segment width must be positive");
  const auto parts = detail::segment_parts(t.rows, segment_width, t.granularity);
  std::vector<Acc> y(t.cols);
  for (std::size_t j = 0; j < t.cols; ++j) {
    Acc out{0}, acc{0};
    for (std::size_t n = 0; n < parts.size(); ++n) {
      Acc seg{0};
      for (std::size_t i = parts[n].begin; i < parts[n].end; ++i)
        seg += static_cast<Acc>(t.code(i, j)) * static_cast<Acc>(x[i]);
      acc += seg;
      if (n + 1 == parts.size() || parts[n + 1].scope != parts[n].scope) {
        out += static_cast<Acc>(t.scales[t.granularity.scope_index(j, parts[n].scope, t.rows)]) *
               acc;
        acc = Acc{0};
      }
    }
    y[j] = out;
  }
  return y;
}

/// Plain dense product y_j = sum_i W_ij x_i.
template <class Acc = float, class T>
std::vector<Acc> ref_matvec(const Matrix<T> &w, std::span<const float> x) {
  detail::require<ConstraintError>(x.size() == w.rows(), "ref_matvec: activation length mismatch");
  std::vector<Acc> y(w.cols(), Acc{0});
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j)
      y[j] += static_cast<Acc>(w(i, j)) * static_cast<Acc>(x[i]);
  return y;
}

/// Row-wise packed_matvec over a (tokens x d_in) activation matrix.
template <class Acc = float>
Matrix<Acc> lut_matmul(const PackedTensor &p, const MatrixF &x, const EngineConfig &cfg = {}) {
  detail::require<ConstraintError>(x.cols() == p.rows, "lut_matmul: activation width mismatch");
  Matrix<Acc> out(x.rows(), p.cols);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto y = packed_matvec<Acc>(p, x.row(r), cfg);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

} // namespace sherry

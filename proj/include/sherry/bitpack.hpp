// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Bit-exact packing of ternary tensors.
 *
 * sherry125  One 5-bit code per 4-block with exactly three non-zeros,
 *            split into a sign bit and a 4-bit index:
 *              sign  = 0 if the first non-zero is +1, else 1
 *              index = zero_pos * 4 + rel2 * 2 + rel3
 *            where rel_k = 1 iff the k-th non-zero differs in sign from the
 *            first. Index nibbles go to the index plane (two blocks per byte,
 *            low nibble = even block); sign bits to the sign plane
 *            (LSB-first). Each column's planes start on a byte boundary.
 *
 * dense2bit  2 bits per weight, {-1 -> 0b11, 0 -> 0b00, +1 -> 0b01},
 *            four weights per byte LSB-first, byte-aligned per column.
 *
 * tl2ref     Groups of three weights along d_in become a base-3 code unit
 *            c = sum_k (t_k + 1) * 3^k in [0, 26], stored in 5 bits and
 *            packed LSB-first into a per-column bitstream. A trailing
 *            partial group is completed with zero weights.
 *
 * Blocks are laid out column-major: all of column 0, then column 1, ...
 */

#include "sherry/error.hpp"
#include "sherry/granularity.hpp"
#include "sherry/quant.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sherry {

enum class PackScheme : std::uint8_t { sherry125 = 0, dense2bit = 1, tl2ref = 2 };

inline std::string to_string(PackScheme s) {
  switch (s) {
  case PackScheme::sherry125:
    return "sherry125";
  case PackScheme::dense2bit:
    return "dense2bit";
  case PackScheme::tl2ref:
    return "tl2ref";
  }
  return "?";
}

inline PackScheme parse_pack_scheme(const std::string &name) {
  if (name == "sherry125")
    return PackScheme::sherry125;
  if (name == "dense2bit")
    return PackScheme::dense2bit;
  if (name == "tl2ref")
    return PackScheme::tl2ref;
  throw ConstraintError("unknown packing scheme '" + name + "'");
}

struct BlockCode {
  std::uint8_t sign_bit = 0;
  std::uint8_t index = 0;
  bool operator==(const BlockCode &) const = default;
};

using Block = std::array<std::int8_t, 4>;

inline BlockCode encode_block(std::span<const std::int8_t, 4> codes) {
  int zero_pos = -1;
  for (int k = 0; k < 4; ++k) {
    detail::require<ConstraintError>(codes[k] >= -1 && codes[k] <= 1,
                                     "encode_block: code outside {-1,0,+1}");
    if (codes[k] == 0) {
      detail::require<ConstraintError>(zero_pos < 0, "encode_block: block has fewer than 3 non-zeros");
      zero_pos = k;
    }
  }
  detail::require<ConstraintError>(zero_pos >= 0, "encode_block: block has 4 non-zeros");

  std::array<std::int8_t, 3> nz{};
  for (int k = 0, n = 0; k < 4; ++k)
    if (k != zero_pos)
      nz[n++] = codes[k];
  const std::uint8_t rel2 = nz[1] != nz[0];
  const std::uint8_t rel3 = nz[2] != nz[0];
  return {static_cast<std::uint8_t>(nz[0] < 0),
          static_cast<std::uint8_t>(zero_pos * 4 + rel2 * 2 + rel3)};
}

constexpr Block decode_block_unchecked(std::uint8_t sign_bit, std::uint8_t index) noexcept {
  const int zero_pos = index >> 2;
  const std::int8_t lead = sign_bit ? -1 : 1;
  const std::int8_t second = (index & 2) ? -lead : lead;
  const std::int8_t third = (index & 1) ? -lead : lead;
  const std::array<std::int8_t, 3> nz{lead, second, third};
  Block out{};
  for (int k = 0, n = 0; k < 4; ++k)
    out[k] = k == zero_pos ? 0 : nz[n++];
  return out;
}

inline Block decode_block(std::uint8_t sign_bit, std::uint8_t index) {
  detail::require<FormatError>(index <= 15, "decode_block: index above 15");
  detail::require<FormatError>(sign_bit <= 1, "decode_block: sign bit above 1");
  return decode_block_unchecked(sign_bit, index);
}

/// Base-3 code unit for three ternary weights.
constexpr std::uint8_t tl2_code_unit(std::int8_t t0, std::int8_t t1, std::int8_t t2) noexcept {
  return static_cast<std::uint8_t>((t0 + 1) + (t1 + 1) * 3 + (t2 + 1) * 9);
}

constexpr std::array<std::int8_t, 3> tl2_decode_unit(std::uint8_t c) noexcept {
  return {static_cast<std::int8_t>(c % 3 - 1), static_cast<std::int8_t>(c / 3 % 3 - 1),
          static_cast<std::int8_t>(c / 9 % 3 - 1)};
}

constexpr std::uint8_t dense2bit_field(std::int8_t t) noexcept {
  return t < 0 ? 0b11 : static_cast<std::uint8_t>(t);
}

/// Byte sizes of each plane for one column of a given logical d_in.
struct PlaneLayout {
  std::size_t index_bytes_per_col = 0;
  std::size_t sign_bytes_per_col = 0;
  std::size_t payload_bytes_per_col = 0;

  static PlaneLayout of(PackScheme scheme, std::size_t d_in) {
    PlaneLayout l;
    switch (scheme) {
    case PackScheme::sherry125: {
      const std::size_t blocks = d_in / 4;
      l.index_bytes_per_col = (blocks + 1) / 2;
      l.sign_bytes_per_col = (blocks + 7) / 8;
      break;
    }
    case PackScheme::dense2bit:
      l.payload_bytes_per_col = (d_in + 3) / 4;
      break;
    case PackScheme::tl2ref:
      l.payload_bytes_per_col = (tl2_groups(d_in) * 5 + 7) / 8;
      break;
    }
    return l;
  }

  static std::size_t tl2_groups(std::size_t d_in) noexcept { return (d_in + 2) / 3; }
};

struct PackedTensor {
  std::size_t rows = 0; // logical d_in
  std::size_t cols = 0; // d_out
  PackScheme scheme = PackScheme::sherry125;
  Granularity granularity;
  std::vector<float> scales;
  std::vector<std::uint8_t> index_plane;
  std::vector<std::uint8_t> sign_plane;
  std::vector<std::uint8_t> payload;

  /// d_in after completing the final tl2ref group; equals rows otherwise.
  std::size_t padded_rows() const noexcept {
    return scheme == PackScheme::tl2ref ? PlaneLayout::tl2_groups(rows) * 3 : rows;
  }
  PlaneLayout layout() const { return PlaneLayout::of(scheme, rows); }
  std::size_t payload_bytes() const noexcept {
    return index_plane.size() + sign_plane.size() + payload.size();
  }

  bool operator==(const PackedTensor &) const = default;

  /// Structural checks that do not decode the payload.
  void validate_layout() const {
    using detail::require;
    require<FormatError>(rows > 0 && cols > 0, "packed tensor: empty shape");
    granularity.validate(rows);
    if (scheme == PackScheme::sherry125)
      require<ConstraintError>(rows % 4 == 0, "packed tensor: sherry125 requires d_in % 4 == 0");
    require<FormatError>(scales.size() == granularity.scale_count(rows, cols),
                         "packed tensor: scale count mismatch");
    const auto l = layout();
    require<FormatError>(index_plane.size() == l.index_bytes_per_col * cols,
                         "packed tensor: index plane length mismatch");
    require<FormatError>(sign_plane.size() == l.sign_bytes_per_col * cols,
                         "packed tensor: sign plane length mismatch");
    require<FormatError>(payload.size() == l.payload_bytes_per_col * cols,
                         "packed tensor: payload length mismatch");
    for (float a : scales)
      require<FormatError>(std::isfinite(a) && a >= 0.0f, "packed tensor: invalid scale");
  }
};

namespace detail {

inline void put_bits(std::span<std::uint8_t> stream, std::size_t bit_offset, unsigned value,
                     unsigned width) noexcept {
  for (unsigned b = 0; b < width; ++b, ++bit_offset)
    if (value >> b & 1u)
      stream[bit_offset / 8] |= static_cast<std::uint8_t>(1u << (bit_offset % 8));
}

/// Unaligned LSB-first extraction of up to 8 bits.
inline unsigned get_bits(std::span<const std::uint8_t> stream, std::size_t bit_offset,
                         unsigned width) noexcept {
  const std::size_t byte = bit_offset / 8;
  unsigned window = stream[byte];
  if (byte + 1 < stream.size())
    window |= static_cast<unsigned>(stream[byte + 1]) << 8;
  return (window >> (bit_offset % 8)) & ((1u << width) - 1u);
}

} // namespace detail

inline PackedTensor pack(const TernaryTensor &t, PackScheme scheme) {
  t.validate();
  PackedTensor p;
  p.rows = t.rows;
  p.cols = t.cols;
  p.scheme = scheme;
  p.granularity = t.granularity;
  p.scales = t.scales;
  const std::size_t d_in = t.rows;
  const auto l = PlaneLayout::of(scheme, d_in);
  p.index_plane.assign(l.index_bytes_per_col * t.cols, 0);
  p.sign_plane.assign(l.sign_bytes_per_col * t.cols, 0);
  p.payload.assign(l.payload_bytes_per_col * t.cols, 0);

  switch (scheme) {
  case PackScheme::sherry125: {
    detail::require<ConstraintError>(d_in % 4 == 0, "pack sherry125: d_in not divisible by 4");
    for (std::size_t j = 0; j < t.cols; ++j) {
      std::uint8_t *idx = p.index_plane.data() + j * l.index_bytes_per_col;
      std::uint8_t *sgn = p.sign_plane.data() + j * l.sign_bytes_per_col;
      for (std::size_t b = 0; b < d_in / 4; ++b) {
        const Block block{t.code(4 * b, j), t.code(4 * b + 1, j), t.code(4 * b + 2, j),
                          t.code(4 * b + 3, j)};
        const auto code = encode_block(block);
        idx[b / 2] |= static_cast<std::uint8_t>(code.index << (4 * (b % 2)));
        sgn[b / 8] |= static_cast<std::uint8_t>(code.sign_bit << (b % 8));
      }
    }
    break;
  }
  case PackScheme::dense2bit:
    for (std::size_t j = 0; j < t.cols; ++j) {
      std::uint8_t *col = p.payload.data() + j * l.payload_bytes_per_col;
      for (std::size_t i = 0; i < d_in; ++i)
        col[i / 4] |= static_cast<std::uint8_t>(dense2bit_field(t.code(i, j)) << (2 * (i % 4)));
    }
    break;
  case PackScheme::tl2ref: {
    const std::size_t groups = PlaneLayout::tl2_groups(d_in);
    for (std::size_t j = 0; j < t.cols; ++j) {
      std::span<std::uint8_t> col{p.payload.data() + j * l.payload_bytes_per_col,
                                  l.payload_bytes_per_col};
      for (std::size_t g = 0; g < groups; ++g) {
        std::array<std::int8_t, 3> w{};
        for (std::size_t k = 0; k < 3; ++k)
          w[k] = 3 * g + k < d_in ? t.code(3 * g + k, j) : 0;
        detail::put_bits(col, 5 * g, tl2_code_unit(w[0], w[1], w[2]), 5);
      }
    }
    break;
  }
  }
  return p;
}

inline TernaryTensor unpack(const PackedTensor &p) {
  p.validate_layout();
  TernaryTensor t;
  t.rows = p.rows;
  t.cols = p.cols;
  t.codes.assign(p.rows * p.cols, 0);
  t.scales = p.scales;
  t.granularity = p.granularity;
  t.scheme = p.scheme == PackScheme::sherry125 ? QuantScheme::sparse34 : QuantScheme::unspecified;
  const std::size_t d_in = p.rows;
  const auto l = p.layout();

  switch (p.scheme) {
  case PackScheme::sherry125: {
    const std::size_t blocks = d_in / 4;
    for (std::size_t j = 0; j < p.cols; ++j) {
      const std::uint8_t *idx = p.index_plane.data() + j * l.index_bytes_per_col;
      const std::uint8_t *sgn = p.sign_plane.data() + j * l.sign_bytes_per_col;
      for (std::size_t b = 0; b < blocks; ++b) {
        const auto index = static_cast<std::uint8_t>(idx[b / 2] >> (4 * (b % 2)) & 0xF);
        const auto sign = static_cast<std::uint8_t>(sgn[b / 8] >> (b % 8) & 1u);
        const auto block = decode_block_unchecked(sign, index);
        for (std::size_t k = 0; k < 4; ++k)
          t.codes[(4 * b + k) * p.cols + j] = block[k];
      }
      if (blocks % 2)
        detail::require<FormatError>((idx[blocks / 2] >> 4) == 0,
                                     "unpack sherry125: non-zero index padding");
      if (blocks % 8)
        detail::require<FormatError>((sgn[blocks / 8] >> (blocks % 8)) == 0,
                                     "unpack sherry125: non-zero sign padding");
    }
    break;
  }
  case PackScheme::dense2bit:
    for (std::size_t j = 0; j < p.cols; ++j) {
      const std::uint8_t *col = p.payload.data() + j * l.payload_bytes_per_col;
      for (std::size_t i = 0; i < l.payload_bytes_per_col * 4; ++i) {
        const unsigned field = col[i / 4] >> (2 * (i % 4)) & 0b11u;
        detail::require<FormatError>(field != 0b10, "unpack dense2bit: invalid 2-bit field");
        if (i >= d_in) {
          detail::require<FormatError>(field == 0, "unpack dense2bit: non-zero padding");
          continue;
        }
        t.codes[i * p.cols + j] = field == 0b11 ? -1 : static_cast<std::int8_t>(field);
      }
    }
    break;
  case PackScheme::tl2ref: {
    const std::size_t groups = PlaneLayout::tl2_groups(d_in);
    for (std::size_t j = 0; j < p.cols; ++j) {
      std::span<const std::uint8_t> col{p.payload.data() + j * l.payload_bytes_per_col,
                                        l.payload_bytes_per_col};
      for (std::size_t g = 0; g < groups; ++g) {
        const auto c = static_cast<std::uint8_t>(detail::get_bits(col, 5 * g, 5));
        detail::require<FormatError>(c <= 26, "unpack tl2ref: code unit above 26");
        const auto w = tl2_decode_unit(c);
        for (std::size_t k = 0; k < 3; ++k) {
          if (3 * g + k < d_in)
            t.codes[(3 * g + k) * p.cols + j] = w[k];
          else
            detail::require<FormatError>(w[k] == 0, "unpack tl2ref: non-zero padding weight");
        }
      }
      const std::size_t used_bits = groups * 5;
      if (used_bits % 8)
        detail::require<FormatError>((col[used_bits / 8] >> (used_bits % 8)) == 0,
                                     "unpack tl2ref: non-zero trailing bits");
    }
    break;
  }
  }
  return t;
}

struct DensityReport {
  PackScheme scheme = PackScheme::sherry125;
  std::size_t weight_count = 0;
  /// Encoded bits: 5 per sherry block, 2 per dense weight, 5 per tl2ref group.
  std::size_t payload_bits = 0;
  /// Bytes actually stored, including per-column alignment padding.
  std::size_t payload_bytes = 0;
  std::size_t scale_bits = 0;
  double bits_per_weight = 0.0;
};

inline DensityReport density(const PackedTensor &p) {
  DensityReport r;
  r.scheme = p.scheme;
  r.weight_count = p.rows * p.cols;
  switch (p.scheme) {
  case PackScheme::sherry125:
    r.payload_bits = 5 * (p.rows / 4) * p.cols;
    break;
  case PackScheme::dense2bit:
    r.payload_bits = 2 * p.rows * p.cols;
    break;
  case PackScheme::tl2ref:
    r.payload_bits = 5 * PlaneLayout::tl2_groups(p.rows) * p.cols;
    break;
  }
  r.payload_bytes = p.payload_bytes();
  r.scale_bits = 32 * p.scales.size();
  r.bits_per_weight = r.weight_count == 0
                          ? 0.0
                          : static_cast<double>(r.payload_bits + r.scale_bits) /
                                static_cast<double>(r.weight_count);
  return r;
}

} // namespace sherry

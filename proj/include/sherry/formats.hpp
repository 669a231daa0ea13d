// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Binary containers. All integers and floats are little-endian.
 *
 * Weight file ("WF32", version 1):
 *   magic[4] version:u32 tensor_count:u32
 *   per tensor: name_len:u32 name[name_len] rows:u32 cols:u32 f32[rows*cols]
 *
 * Packed model file ("SHRY", version 1):
 *   magic[4] version:u32 tensor_count:u32
 *   per tensor:
 *     name_len:u32 name[name_len]
 *     rows:u32            stored d_in (tl2ref: rounded up to a multiple of 3)
 *     cols:u32
 *     logical_d_in:u32    d_in before tl2ref padding
 *     scheme:u8           0 sherry125, 1 dense2bit, 2 tl2ref
 *     granularity:u8      0 tensor, 1 channel, 2 group
 *     group_size:u32
 *     scale_count:u32 f32[scale_count]
 *     index_len:u64 bytes  sign_len:u64 bytes  payload_len:u64 bytes
 *
 * Tensor rows are d_in and columns d_out.
 */

#include "sherry/bitpack.hpp"
#include "sherry/error.hpp"
#include "sherry/matrix.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

namespace sherry {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedMatrix {
  std::string name;
  MatrixF values;
  bool operator==(const NamedMatrix &) const = default;
};

struct WeightFile {
  std::vector<NamedMatrix> tensors;
  bool operator==(const WeightFile &) const = default;
};

struct NamedPackedTensor {
  std::string name;
  PackedTensor tensor;
  bool operator==(const NamedPackedTensor &) const = default;
};

struct PackedModel {
  std::vector<NamedPackedTensor> tensors;
  bool operator==(const PackedModel &) const = default;

  const NamedPackedTensor &find(const std::string &name) const {
    for (const auto &t : tensors)
      if (t.name == name)
        return t;
    throw ConstraintError("packed model: no tensor named '" + name + "'");
  }
};

namespace detail {

class ByteWriter {
public:
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void magic(const char (&m)[5]) { out_.insert(out_.end(), m, m + 4); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k)
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k)
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string &s) {
    u32(checked_u32(s.size(), "name length"));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void blob(std::span<const std::uint8_t> b) {
    u64(b.size());
    bytes(b);
  }

  static std::uint32_t checked_u32(std::size_t v, const char *what) {
    require<ConstraintError>(v <= std::numeric_limits<std::uint32_t>::max(),
                             std::string(what) + " exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  void expect_magic(const char (&m)[5], const std::string &what) {
    need(4, what + " magic");
    require<FormatError>(std::memcmp(in_.data() + pos_, m, 4) == 0, what + ": bad magic");
    pos_ += 4;
  }
  std::uint8_t u8(const char *what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char *what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k)
      v |= static_cast<std::uint32_t>(in_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char *what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k)
      v |= static_cast<std::uint64_t>(in_[pos_ + k]) << (8 * k);
    pos_ += 8;
    return v;
  }
  float f32(const char *what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char *what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char *>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<std::uint8_t> blob(const char *what) {
    const std::uint64_t n = u64(what);
    need(n, what);
    std::vector<std::uint8_t> b(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += static_cast<std::size_t>(n);
    return b;
  }
  bool at_end() const noexcept { return pos_ == in_.size(); }

private:
  void need(std::uint64_t n, const std::string &what) const {
    require<FormatError>(n <= in_.size() - pos_, "truncated input reading " + what);
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad())
    throw IoError("error reading '" + path.string() + "'");
  return bytes;
}

/// Writes to a sibling temporary file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("error writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
  }
}

inline void write_file_atomic(const std::filesystem::path &path, const std::string &text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

inline std::vector<std::uint8_t> encode_weight_file(const WeightFile &wf) {
  detail::ByteWriter w;
  w.magic("WF32");
  w.u32(kFormatVersion);
  w.u32(detail::ByteWriter::checked_u32(wf.tensors.size(), "tensor count"));
  for (const auto &t : wf.tensors) {
    w.str(t.name);
    w.u32(detail::ByteWriter::checked_u32(t.values.rows(), "rows"));
    w.u32(detail::ByteWriter::checked_u32(t.values.cols(), "cols"));
    for (float v : t.values.values())
      w.f32(v);
  }
  return w.take();
}

inline WeightFile decode_weight_file(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("WF32", "weight file");
  const auto version = r.u32("version");
  detail::require<FormatError>(version == kFormatVersion,
                               "weight file: unsupported version " + std::to_string(version));
  const auto count = r.u32("tensor count");
  WeightFile wf;
  for (std::uint32_t n = 0; n < count; ++n) {
    NamedMatrix t;
    t.name = r.str("tensor name");
    const std::size_t rows = r.u32("rows"), cols = r.u32("cols");
    std::vector<float> values;
    values.reserve(std::min<std::size_t>(rows * cols, bytes.size() / 4));
    for (std::size_t k = 0; k < rows * cols; ++k)
      values.push_back(r.f32("tensor values"));
    t.values = MatrixF(rows, cols, std::move(values));
    wf.tensors.push_back(std::move(t));
  }
  detail::require<FormatError>(r.at_end(), "weight file: trailing bytes");
  return wf;
}

inline std::vector<std::uint8_t> encode_packed_model(const PackedModel &m) {
  detail::ByteWriter w;
  w.magic("SHRY");
  w.u32(kFormatVersion);
  w.u32(detail::ByteWriter::checked_u32(m.tensors.size(), "tensor count"));
  for (const auto &[name, p] : m.tensors) {
    p.validate_layout();
    w.str(name);
    w.u32(detail::ByteWriter::checked_u32(p.padded_rows(), "rows"));
    w.u32(detail::ByteWriter::checked_u32(p.cols, "cols"));
    w.u32(detail::ByteWriter::checked_u32(p.rows, "logical d_in"));
    w.u8(static_cast<std::uint8_t>(p.scheme));
    w.u8(static_cast<std::uint8_t>(p.granularity.kind));
    w.u32(detail::ByteWriter::checked_u32(p.granularity.group_size, "group size"));
    w.u32(detail::ByteWriter::checked_u32(p.scales.size(), "scale count"));
    for (float a : p.scales)
      w.f32(a);
    w.blob(p.index_plane);
    w.blob(p.sign_plane);
    w.blob(p.payload);
  }
  return w.take();
}

/// Parses and fully validates a packed model, including every code unit.
inline PackedModel decode_packed_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("SHRY", "packed model");
  const auto version = r.u32("version");
  detail::require<FormatError>(version == kFormatVersion,
                               "packed model: unsupported version " + std::to_string(version));
  const auto count = r.u32("tensor count");
  PackedModel m;
  for (std::uint32_t n = 0; n < count; ++n) {
    NamedPackedTensor nt;
    nt.name = r.str("tensor name");
    auto &p = nt.tensor;
    const std::size_t stored_rows = r.u32("rows");
    p.cols = r.u32("cols");
    p.rows = r.u32("logical d_in");
    const auto scheme = r.u8("scheme");
    detail::require<FormatError>(scheme <= 2, "packed model: unknown scheme code " +
                                                  std::to_string(scheme) + " in '" + nt.name + "'");
    p.scheme = static_cast<PackScheme>(scheme);
    const auto gran = r.u8("granularity");
    detail::require<FormatError>(gran <= 2, "packed model: unknown granularity code " +
                                                std::to_string(gran) + " in '" + nt.name + "'");
    p.granularity.kind = static_cast<GranularityKind>(gran);
    p.granularity.group_size = r.u32("group size");
    const auto scale_count = r.u32("scale count");
    p.scales.reserve(std::min<std::size_t>(scale_count, bytes.size() / 4));
    for (std::uint32_t k = 0; k < scale_count; ++k)
      p.scales.push_back(r.f32("scales"));
    p.index_plane = r.blob("index plane");
    p.sign_plane = r.blob("sign plane");
    p.payload = r.blob("payload");
    detail::require<FormatError>(stored_rows == p.padded_rows(),
                                 "packed model: stored rows inconsistent with logical d_in in '" +
                                     nt.name + "'");
    try {
      (void)unpack(p);
    } catch (const Error &e) {
      throw FormatError("packed model: tensor '" + nt.name + "': " + e.what());
    }
    m.tensors.push_back(std::move(nt));
  }
  detail::require<FormatError>(r.at_end(), "packed model: trailing bytes");
  return m;
}

inline void write_weight_file(const std::filesystem::path &path, const WeightFile &wf) {
  write_file_atomic(path, encode_weight_file(wf));
}
inline WeightFile read_weight_file(const std::filesystem::path &path) {
  return decode_weight_file(read_file_bytes(path));
}
inline void write_packed_model(const std::filesystem::path &path, const PackedModel &m) {
  write_file_atomic(path, encode_packed_model(m));
}
inline PackedModel read_packed_model(const std::filesystem::path &path) {
  return decode_packed_model(read_file_bytes(path));
}

} // namespace sherry

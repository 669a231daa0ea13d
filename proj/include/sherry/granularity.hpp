// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sherry/error.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace sherry {

enum class GranularityKind : std::uint8_t { per_tensor = 0, per_channel = 1, per_group = 2 };

/// Scope over which one scale (and threshold) is shared.
///
/// Scopes partition each column (output channel) into contiguous segments
/// along the input dimension. per_tensor and per_channel have one segment
/// per column; per_group has d_in / group_size. Scale index layout:
///   per_tensor  -> 0
///   per_channel -> column
///   per_group   -> column * (d_in / group_size) + segment
struct Granularity {
  GranularityKind kind = GranularityKind::per_channel;
  std::size_t group_size = 0;

  static constexpr Granularity per_tensor() { return {GranularityKind::per_tensor, 0}; }
  static constexpr Granularity per_channel() { return {GranularityKind::per_channel, 0}; }
  static constexpr Granularity per_group(std::size_t n) { return {GranularityKind::per_group, n}; }

  bool operator==(const Granularity &) const = default;

  void validate(std::size_t d_in) const {
    if (kind != GranularityKind::per_group)
      return;
    detail::require<ConstraintError>(group_size > 0, "granularity: group size must be positive");
    detail::require<ConstraintError>(group_size % 4 == 0,
                                     "granularity: group size must be divisible by 4");
    detail::require<ConstraintError>(d_in % group_size == 0,
                                     "granularity: d_in " + std::to_string(d_in) +
                                         " not divisible by group size " +
                                         std::to_string(group_size));
  }

  std::size_t segments_per_column(std::size_t d_in) const {
    return kind == GranularityKind::per_group ? d_in / group_size : 1;
  }
  std::size_t segment_length(std::size_t d_in) const {
    return kind == GranularityKind::per_group ? group_size : d_in;
  }
  std::size_t scale_count(std::size_t d_in, std::size_t d_out) const {
    switch (kind) {
    case GranularityKind::per_tensor:
      return 1;
    case GranularityKind::per_channel:
      return d_out;
    case GranularityKind::per_group:
      return d_out * (d_in / group_size);
    }
    return 0;
  }
  std::size_t scope_index(std::size_t col, std::size_t segment, std::size_t d_in) const {
    switch (kind) {
    case GranularityKind::per_tensor:
      return 0;
    case GranularityKind::per_channel:
      return col;
    case GranularityKind::per_group:
      return col * (d_in / group_size) + segment;
    }
    return 0;
  }

  std::string to_string() const {
    switch (kind) {
    case GranularityKind::per_tensor:
      return "tensor";
    case GranularityKind::per_channel:
      return "channel";
    case GranularityKind::per_group:
      return "group:" + std::to_string(group_size);
    }
    return "?";
  }
};

} // namespace sherry

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sherry/error.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>

namespace sherry {

enum class ScheduleFamily : std::uint8_t { linear, cosine, exponential, constant_zero, constant_one };

inline std::string to_string(ScheduleFamily f) {
  switch (f) {
  case ScheduleFamily::linear:
    return "linear";
  case ScheduleFamily::cosine:
    return "cosine";
  case ScheduleFamily::exponential:
    return "exponential";
  case ScheduleFamily::constant_zero:
    return "constant_zero";
  case ScheduleFamily::constant_one:
    return "constant_one";
  }
  return "?";
}

inline ScheduleFamily parse_schedule_family(const std::string &name) {
  if (name == "linear")
    return ScheduleFamily::linear;
  if (name == "cosine")
    return ScheduleFamily::cosine;
  if (name == "exponential")
    return ScheduleFamily::exponential;
  if (name == "constant_zero")
    return ScheduleFamily::constant_zero;
  if (name == "constant_one")
    return ScheduleFamily::constant_one;
  throw ConstraintError("unknown schedule '" + name + "'");
}

/// Annealing gate for the residual synapse.
///
/// Without warmup, p = t / total_steps and lambda follows the family's decay
/// curve (1 - p, (1 + cos(pi p)) / 2, exp(-5 p)). With warmup fraction w,
/// the first floor(w * total) steps ramp linearly from 0 to the curve's
/// starting value, then the curve runs over the remaining steps.
struct Schedule {
  ScheduleFamily family = ScheduleFamily::cosine;
  double warmup_fraction = 0.0;
  std::size_t total_steps = 1;

  void validate() const {
    detail::require<ConstraintError>(total_steps > 0, "schedule: total_steps must be positive");
    detail::require<ConstraintError>(warmup_fraction >= 0.0 && warmup_fraction < 1.0,
                                     "schedule: warmup fraction must lie in [0, 1)");
  }

  std::size_t warmup_steps() const noexcept {
    return static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
  }
};

inline double decay_curve(ScheduleFamily f, double progress) {
  switch (f) {
  case ScheduleFamily::linear:
    return 1.0 - progress;
  case ScheduleFamily::cosine:
    return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  case ScheduleFamily::exponential:
    return std::exp(-5.0 * progress);
  case ScheduleFamily::constant_zero:
    return 0.0;
  case ScheduleFamily::constant_one:
    return 1.0;
  }
  return 0.0;
}

inline double lambda_at(const Schedule &s, std::size_t step) {
  s.validate();
  detail::require<ConstraintError>(step <= s.total_steps,
                                   "lambda_at: step " + std::to_string(step) + " beyond total " +
                                       std::to_string(s.total_steps));
  const std::size_t warm = s.warmup_steps();
  if (step < warm)
    return static_cast<double>(step) / static_cast<double>(warm) * decay_curve(s.family, 0.0);
  const double progress =
      static_cast<double>(step - warm) / static_cast<double>(s.total_steps - warm);
  return decay_curve(s.family, progress);
}

} // namespace sherry

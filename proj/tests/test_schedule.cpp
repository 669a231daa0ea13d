// SPDX-License-Identifier: Apache-2.0
#include "sherry/schedule.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sherry;

namespace {

const ScheduleFamily kFamilies[] = {ScheduleFamily::linear, ScheduleFamily::cosine,
                                    ScheduleFamily::exponential, ScheduleFamily::constant_zero,
                                    ScheduleFamily::constant_one};

Schedule make(ScheduleFamily f, double warmup, std::size_t total) {
  Schedule s;
  s.family = f;
  s.warmup_fraction = warmup;
  s.total_steps = total;
  return s;
}

} // namespace

TEST(Schedule, Endpoints) {
  for (std::size_t total : {1u, 7u, 1000u}) {
    EXPECT_EQ(lambda_at(make(ScheduleFamily::linear, 0, total), 0), 1.0);
    EXPECT_EQ(lambda_at(make(ScheduleFamily::linear, 0, total), total), 0.0);
    EXPECT_EQ(lambda_at(make(ScheduleFamily::cosine, 0, total), 0), 1.0);
    EXPECT_NEAR(lambda_at(make(ScheduleFamily::cosine, 0, total), total), 0.0, 1e-15);
    EXPECT_EQ(lambda_at(make(ScheduleFamily::exponential, 0, total), 0), 1.0);
    EXPECT_NEAR(lambda_at(make(ScheduleFamily::exponential, 0, total), total), 0.006737946999085467,
                1e-12);
  }
}

TEST(Schedule, MidpointValues) {
  EXPECT_DOUBLE_EQ(lambda_at(make(ScheduleFamily::linear, 0, 100), 25), 0.75);
  EXPECT_NEAR(lambda_at(make(ScheduleFamily::cosine, 0, 100), 50), 0.5, 1e-15);
  EXPECT_NEAR(lambda_at(make(ScheduleFamily::exponential, 0, 100), 20), std::exp(-1.0), 1e-15);
}

TEST(Schedule, Constants) {
  for (std::size_t step : {0u, 3u, 10u}) {
    EXPECT_EQ(lambda_at(make(ScheduleFamily::constant_zero, 0, 10), step), 0.0);
    EXPECT_EQ(lambda_at(make(ScheduleFamily::constant_one, 0, 10), step), 1.0);
  }
}

TEST(Schedule, WarmupRampsUpThenDecays) {
  const auto s = make(ScheduleFamily::cosine, 0.1, 200);
  ASSERT_EQ(s.warmup_steps(), 20u);
  EXPECT_EQ(lambda_at(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(lambda_at(s, 10), 0.5);
  EXPECT_EQ(lambda_at(s, 20), 1.0);
  EXPECT_NEAR(lambda_at(s, 200), 0.0, 1e-15);
  for (std::size_t t = 1; t <= 20; ++t)
    EXPECT_GE(lambda_at(s, t), lambda_at(s, t - 1));
}

TEST(Schedule, MonotoneAfterWarmup) {
  for (auto f : kFamilies)
    for (double w : {0.0, 0.05, 0.1, 0.5}) {
      const auto s = make(f, w, 500);
      for (std::size_t t = s.warmup_steps() + 1; t <= s.total_steps; ++t)
        ASSERT_LE(lambda_at(s, t), lambda_at(s, t - 1)) << to_string(f) << " w=" << w << " t=" << t;
    }
}

TEST(Schedule, RangeIsUnitInterval) {
  for (auto f : kFamilies)
    for (std::size_t t = 0; t <= 300; ++t) {
      const double v = lambda_at(make(f, 0.2, 300), t);
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
}

TEST(Schedule, Rejections) {
  EXPECT_THROW(lambda_at(make(ScheduleFamily::linear, 0, 10), 11), ConstraintError);
  EXPECT_THROW(lambda_at(make(ScheduleFamily::linear, 1.0, 10), 0), ConstraintError);
  EXPECT_THROW(lambda_at(make(ScheduleFamily::linear, -0.1, 10), 0), ConstraintError);
  EXPECT_THROW(lambda_at(make(ScheduleFamily::linear, 0, 0), 0), ConstraintError);
  EXPECT_THROW(parse_schedule_family("step"), ConstraintError);
  for (auto f : kFamilies)
    EXPECT_EQ(parse_schedule_family(to_string(f)), f);
}

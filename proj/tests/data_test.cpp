// Copyright 2026 The fedload Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedload/data.hpp"

namespace fedload {
namespace {

std::string make_csv(std::size_t clients, std::size_t rows) {
  std::ostringstream out;
  out << "timestamp";
  for (std::size_t c = 0; c < clients; ++c) out << ",c" << c;
  out << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    out << format_utc_hour(kDefaultFleetStart + std::chrono::hours(r));
    for (std::size_t c = 0; c < clients; ++c) out << ',' << 0.125 * (r + c);
    out << '\n';
  }
  return out.str();
}

ErrorKind kind_of(const std::string& csv) {
  std::istringstream in(csv);
  try {
    read_csv(in);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::kInvalidArgument;
}

LoadSeries ramp(std::size_t n, const std::string& id = "x") {
  LoadSeries s{id, kDefaultFleetStart, {}};
  for (std::size_t i = 0; i < n; ++i) s.values.push_back(0.5 + 0.01 * static_cast<double>(i));
  return s;
}

TEST(Timestamps, ParseAndFormatRoundTrip) {
  const UtcHour t = parse_utc_hour("2021-03-14T07:00:00Z");
  EXPECT_EQ(format_utc_hour(t), "2021-03-14T07:00:00Z");
  EXPECT_EQ(parse_utc_hour("2021-03-14 07"), t);
  EXPECT_EQ(parse_utc_hour("2021-03-14T07:00"), t);
  EXPECT_THROW(parse_utc_hour("2021-03-14T07:30:00Z"), Error);
  EXPECT_THROW(parse_utc_hour("yesterday"), Error);
  EXPECT_EQ(format_utc_hour(parse_utc_hour("1969-12-31T23:00:00Z")), "1969-12-31T23:00:00Z");
}

TEST(Csv, ReadsClientsAndRows) {
  std::istringstream in("# comment line\n" + make_csv(3, 100));
  const auto fleet = read_csv(in);
  ASSERT_EQ(fleet.size(), 3u);
  for (const auto& s : fleet) {
    EXPECT_EQ(s.values.size(), 100u);
    EXPECT_EQ(s.start, kDefaultFleetStart);
  }
  EXPECT_EQ(fleet[2].client_id, "c2");
  EXPECT_EQ(fleet[2].values[3], 0.625);
}

TEST(Csv, NegativeValueNamesRowAndClient) {
  std::string csv = make_csv(2, 5);
  const auto pos = csv.find(",0.5,");
  csv.replace(pos, 5, ",-0.5,");
  std::istringstream in(csv);
  try {
    read_csv(in, "load.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNegativeValue);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("load.csv:6"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'c0'"), std::string::npos) << msg;
  }
}

TEST(Csv, DistinctErrorKinds) {
  const std::string header = "timestamp,a\n";
  EXPECT_EQ(kind_of(header + "2021-01-01T00:00:00Z,1\n2021-01-01T00:00:00Z,2\n"),
            ErrorKind::kBadTimestamp);
  EXPECT_EQ(kind_of(header + "2021-01-01T02:00:00Z,1\n2021-01-01T01:00:00Z,2\n"),
            ErrorKind::kBadTimestamp);
  EXPECT_EQ(kind_of(header + "2021-01-01T00:00:00Z,1\n2021-01-01T03:00:00Z,2\n"),
            ErrorKind::kBadTimestamp);
  EXPECT_EQ(kind_of(header + "2021-01-01T00:00:00Z,1,2\n"), ErrorKind::kRaggedRow);
  EXPECT_EQ(kind_of(header + "2021-01-01T00:00:00Z,abc\n"), ErrorKind::kParse);
  EXPECT_EQ(kind_of("timestamp,a,a\n2021-01-01T00:00:00Z,1,2\n"), ErrorKind::kParse);
  try {
    ingest_csv("/nonexistent/fleet.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingFile);
  }
}

TEST(Csv, WriteReadRoundTripIsExact) {
  FleetSpec spec;
  spec.archetypes = {{0.3, 1.2, 19, 1.1, 0.1, 2}};
  spec.hours = 48;
  const auto fleet = synthesize_fleet(spec);
  const auto path = std::filesystem::temp_directory_path() / "fedload_data_test.csv";
  {
    std::ofstream out(path);
    write_csv(out, fleet, "generated");
  }
  EXPECT_EQ(ingest_csv(path.string()), fleet);
  std::filesystem::remove(path);
}

TEST(Synth, ConstantWhenNoAmplitudeOrNoise) {
  FleetSpec spec;
  spec.archetypes = {{0.7, 0.0, 12, 1.5, 0.0, 2}};
  spec.hours = 200;
  for (const auto& s : synthesize_fleet(spec))
    for (double v : s.values) EXPECT_EQ(v, 0.7);
}

TEST(Synth, DeterministicIdsAndNonNegative) {
  FleetSpec spec;
  spec.archetypes = {{0.1, 1.0, 8, 0.5, 0.5, 3}, {0.2, 1.0, 20, 1.0, 0.5, 2}};
  spec.hours = 300;
  const auto a = synthesize_fleet(spec);
  EXPECT_EQ(a, synthesize_fleet(spec));
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a[0].client_id, "a00-c000");
  EXPECT_EQ(a[4].client_id, "a01-c001");
  for (const auto& s : a)
    for (double v : s.values) EXPECT_GE(v, 0.0);
  spec.seed = 2;
  EXPECT_NE(a, synthesize_fleet(spec));
  spec.hours = 0;
  EXPECT_THROW(synthesize_fleet(spec), Error);
}

TEST(Synth, WeekendFactorAppliesOnSaturdayAndSunday) {
  FleetSpec spec;
  spec.archetypes = {{0.0, 1.0, 12, 2.0, 0.0, 1}};
  spec.hours = 24 * 7;
  const auto s = synthesize_fleet(spec).front();
  // Fleet starts on a Monday: day 4 is Friday, day 5 is Saturday.
  EXPECT_DOUBLE_EQ(s.values[4 * 24 + 12], 1.0);
  EXPECT_DOUBLE_EQ(s.values[5 * 24 + 12], 2.0);
  EXPECT_DOUBLE_EQ(s.values[6 * 24 + 12], 2.0);
  EXPECT_EQ(hour_of_week(parse_utc_hour("2021-01-09T00:00:00Z")), 120u);
}

TEST(Synth, PeakHoursTwelveApartGiveTwelveHourCrossCorrelationLag) {
  FleetSpec spec;
  spec.archetypes = {{0.3, 1.5, 8, 1.0, 0.1, 4}, {0.3, 1.5, 20, 1.0, 0.1, 4}};
  spec.hours = 24 * 28;
  const auto fleet = synthesize_fleet(spec);
  auto mean_profile = [&](std::size_t archetype) {
    std::vector<double> p(24, 0.0);
    for (const auto& s : fleet) {
      if (s.client_id.substr(0, 3) != synthetic_client_id(archetype, 0).substr(0, 3)) continue;
      for (std::size_t i = 0; i < s.values.size(); ++i) p[i % 24] += s.values[i];
    }
    double m = 0.0;
    for (double v : p) m += v / 24;
    for (double& v : p) v -= m;
    return p;
  };
  const auto a = mean_profile(0), b = mean_profile(1);
  std::size_t best = 0;
  double best_value = -1e300;
  for (std::size_t lag = 0; lag < 24; ++lag) {
    double acc = 0.0;
    for (std::size_t h = 0; h < 24; ++h) acc += a[h] * b[(h + lag) % 24];
    if (acc > best_value) {
      best_value = acc;
      best = lag;
    }
  }
  EXPECT_EQ(best, 12u);
}

TEST(Scaler, RoundTripAndConstantFit) {
  const std::vector<double> v{0.2, 3.7, 1.1, 0.0, 2.5};
  const auto s = Scaler::fit(v);
  EXPECT_EQ(s.apply(0.0), 0.0);
  EXPECT_EQ(s.apply(3.7), 1.0);
  for (double x : v) EXPECT_NEAR(s.invert(s.apply(x)), x, 1e-12);
  const auto c = Scaler::fit(std::vector<double>{2.0, 2.0});
  EXPECT_GT(c.max, c.min);
  EXPECT_NEAR(c.invert(c.apply(2.0)), 2.0, 1e-12);
}

TEST(Windows, CountsAndAlignment) {
  const auto s = ramp(100);
  const auto sc = Scaler::fit(s.values);
  const auto ds = make_windows(s, 24, sc);
  ASSERT_EQ(ds.size(), 76u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t k = 0; k < 24; ++k) ASSERT_EQ(ds.input(i)[k], sc.apply(s.values[i + k]));
    ASSERT_EQ(ds.targets[i], sc.apply(s.values[i + 24]));
    ASSERT_EQ(ds.raw_targets[i], s.values[i + 24]);
    ASSERT_NEAR(sc.invert(ds.targets[i]), s.values[i + 24], 1e-12);
  }
  EXPECT_EQ(ds.target_time(0), s.time_at(24));
  EXPECT_THROW(make_windows(ramp(24), 24, sc), Error);
}

TEST(Split, FloorArithmeticAndOrder) {
  const auto s = ramp(100);
  const auto ds = make_windows(s, 24, Scaler::fit(s.values));
  const auto [train, test] = split(ds, 0.75);
  EXPECT_EQ(train.size(), 57u);
  EXPECT_EQ(test.size(), 19u);
  std::vector<double> joined = train.targets;
  joined.insert(joined.end(), test.targets.begin(), test.targets.end());
  EXPECT_EQ(joined, ds.targets);
  EXPECT_EQ(test.first_target_time, ds.target_time(57));
  EXPECT_EQ(train_window_count(4, 0.75), 3u);
  EXPECT_THROW(split(ds, 1.0), Error);
  EXPECT_THROW(split(ds, 0.0), Error);
}

TEST(PrepareClient, ScalerSeesTrainingSpanOnly) {
  auto s = ramp(100);
  s.values.back() = 50.0;  // test-only spike
  const auto c = prepare_client(s, 24, 0.75);
  EXPECT_EQ(c.scaler.max, s.values[57 + 24 - 1]);
  EXPECT_EQ(c.train.size(), 57u);
  EXPECT_EQ(c.test.raw_targets.back(), 50.0);
  EXPECT_THROW(prepare_client(ramp(25), 24, 0.75), Error);
}

TEST(Aggregate, SumsAlignedSeries) {
  LoadSeries a{"a", kDefaultFleetStart, std::vector<double>(10, 1.0)};
  LoadSeries b{"b", kDefaultFleetStart, std::vector<double>(10, 2.0)};
  const std::vector<LoadSeries> both{a, b}, only{a};
  const auto total = aggregate(both);
  EXPECT_EQ(total.client_id, "aggregate");
  for (double v : total.values) EXPECT_EQ(v, 3.0);
  EXPECT_EQ(aggregate(only).values, a.values);
  LoadSeries late = b;
  late.start += std::chrono::hours(1);
  EXPECT_THROW(aggregate(std::vector<LoadSeries>{a, late}), Error);
}

TEST(Aggregate, Linear) {
  FleetSpec spec;
  spec.archetypes = {{0.2, 1.0, 8, 1.0, 0.2, 3}, {0.5, 0.5, 19, 1.3, 0.2, 2}};
  spec.hours = 96;
  const auto fleet = synthesize_fleet(spec);
  const std::vector<LoadSeries> left(fleet.begin(), fleet.begin() + 2),
      right(fleet.begin() + 2, fleet.end());
  const auto all = aggregate(fleet), l = aggregate(left), r = aggregate(right);
  for (std::size_t i = 0; i < all.values.size(); ++i)
    EXPECT_NEAR(all.values[i], l.values[i] + r.values[i], 1e-12);
}

}  // namespace
}  // namespace fedload

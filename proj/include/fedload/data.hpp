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

#ifndef FEDLOAD_DATA_HPP_
#define FEDLOAD_DATA_HPP_

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedload/common.hpp"
#include "fedload/neural.hpp"

namespace fedload {

using UtcHour = std::chrono::sys_time<std::chrono::hours>;

namespace detail {

// Howard Hinnant's civil-calendar conversions.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m,
                            unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

}  // namespace detail

/// Parses "YYYY-MM-DDTHH[:MM[:SS]][Z]" (a space may replace the 'T').
/// Minutes and seconds must be zero.
inline UtcHour parse_utc_hour(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const std::string buf(text);
  const int n = std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d,
                            &sep, &h, &mi, &s);
  require(n >= 5 && (sep == 'T' || sep == ' '), ErrorKind::kParse,
          "bad timestamp '" + buf + "'");
  require(mo >= 1 && mo <= 12 && d >= 1 && d <= 31 && h >= 0 && h <= 23,
          ErrorKind::kParse, "timestamp out of range '" + buf + "'");
  require(mi == 0 && s == 0, ErrorKind::kParse,
          "timestamp is not on the hour '" + buf + "'");
  const auto days = detail::days_from_civil(y, static_cast<unsigned>(mo),
                                            static_cast<unsigned>(d));
  return UtcHour(std::chrono::hours(days * 24 + h));
}

inline std::string format_utc_hour(UtcHour t) {
  const std::int64_t hours = t.time_since_epoch().count();
  std::int64_t days = hours >= 0 ? hours / 24 : (hours - 23) / 24;
  const auto hour = static_cast<int>(hours - days * 24);
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  detail::civil_from_days(days, y, m, d);
  char out[64];
  std::snprintf(out, sizeof(out), "%04lld-%02u-%02uT%02d:00:00Z",
                static_cast<long long>(y), m, d, hour);
  return out;
}

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Monday 2021-01-04 00:00 UTC.
inline const UtcHour kDefaultFleetStart = parse_utc_hour("2021-01-04T00:00:00Z");

struct LoadSeries {
  std::string client_id;
  UtcHour start{};
  std::vector<double> values;  // kWh per hour

  UtcHour time_at(std::size_t i) const {
    return start + std::chrono::hours(static_cast<std::int64_t>(i));
  }

  bool operator==(const LoadSeries&) const = default;
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Reads `timestamp,<client>,<client>,...` with one row per hour. Lines that
/// start with '#' are comments.
inline std::vector<LoadSeries> read_csv(std::istream& in,
                                        const std::string& source = "<stream>") {
  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    for (auto f : detail::split_csv(t)) header.emplace_back(f);
    break;
  }
  require(header.size() >= 2, ErrorKind::kParse,
          source + ": header must be 'timestamp,<client_id>,...'");
  for (std::size_t c = 1; c < header.size(); ++c) {
    require(!header[c].empty(), ErrorKind::kParse,
            source + ": empty client id in header");
    for (std::size_t o = 1; o < c; ++o) {
      require(header[o] != header[c], ErrorKind::kParse,
              source + ": duplicate client id '" + header[c] + "'");
    }
  }

  std::vector<LoadSeries> series(header.size() - 1);
  for (std::size_t c = 0; c < series.size(); ++c) series[c].client_id = header[c + 1];

  bool first = true;
  UtcHour previous{};
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = detail::split_csv(t);
    const std::string where = source + ":" + std::to_string(line_no);
    require(fields.size() == header.size(), ErrorKind::kRaggedRow,
            where + ": expected " + std::to_string(header.size()) +
                " fields, found " + std::to_string(fields.size()));
    const UtcHour stamp = parse_utc_hour(fields[0]);
    if (first) {
      for (auto& s : series) s.start = stamp;
      first = false;
    } else {
      require(stamp != previous, ErrorKind::kBadTimestamp,
              where + ": duplicated timestamp " + std::string(fields[0]));
      require(stamp > previous, ErrorKind::kBadTimestamp,
              where + ": timestamps are not increasing");
      require(stamp - previous == std::chrono::hours(1), ErrorKind::kBadTimestamp,
              where + ": gap in hourly timestamps before " + std::string(fields[0]));
    }
    previous = stamp;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      double v = 0.0;
      const auto f = fields[c];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      require(res.ec == std::errc() && res.ptr == f.data() + f.size() &&
                  std::isfinite(v),
              ErrorKind::kParse,
              where + ": client '" + header[c] + "' has non-numeric value '" +
                  std::string(f) + "'");
      require(v >= 0.0, ErrorKind::kNegativeValue,
              where + ": client '" + header[c] + "' has negative value " +
                  std::string(f));
      series[c - 1].values.push_back(v);
    }
  }
  require(!first, ErrorKind::kParse, source + ": no data rows");
  return series;
}

inline std::vector<LoadSeries> ingest_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kMissingFile,
          "cannot open load file '" + path + "'");
  return read_csv(in, path);
}

inline void write_csv(std::ostream& out, std::span<const LoadSeries> fleet,
                      const std::string& comment = {}) {
  require(!fleet.empty(), "write_csv: empty fleet");
  for (const auto& s : fleet) {
    require(s.start == fleet[0].start && s.values.size() == fleet[0].values.size(),
            ErrorKind::kShapeMismatch, "write_csv: series are not aligned");
  }
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "timestamp";
  for (const auto& s : fleet) out << ',' << s.client_id;
  out << '\n';
  for (std::size_t i = 0; i < fleet[0].values.size(); ++i) {
    out << format_utc_hour(fleet[0].time_at(i));
    for (const auto& s : fleet) out << ',' << format_double(s.values[i]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic fleets
// ---------------------------------------------------------------------------

struct Archetype {
  double base_load = 0.3;
  double peak_amplitude = 1.0;
  double peak_hour = 19.0;
  double weekend_factor = 1.0;
  double noise_std = 0.05;
  std::size_t client_count = 1;

  bool operator==(const Archetype&) const = default;
};

struct FleetSpec {
  std::vector<Archetype> archetypes;
  std::size_t hours = 24 * 7 * 8;
  std::uint64_t seed = 1;
  UtcHour start = kDefaultFleetStart;

  bool operator==(const FleetSpec&) const = default;
};

inline std::string synthetic_client_id(std::size_t archetype, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "a%02zu-c%03zu", archetype, index);
  return buf;
}

/// Hour of the week counted from Monday 00:00 UTC. Hours 120..167 are the
/// weekend.
inline std::size_t hour_of_week(UtcHour t) {
  // 1970-01-05 was a Monday, 96 hours after the epoch.
  const std::int64_t h = t.time_since_epoch().count() - 96;
  return static_cast<std::size_t>(((h % 168) + 168) % 168);
}

/// Half-cosine daily bump: 1 at the peak hour, 0 from six hours either side.
inline double daily_bump(double hour_of_day, double peak_hour) {
  return std::max(0.0, std::cos(2.0 * std::numbers::pi *
                                (hour_of_day - peak_hour) / 24.0));
}

inline std::vector<LoadSeries> synthesize_fleet(const FleetSpec& spec) {
  require(!spec.archetypes.empty(), "fleet spec: at least one archetype");
  require(spec.hours > 0, "fleet spec: zero-length series requested");
  std::vector<LoadSeries> fleet;
  for (std::size_t a = 0; a < spec.archetypes.size(); ++a) {
    const auto& arch = spec.archetypes[a];
    require(arch.base_load >= 0 && arch.peak_amplitude >= 0 &&
                arch.weekend_factor >= 0 && arch.noise_std >= 0,
            "fleet spec: archetype " + std::to_string(a) +
                " has a negative parameter");
    const auto arch_seed = derive_seed(spec.seed, "archetype", a);
    for (std::size_t c = 0; c < arch.client_count; ++c) {
      LoadSeries s{synthetic_client_id(a, c), spec.start, {}};
      s.values.resize(spec.hours);
      Rng rng(derive_seed(arch_seed, "client", c));
      for (std::size_t i = 0; i < spec.hours; ++i) {
        const UtcHour t = s.time_at(i);
        const std::size_t how = hour_of_week(t);
        const double hod = static_cast<double>(how % 24);
        const double weekend = how >= 120 ? arch.weekend_factor : 1.0;
        const double noise = arch.noise_std > 0 ? arch.noise_std * rng.normal() : 0.0;
        const double v = arch.base_load +
                         arch.peak_amplitude * daily_bump(hod, arch.peak_hour) * weekend +
                         noise;
        s.values[i] = std::max(0.0, v);
      }
      fleet.push_back(std::move(s));
    }
  }
  return fleet;
}

// ---------------------------------------------------------------------------
// Scaling and windowing
// ---------------------------------------------------------------------------

/// Min-max scaling to [0, 1]. A constant fit widens to a unit range so the
/// transform stays invertible.
struct Scaler {
  double min = 0.0;
  double max = 1.0;

  static Scaler fit(std::span<const double> values) {
    require(!values.empty(), "scaler: cannot fit on no data");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    Scaler s{*lo, *hi};
    if (!(s.max - s.min > 1e-12)) s.max = s.min + 1.0;
    return s;
  }

  double apply(double x) const { return (x - min) / (max - min); }
  double invert(double y) const { return y * (max - min) + min; }

  bool operator==(const Scaler&) const = default;
};

/// Sliding windows over one series. Window i's input is the scaled slice
/// values[i, i + lookback) and its target the scaled values[i + lookback].
struct WindowedDataset {
  std::string client_id;
  std::size_t lookback = 0;
  Scaler scaler;
  std::vector<double> inputs;       // size() * lookback
  std::vector<double> targets;      // scaled
  std::vector<double> raw_targets;  // kWh
  UtcHour first_target_time{};

  std::size_t size() const { return targets.size(); }
  bool empty() const { return targets.empty(); }

  SampleBatch batch() const { return SampleBatch{inputs, targets, lookback}; }

  std::span<const double> input(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * lookback, lookback);
  }

  UtcHour target_time(std::size_t i) const {
    return first_target_time + std::chrono::hours(static_cast<std::int64_t>(i));
  }

  bool operator==(const WindowedDataset&) const = default;
};

inline WindowedDataset make_windows(const LoadSeries& series, std::size_t lookback,
                                    const Scaler& scaler) {
  require(lookback >= 1, "make_windows: lookback must be at least 1");
  require(series.values.size() > lookback,
          "make_windows: series '" + series.client_id + "' has " +
              std::to_string(series.values.size()) +
              " values, needs more than lookback " + std::to_string(lookback));
  WindowedDataset ds;
  ds.client_id = series.client_id;
  ds.lookback = lookback;
  ds.scaler = scaler;
  const std::size_t count = series.values.size() - lookback;
  std::vector<double> scaled(series.values.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = scaler.apply(series.values[i]);
  ds.inputs.reserve(count * lookback);
  for (std::size_t i = 0; i < count; ++i) {
    ds.inputs.insert(ds.inputs.end(), scaled.begin() + static_cast<std::ptrdiff_t>(i),
                     scaled.begin() + static_cast<std::ptrdiff_t>(i + lookback));
    ds.targets.push_back(scaled[i + lookback]);
    ds.raw_targets.push_back(series.values[i + lookback]);
  }
  ds.first_target_time = series.time_at(lookback);
  return ds;
}

inline std::size_t train_window_count(std::size_t windows, double train_fraction) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "split: train fraction must lie in (0, 1)");
  return static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(windows)));
}

/// Chronological split: the first floor(fraction * count) windows train.
inline std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& ds,
                                                         double train_fraction) {
  const std::size_t n_train = train_window_count(ds.size(), train_fraction);
  auto part = [&](std::size_t begin, std::size_t end) {
    WindowedDataset out;
    out.client_id = ds.client_id;
    out.lookback = ds.lookback;
    out.scaler = ds.scaler;
    out.inputs.assign(ds.inputs.begin() + static_cast<std::ptrdiff_t>(begin * ds.lookback),
                      ds.inputs.begin() + static_cast<std::ptrdiff_t>(end * ds.lookback));
    out.targets.assign(ds.targets.begin() + static_cast<std::ptrdiff_t>(begin),
                       ds.targets.begin() + static_cast<std::ptrdiff_t>(end));
    out.raw_targets.assign(ds.raw_targets.begin() + static_cast<std::ptrdiff_t>(begin),
                           ds.raw_targets.begin() + static_cast<std::ptrdiff_t>(end));
    out.first_target_time = ds.target_time(begin);
    return out;
  };
  return {part(0, n_train), part(n_train, ds.size())};
}

/// Raw values touched by the training windows of a chronological split:
/// values[0, n_train + lookback).
inline std::span<const double> training_span(const LoadSeries& series,
                                             std::size_t lookback,
                                             double train_fraction) {
  require(series.values.size() > lookback, "series shorter than lookback");
  const std::size_t n_train =
      train_window_count(series.values.size() - lookback, train_fraction);
  return std::span<const double>(series.values).first(n_train + lookback);
}

/// A client's scaled train/test windows, scaler fitted on the training
/// portion only.
struct ClientData {
  std::string client_id;
  Scaler scaler;
  WindowedDataset train;
  WindowedDataset test;
};

inline ClientData prepare_client(const LoadSeries& series, std::size_t lookback,
                                 double train_fraction,
                                 const Scaler* shared_scaler = nullptr) {
  require(series.values.size() >= lookback + 2,
          "series '" + series.client_id + "' needs at least lookback + 2 values");
  const Scaler scaler = shared_scaler != nullptr
                            ? *shared_scaler
                            : Scaler::fit(training_span(series, lookback, train_fraction));
  auto [train, test] = split(make_windows(series, lookback, scaler), train_fraction);
  require(!train.empty() && !test.empty(),
          "series '" + series.client_id + "' yields an empty train or test split");
  return ClientData{series.client_id, scaler, std::move(train), std::move(test)};
}

/// Elementwise sum of aligned series.
inline LoadSeries aggregate(std::span<const LoadSeries> fleet,
                            std::string client_id = "aggregate") {
  require(!fleet.empty(), "aggregate: empty fleet");
  LoadSeries out{std::move(client_id), fleet[0].start,
                 std::vector<double>(fleet[0].values.size(), 0.0)};
  for (const auto& s : fleet) {
    require(s.start == out.start && s.values.size() == out.values.size(),
            ErrorKind::kShapeMismatch,
            "aggregate: series '" + s.client_id + "' is not aligned");
    for (std::size_t i = 0; i < s.values.size(); ++i) out.values[i] += s.values[i];
  }
  return out;
}

}  // namespace fedload

#endif  // FEDLOAD_DATA_HPP_

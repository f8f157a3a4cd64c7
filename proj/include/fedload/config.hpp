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

#ifndef FEDLOAD_CONFIG_HPP_
#define FEDLOAD_CONFIG_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedload/common.hpp"
#include "fedload/data.hpp"
#include "fedload/hypertune.hpp"
#include "fedload/neural.hpp"
#include "fedload/schemes.hpp"

namespace fedload {

struct ClusterSelection {
  enum class Mode { kFixed, kElbow };
  Mode mode = Mode::kFixed;
  std::size_t k = 5;
  double drop_threshold = 0.15;
  std::size_t k_max = 10;
  std::size_t restarts = 10;

  bool operator==(const ClusterSelection&) const = default;
};

/// Five archetypes of 11, 9, 15, 17 and 23 clients.
inline FleetSpec default_fleet() {
  FleetSpec f;
  f.hours = 24 * 7 * 8;
  f.seed = 2021;
  f.archetypes = {
      {0.25, 1.60, 19.0, 1.20, 0.08, 11}, {0.60, 2.40, 18.0, 1.00, 0.20, 9},
      {0.40, 1.00, 8.0, 1.40, 0.10, 15},  {0.20, 0.60, 21.0, 0.80, 0.05, 17},
      {0.35, 1.20, 13.0, 1.10, 0.12, 23},
  };
  return f;
}

struct ExperimentConfig {
  /// Load CSV; when empty the synthetic `fleet` is used.
  std::string csv_path;
  FleetSpec fleet = default_fleet();
  std::size_t lookback = 24;
  double train_fraction = 0.75;

  std::size_t lstm_hidden = 20;
  TrainOptions train;

  HyperGrid grid = HyperGrid::defaults();
  bool fast_tuning = false;
  std::size_t fast_epoch_cap = 150;

  ClusterSelection clusters;

  /// 0 means ceil(cluster epochs / local_epochs).
  std::size_t rounds = 0;
  std::size_t local_epochs = 5;
  double removal_factor = 1.6;
  std::size_t removal_lag = 20;
  bool removal_enabled = true;

  std::vector<Scheme> schemes = {Scheme::kFederated, Scheme::kCentralized, Scheme::kLocal};
  /// "cluster": pool within each cluster; "fleet": one pool for everyone.
  std::string centralized_scope = "cluster";
  /// "aggregate": train on the cluster's aggregate series; "sum": add up
  /// centralized ILP predictions.
  std::string centralized_alp = "aggregate";

  std::string probe_client;
  bool traces = false;

  std::string output_dir = "fedload-out";
  std::uint64_t seed = 42;

  NetworkSpec base_spec() const {
    NetworkSpec s;
    s.lstm_hidden = lstm_hidden;
    return s;
  }

  bool runs(Scheme s) const {
    return std::find(schemes.begin(), schemes.end(), s) != schemes.end();
  }

  void validate() const {
    auto check = [](bool ok, const std::string& what) {
      require(ok, ErrorKind::kConfig, "config: " + what);
    };
    check(lookback >= 1, "lookback must be at least 1");
    check(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction must lie in (0, 1)");
    check(lstm_hidden >= 1, "lstm_hidden must be at least 1");
    check(train.adam.learning_rate >= 0.0, "learning_rate must be non-negative");
    check(train.minibatch_size >= 1, "minibatch_size must be at least 1");
    try {
      grid.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, std::string("config: ") + e.what());
    }
    check(clusters.k >= 1, "clustering k must be at least 1");
    check(clusters.k_max >= 2 || clusters.mode == ClusterSelection::Mode::kFixed,
          "clustering k_max must be at least 2 in elbow mode");
    check(clusters.restarts >= 1, "clustering restarts must be at least 1");
    check(local_epochs >= 1, "local_epochs must be at least 1");
    check(removal_factor > 1.0, "removal_factor must exceed 1");
    check(removal_lag >= 1, "removal_lag must be at least 1");
    check(!schemes.empty(), "at least one scheme is required");
    check(centralized_scope == "cluster" || centralized_scope == "fleet",
          "centralized scope must be 'cluster' or 'fleet'");
    check(centralized_alp == "aggregate" || centralized_alp == "sum",
          "centralized alp must be 'aggregate' or 'sum'");
    if (csv_path.empty()) {
      check(!fleet.archetypes.empty(), "synthetic fleet needs an archetype");
      check(fleet.hours > lookback + 1, "synthetic fleet is shorter than lookback + 2");
    }
  }
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

/// Reads optional keys from a JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string context)
      : j_(j), context_(std::move(context)) {
    require(j_.is_object(), ErrorKind::kConfig, "config: '" + context_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kConfig,
                  "config: '" + context_ + "." + key + "' has the wrong type: " + e.what());
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      require(seen_.count(item.key()) != 0, ErrorKind::kConfig,
              "config: unknown key '" + context_ + "." + item.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json fleet_to_json(const FleetSpec& f) {
  nlohmann::json arch = nlohmann::json::array();
  for (const auto& a : f.archetypes) {
    arch.push_back({{"base_load", a.base_load},
                    {"peak_amplitude", a.peak_amplitude},
                    {"peak_hour", a.peak_hour},
                    {"weekend_factor", a.weekend_factor},
                    {"noise_std", a.noise_std},
                    {"clients", a.client_count}});
  }
  return {{"hours", f.hours},
          {"seed", f.seed},
          {"start", format_utc_hour(f.start)},
          {"archetypes", arch}};
}

inline FleetSpec fleet_from_json(const nlohmann::json& j) {
  FleetSpec f;
  f.archetypes.clear();
  detail::ObjectReader r(j, "data.fleet");
  r.get("hours", f.hours);
  r.get("seed", f.seed);
  std::string start = format_utc_hour(f.start);
  r.get("start", start);
  try {
    f.start = parse_utc_hour(start);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, std::string("config: data.fleet.start: ") + e.what());
  }
  if (const auto* arch = r.child("archetypes")) {
    require(arch->is_array(), ErrorKind::kConfig, "config: archetypes must be an array");
    for (const auto& item : *arch) {
      Archetype a;
      detail::ObjectReader ar(item, "data.fleet.archetypes[]");
      ar.get("base_load", a.base_load);
      ar.get("peak_amplitude", a.peak_amplitude);
      ar.get("peak_hour", a.peak_hour);
      ar.get("weekend_factor", a.weekend_factor);
      ar.get("noise_std", a.noise_std);
      ar.get("clients", a.client_count);
      ar.finish();
      f.archetypes.push_back(a);
    }
  }
  r.finish();
  return f;
}

/// Everything that determines the experiment's results. Output location,
/// thread count, trace output and the ablation probe only select what gets
/// written, so they are left out.
inline nlohmann::json experiment_json(const ExperimentConfig& c) {
  nlohmann::json schemes = nlohmann::json::array();
  for (auto s : c.schemes) schemes.push_back(to_string(s));
  nlohmann::json data = {{"csv", c.csv_path}};
  if (c.csv_path.empty()) data["fleet"] = fleet_to_json(c.fleet);
  return {
      {"seed", c.seed},
      {"data", data},
      {"lookback", c.lookback},
      {"train_fraction", c.train_fraction},
      {"network", {{"lstm_hidden", c.lstm_hidden}}},
      {"optimizer",
       {{"learning_rate", c.train.adam.learning_rate},
        {"beta1", c.train.adam.beta1},
        {"beta2", c.train.adam.beta2},
        {"epsilon", c.train.adam.epsilon},
        {"full_batch_limit", c.train.full_batch_limit},
        {"minibatch_size", c.train.minibatch_size}}},
      {"tuning",
       {{"fc1", c.grid.fc1},
        {"fc2", c.grid.fc2},
        {"epochs", c.grid.epochs},
        {"fast_mode", c.fast_tuning},
        {"fast_epoch_cap", c.fast_epoch_cap}}},
      {"clustering",
       {{"mode", c.clusters.mode == ClusterSelection::Mode::kFixed ? "fixed" : "elbow"},
        {"k", c.clusters.k},
        {"drop_threshold", c.clusters.drop_threshold},
        {"k_max", c.clusters.k_max},
        {"restarts", c.clusters.restarts}}},
      {"federation",
       {{"rounds", c.rounds},
        {"local_epochs", c.local_epochs},
        {"removal_factor", c.removal_factor},
        {"removal_lag", c.removal_lag},
        {"removal_enabled", c.removal_enabled}}},
      {"schemes", schemes},
      {"centralized", {{"scope", c.centralized_scope}, {"alp", c.centralized_alp}}},
  };
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  auto j = experiment_json(c);
  j["ablation"] = {{"probe_client", c.probe_client}};
  j["traces"] = c.traces;
  j["output_dir"] = c.output_dir;
  return j;
}

/// FNV-1a of the canonical experiment JSON, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  return to_hex(fnv1a64(experiment_json(c).dump()));
}

/// Starts from the defaults and overrides every key present in `j`.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::ObjectReader r(j, "config");
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.get("lookback", c.lookback);
  r.get("train_fraction", c.train_fraction);
  r.get("traces", c.traces);
  if (const auto* d = r.child("data")) {
    detail::ObjectReader dr(*d, "data");
    dr.get("csv", c.csv_path);
    if (const auto* f = dr.child("fleet")) c.fleet = fleet_from_json(*f);
    dr.finish();
  }
  if (const auto* n = r.child("network")) {
    detail::ObjectReader nr(*n, "network");
    nr.get("lstm_hidden", c.lstm_hidden);
    nr.finish();
  }
  if (const auto* o = r.child("optimizer")) {
    detail::ObjectReader orr(*o, "optimizer");
    orr.get("learning_rate", c.train.adam.learning_rate);
    orr.get("beta1", c.train.adam.beta1);
    orr.get("beta2", c.train.adam.beta2);
    orr.get("epsilon", c.train.adam.epsilon);
    orr.get("full_batch_limit", c.train.full_batch_limit);
    orr.get("minibatch_size", c.train.minibatch_size);
    orr.finish();
  }
  if (const auto* t = r.child("tuning")) {
    detail::ObjectReader tr(*t, "tuning");
    tr.get("fc1", c.grid.fc1);
    tr.get("fc2", c.grid.fc2);
    tr.get("epochs", c.grid.epochs);
    tr.get("fast_mode", c.fast_tuning);
    tr.get("fast_epoch_cap", c.fast_epoch_cap);
    tr.finish();
  }
  if (const auto* k = r.child("clustering")) {
    detail::ObjectReader kr(*k, "clustering");
    std::string mode = "fixed";
    kr.get("mode", mode);
    require(mode == "fixed" || mode == "elbow", ErrorKind::kConfig,
            "config: clustering.mode must be 'fixed' or 'elbow'");
    c.clusters.mode =
        mode == "fixed" ? ClusterSelection::Mode::kFixed : ClusterSelection::Mode::kElbow;
    kr.get("k", c.clusters.k);
    kr.get("drop_threshold", c.clusters.drop_threshold);
    kr.get("k_max", c.clusters.k_max);
    kr.get("restarts", c.clusters.restarts);
    kr.finish();
  }
  if (const auto* f = r.child("federation")) {
    detail::ObjectReader fr(*f, "federation");
    fr.get("rounds", c.rounds);
    fr.get("local_epochs", c.local_epochs);
    fr.get("removal_factor", c.removal_factor);
    fr.get("removal_lag", c.removal_lag);
    fr.get("removal_enabled", c.removal_enabled);
    fr.finish();
  }
  if (const auto* s = r.child("schemes")) {
    std::vector<std::string> names;
    try {
      names = s->get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::kConfig, "config: schemes must be a list of names");
    }
    c.schemes.clear();
    for (const auto& n : names) c.schemes.push_back(scheme_from_string(n));
  }
  if (const auto* ce = r.child("centralized")) {
    detail::ObjectReader cr(*ce, "centralized");
    cr.get("scope", c.centralized_scope);
    cr.get("alp", c.centralized_alp);
    cr.finish();
  }
  if (const auto* a = r.child("ablation")) {
    detail::ObjectReader ar(*a, "ablation");
    ar.get("probe_client", c.probe_client);
    ar.finish();
  }
  r.finish();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kConfig, "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, "config file '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace fedload

#endif  // FEDLOAD_CONFIG_HPP_

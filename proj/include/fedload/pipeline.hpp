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

// Experiment stages. Each stage reads its inputs from the output directory,
// writes its artifacts back there, and stamps everything with the config
// hash:
//
//   synth       -> config.json, fleet.csv
//   tune        -> tuning.json
//   cluster     -> clusters.json (+ inertia_curve.csv in elbow mode)
//   federate    -> round_log.jsonl, checkpoints/federated_cluster_<i>.bin,
//                  results/federated.json
//   centralize  -> results/centralized.json
//   localize    -> results/local.json
//   report      -> report.json, report.csv
//   ablate      -> ablation.json, ablation.csv
//
// Seeds fan out from the master seed as derive_seed(master, <label>) with
// labels "tune", "kmeans", "init", "train", "centralized" and
// "centralized-alp"; per-client seeds further derive by client id. The
// initial weights of every model in cluster i come from
// init_forecaster(spec, derive_seed(master, "init") + i).

#ifndef FEDLOAD_PIPELINE_HPP_
#define FEDLOAD_PIPELINE_HPP_

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedload/checkpoint.hpp"
#include "fedload/clustering.hpp"
#include "fedload/common.hpp"
#include "fedload/config.hpp"
#include "fedload/data.hpp"
#include "fedload/federated.hpp"
#include "fedload/hypertune.hpp"
#include "fedload/neural.hpp"
#include "fedload/schemes.hpp"

namespace fedload {

namespace fs = std::filesystem;
using nlohmann::json;

/// A failure inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error(ErrorKind::kIo, stage + ": " + cause), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct RunOptions {
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

struct ArtifactPaths {
  fs::path root;

  fs::path config() const { return root / "config.json"; }
  fs::path fleet() const { return root / "fleet.csv"; }
  fs::path tuning() const { return root / "tuning.json"; }
  fs::path clusters() const { return root / "clusters.json"; }
  fs::path inertia_csv() const { return root / "inertia_curve.csv"; }
  fs::path round_log() const { return root / "round_log.jsonl"; }
  fs::path checkpoint(std::size_t cluster) const {
    return root / "checkpoints" / ("federated_cluster_" + std::to_string(cluster) + ".bin");
  }
  fs::path results(Scheme s) const {
    return root / "results" / (std::string(to_string(s)) + ".json");
  }
  fs::path report_json() const { return root / "report.json"; }
  fs::path report_csv() const { return root / "report.csv"; }
  fs::path ablation_json() const { return root / "ablation.json"; }
  fs::path ablation_csv() const { return root / "ablation.csv"; }
  fs::path traces(Scheme s) const { return root / "traces" / to_string(s); }
};

// ---------------------------------------------------------------------------
// JSON helpers for domain types
// ---------------------------------------------------------------------------

inline json split_to_json(const SplitPrediction& s) {
  return {{"first_time", format_utc_hour(s.first_time)},
          {"predicted", s.predicted},
          {"actual", s.actual},
          {"rmse", s.rmse}};
}

inline SplitPrediction split_from_json(const json& j) {
  SplitPrediction s;
  s.first_time = parse_utc_hour(j.at("first_time").get<std::string>());
  s.predicted = j.at("predicted").get<std::vector<double>>();
  s.actual = j.at("actual").get<std::vector<double>>();
  s.rmse = j.at("rmse").get<double>();
  return s;
}

inline json result_to_json(const SchemeResult& r) {
  return {{"scheme", to_string(r.scheme)},
          {"task", to_string(r.task)},
          {"subject", r.subject},
          {"train", split_to_json(r.train)},
          {"test", split_to_json(r.test)}};
}

inline SchemeResult result_from_json(const json& j) {
  SchemeResult r;
  r.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  r.task = j.at("task").get<std::string>() == "ILP" ? Task::kIlp : Task::kAlp;
  r.subject = j.at("subject").get<std::string>();
  r.train = split_from_json(j.at("train"));
  r.test = split_from_json(j.at("test"));
  return r;
}

inline json round_log_to_json(const RoundLog& log, const std::string& hash) {
  json j = {{"config_hash", hash},
            {"cluster", log.cluster},
            {"round", log.round},
            {"losses", log.client_losses},
            {"removed", log.removed},
            {"samples", log.total_samples},
            {"checksum", log.checksum}};
  if (!log.error.empty()) j["error"] = log.error;
  return j;
}

inline json hyperparams_to_json(const HyperParams& hp) {
  return {{"fc1", hp.fc1_neurons}, {"fc2", hp.fc2_neurons}, {"epochs", hp.epochs}};
}

inline HyperParams hyperparams_from_json(const json& j) {
  return {j.at("fc1").get<std::size_t>(), j.at("fc2").get<std::size_t>(),
          j.at("epochs").get<std::size_t>()};
}

// ---------------------------------------------------------------------------
// Artifact I/O
// ---------------------------------------------------------------------------

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out << text;
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline json read_json(const fs::path& path, const std::string& hash) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kMissingFile,
          "missing artifact '" + path.string() + "' (run the previous stage first)");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, "artifact '" + path.string() + "': " + e.what());
  }
  require(j.value("config_hash", "") == hash, ErrorKind::kConfig,
          "artifact '" + path.string() + "' was produced by a different config");
  return j;
}

inline void log(const RunOptions& o, const std::string& line) {
  if (o.log != nullptr) *o.log << line << std::endl;
}

/// Runs `fn` and rethrows any failure as a StageError naming `stage`.
template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace detail

/// Everything a stage needs from the config, resolved once.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config)
      : config_(std::move(config)), hash_(config_hash(config_)), paths_{config_.output_dir} {
    config_.validate();
  }

  const ExperimentConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  const ArtifactPaths& paths() const { return paths_; }

  std::uint64_t tune_seed(const std::string& client) const {
    return derive_seed(derive_seed(config_.seed, "tune"), client);
  }
  std::uint64_t train_seed(const std::string& client) const {
    return derive_seed(derive_seed(config_.seed, "train"), client);
  }
  std::uint64_t init_seed(std::size_t cluster) const {
    return derive_seed(config_.seed, "init") + cluster;
  }
  std::uint64_t kmeans_seed() const { return derive_seed(config_.seed, "kmeans"); }
  std::uint64_t centralized_seed(std::size_t cluster) const {
    return derive_seed(config_.seed, "centralized", cluster);
  }
  std::uint64_t centralized_alp_seed(std::size_t cluster) const {
    return derive_seed(config_.seed, "centralized-alp", cluster);
  }

  std::size_t rounds_for(const HyperParams& hp) const {
    if (config_.rounds > 0) return config_.rounds;
    return (hp.epochs + config_.local_epochs - 1) / config_.local_epochs;
  }

  FederationConfig federation_config(std::size_t rounds, std::size_t threads) const {
    FederationConfig f;
    f.rounds = rounds;
    f.local_epochs = config_.local_epochs;
    f.removal_factor = config_.removal_factor;
    f.removal_lag = config_.removal_lag;
    f.removal_enabled = config_.removal_enabled;
    f.train = config_.train;
    f.threads = threads;
    return f;
  }

  std::string hash_comment() const { return "config_hash=" + hash_; }

 private:
  ExperimentConfig config_;
  std::string hash_;
  ArtifactPaths paths_;
};

// ----- fleet ---------------------------------------------------------------

inline std::vector<LoadSeries> load_fleet(const Experiment& ex) {
  const auto path = ex.paths().fleet();
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kMissingFile,
          "missing artifact '" + path.string() + "' (run the synth stage first)");
  std::string first;
  std::getline(in, first);
  require(first == "# " + ex.hash_comment(), ErrorKind::kConfig,
          "artifact '" + path.string() + "' was produced by a different config");
  in.seekg(0);
  return read_csv(in, path.string());
}

inline std::map<std::string, ClientData> prepare_clients(const Experiment& ex,
                                                         std::span<const LoadSeries> fleet,
                                                         const Scaler* shared = nullptr) {
  std::map<std::string, ClientData> out;
  for (const auto& s : fleet) {
    out.emplace(s.client_id, prepare_client(s, ex.config().lookback,
                                            ex.config().train_fraction, shared));
  }
  return out;
}

// ----- tuning ---------------------------------------------------------------

struct TuningRecord {
  std::string client_id;
  HyperParams params;
  double score = 0.0;
};

inline std::vector<TuningRecord> load_tuning(const Experiment& ex) {
  const json j = detail::read_json(ex.paths().tuning(), ex.hash());
  std::vector<TuningRecord> out;
  for (const auto& r : j.at("records")) {
    out.push_back({r.at("client_id").get<std::string>(), hyperparams_from_json(r),
                   r.at("score").get<double>()});
  }
  return out;
}

inline std::map<std::string, HyperParams> tuned_map(const std::vector<TuningRecord>& records) {
  std::map<std::string, HyperParams> out;
  for (const auto& r : records) out[r.client_id] = r.params;
  return out;
}

// ----- clusters -------------------------------------------------------------

struct ClusterArtifact {
  ClusterAssignment assignment;
  std::map<std::size_t, HyperParams> hyperparams;
  std::vector<InertiaPoint> curve;  // elbow mode only
};

inline ClusterArtifact load_clusters(const Experiment& ex) {
  const json j = detail::read_json(ex.paths().clusters(), ex.hash());
  ClusterArtifact a;
  a.assignment.k = j.at("k").get<std::size_t>();
  a.assignment.labels = j.at("labels").get<std::map<std::string, std::size_t>>();
  a.assignment.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
  a.assignment.inertia = j.at("inertia").get<double>();
  for (const auto& c : j.at("clusters")) {
    a.hyperparams[c.at("cluster").get<std::size_t>()] = hyperparams_from_json(c);
  }
  for (const auto& p : j.value("inertia_curve", json::array())) {
    a.curve.push_back({p.at("k").get<std::size_t>(), p.at("inertia").get<double>()});
  }
  return a;
}

inline std::vector<LoadSeries> members_of(std::span<const LoadSeries> fleet,
                                          const ClusterAssignment& a, std::size_t cluster) {
  std::vector<LoadSeries> out;
  for (const auto& s : fleet) {
    const auto it = a.labels.find(s.client_id);
    require(it != a.labels.end(), "client '" + s.client_id + "' has no cluster label");
    if (it->second == cluster) out.push_back(s);
  }
  return out;
}

// ----- results --------------------------------------------------------------

inline std::string aggregate_subject(std::size_t cluster) {
  return "aggregate-" + std::to_string(cluster);
}

inline void save_results(const Experiment& ex, Scheme scheme,
                         const std::map<std::size_t, ClusterResults>& per_cluster) {
  json clusters = json::array();
  for (const auto& [index, r] : per_cluster) {
    json ilp = json::array();
    for (const auto& x : r.ilp.at(scheme)) ilp.push_back(result_to_json(x));
    clusters.push_back(
        {{"cluster", index}, {"ilp", ilp}, {"alp", result_to_json(r.alp.at(scheme))}});
  }
  detail::write_json(ex.paths().results(scheme),
                     {{"config_hash", ex.hash()}, {"scheme", to_string(scheme)},
                      {"clusters", clusters}});

  if (!ex.config().traces) return;
  auto write_trace = [&](const SchemeResult& r) {
    for (const auto* split : {&r.train, &r.test}) {
      std::ostringstream out;
      out << "# " << ex.hash_comment() << "\ntimestamp,actual_kwh,predicted_kwh\n";
      for (std::size_t i = 0; i < split->predicted.size(); ++i) {
        out << format_utc_hour(split->first_time + std::chrono::hours(
                                                       static_cast<std::int64_t>(i)))
            << ',' << format_double(split->actual[i]) << ','
            << format_double(split->predicted[i]) << '\n';
      }
      const std::string name = std::string(to_string(r.task)) + "_" + r.subject + "_" +
                               (split == &r.train ? "train" : "test") + ".csv";
      detail::write_text(ex.paths().traces(scheme) / name, out.str());
    }
  };
  for (const auto& [index, r] : per_cluster) {
    for (const auto& x : r.ilp.at(scheme)) write_trace(x);
    write_trace(r.alp.at(scheme));
  }
}

inline void load_results(const Experiment& ex, Scheme scheme,
                         std::map<std::size_t, ClusterResults>& per_cluster) {
  const json j = detail::read_json(ex.paths().results(scheme), ex.hash());
  for (const auto& c : j.at("clusters")) {
    auto& target = per_cluster[c.at("cluster").get<std::size_t>()];
    auto& ilp = target.ilp[scheme];
    ilp.clear();
    for (const auto& r : c.at("ilp")) ilp.push_back(result_from_json(r));
    target.alp[scheme] = result_from_json(c.at("alp"));
  }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline void write_config_artifact(const Experiment& ex) {
  detail::write_json(ex.paths().config(),
                     {{"config_hash", ex.hash()}, {"config", config_to_json(ex.config())}});
}

/// Materializes the fleet (synthetic or ingested) as fleet.csv.
inline std::vector<LoadSeries> stage_synth(const Experiment& ex, const RunOptions& opts = {}) {
  return detail::staged("synth", [&] {
    write_config_artifact(ex);
    const auto& c = ex.config();
    std::vector<LoadSeries> fleet =
        c.csv_path.empty() ? synthesize_fleet(c.fleet) : ingest_csv(c.csv_path);
    require(!fleet.empty(), "fleet has no clients");
    for (const auto& s : fleet) {
      require(s.values.size() >= c.lookback + 2,
              "series '" + s.client_id + "' is shorter than lookback + 2");
    }
    std::ostringstream out;
    write_csv(out, fleet, ex.hash_comment());
    detail::write_text(ex.paths().fleet(), out.str());
    detail::log(opts, "synth: " + std::to_string(fleet.size()) + " clients x " +
                          std::to_string(fleet.front().values.size()) + " hours");
    return load_fleet(ex);
  });
}

inline std::vector<TuningRecord> stage_tune(const Experiment& ex, const RunOptions& opts = {}) {
  return detail::staged("tune", [&] {
    const auto fleet = load_fleet(ex);
    const auto& c = ex.config();
    TuneOptions tune;
    tune.base = c.base_spec();
    tune.train = c.train;
    tune.fast_mode = c.fast_tuning;
    tune.fast_epoch_cap = c.fast_epoch_cap;
    std::vector<TuningRecord> records(fleet.size());
    parallel_for(fleet.size(), opts.threads, [&](std::size_t i) {
      const auto data = prepare_client(fleet[i], c.lookback, c.train_fraction);
      const auto r = grid_search(data.train, c.grid, tune, ex.tune_seed(data.client_id));
      records[i] = {data.client_id, r.best, r.score};
    });
    json arr = json::array();
    for (const auto& r : records) {
      auto j = hyperparams_to_json(r.params);
      j["client_id"] = r.client_id;
      j["score"] = r.score;
      arr.push_back(j);
      detail::log(opts, "tune: " + r.client_id + " -> " + to_string(r.params));
    }
    detail::write_json(ex.paths().tuning(), {{"config_hash", ex.hash()}, {"records", arr}});
    return records;
  });
}

inline ClusterArtifact stage_cluster(const Experiment& ex, const RunOptions& opts = {}) {
  return detail::staged("cluster", [&] {
    const auto& c = ex.config();
    const auto records = load_tuning(ex);
    PointSet points;
    for (const auto& r : records) {
      const auto v = hyperparam_vector(r.params, c.grid);
      points[r.client_id] = std::vector<double>(v.begin(), v.end());
    }
    ClusterArtifact out;
    std::size_t k = c.clusters.k;
    if (c.clusters.mode == ClusterSelection::Mode::kElbow) {
      const std::size_t k_max = std::min(c.clusters.k_max, points.size());
      std::vector<std::size_t> ks;
      for (std::size_t i = 1; i <= k_max; ++i) ks.push_back(i);
      out.curve = inertia_curve(points, ks, ex.kmeans_seed(), c.clusters.restarts, opts.threads);
      k = out.curve.size() >= 2 ? elbow_select(out.curve, c.clusters.drop_threshold) : 1;
      std::ostringstream csv;
      csv << "# " << ex.hash_comment() << "\nk,inertia\n";
      for (const auto& p : out.curve) csv << p.k << ',' << format_double(p.inertia) << '\n';
      detail::write_text(ex.paths().inertia_csv(), csv.str());
    }
    out.assignment = kmeans(points, k, ex.kmeans_seed(), c.clusters.restarts);
    out.hyperparams = consolidate_hyperparams(out.assignment, tuned_map(records));

    json clusters = json::array();
    for (const auto& [index, hp] : out.hyperparams) {
      auto j = hyperparams_to_json(hp);
      j["cluster"] = index;
      j["members"] = out.assignment.members(index);
      clusters.push_back(j);
      detail::log(opts, "cluster " + std::to_string(index) + ": " + to_string(hp) + ", " +
                            std::to_string(out.assignment.members(index).size()) + " clients");
    }
    json curve = json::array();
    for (const auto& p : out.curve) curve.push_back({{"k", p.k}, {"inertia", p.inertia}});
    json j = {{"config_hash", ex.hash()},
              {"k", out.assignment.k},
              {"labels", out.assignment.labels},
              {"centroids", out.assignment.centroids},
              {"inertia", out.assignment.inertia},
              {"clusters", clusters}};
    if (c.clusters.mode == ClusterSelection::Mode::kElbow) {
      j["inertia_curve"] = curve;
      j["drop_threshold"] = c.clusters.drop_threshold;
    }
    detail::write_json(ex.paths().clusters(), j);
    return out;
  });
}

/// Federated training of one cluster, starting from the cluster's shared
/// initialization.
inline FederationResult federate_cluster(const Experiment& ex, std::size_t cluster,
                                         const HyperParams& hp,
                                         std::span<const LoadSeries> members,
                                         std::size_t rounds, const RunOptions& opts,
                                         bool removal_enabled) {
  const auto& c = ex.config();
  const NetworkSpec spec = hp.apply(c.base_spec());
  ClusterModel model;
  model.index = cluster;
  model.hyperparams = hp;
  model.global_weights = init_forecaster(spec, ex.init_seed(cluster));
  std::vector<ClientState> clients;
  for (const auto& s : members) {
    model.members.push_back(s.client_id);
    clients.push_back(ClientState::from(prepare_client(s, c.lookback, c.train_fraction),
                                        ex.train_seed(s.client_id)));
  }
  auto fc = ex.federation_config(rounds, opts.threads);
  fc.removal_enabled = removal_enabled;
  return run_federation(model, std::move(clients), fc, spec);
}

inline std::map<std::size_t, ClusterResults> stage_federate(const Experiment& ex,
                                                             const RunOptions& opts = {}) {
  return detail::staged("federate", [&] {
    const auto& c = ex.config();
    const auto fleet = load_fleet(ex);
    const auto clusters = load_clusters(ex);
    std::map<std::size_t, ClusterResults> results;
    std::ostringstream round_log;
    for (const auto& [index, hp] : clusters.hyperparams) {
      const auto members = members_of(fleet, clusters.assignment, index);
      const auto fed = federate_cluster(ex, index, hp, members, ex.rounds_for(hp), opts,
                                        c.removal_enabled);
      for (const auto& l : fed.logs) round_log << round_log_to_json(l, ex.hash()).dump() << '\n';
      if (!fed.ok()) {
        detail::write_text(ex.paths().round_log(), round_log.str());
        throw Error(ErrorKind::kAllClientsRemoved, fed.error);
      }
      for (const auto& r : fed.server.removals) {
        detail::log(opts, "federate: cluster " + std::to_string(index) + " removed " +
                              r.client_id + " in round " + std::to_string(r.round));
      }
      fs::create_directories(ex.paths().checkpoint(index).parent_path());
      save_parameters(ex.paths().checkpoint(index).string(), fed.server.global_weights,
                      {{"config_hash", ex.hash()},
                       {"cluster", index},
                       {"rounds", fed.logs.size()},
                       {"hyperparams", hyperparams_to_json(hp)}});
      const Model model{hp.apply(c.base_spec()), fed.server.global_weights, {}};
      auto& out = results[index].ilp[Scheme::kFederated];
      for (const auto& s : members) {
        out.push_back(predict_ilp(Scheme::kFederated, model,
                                  prepare_client(s, c.lookback, c.train_fraction)));
      }
      results[index].alp[Scheme::kFederated] =
          predict_alp_by_sum(Scheme::kFederated, out, aggregate_subject(index));
      detail::log(opts, "federate: cluster " + std::to_string(index) + " done after " +
                            std::to_string(fed.logs.size()) + " rounds");
    }
    detail::write_text(ex.paths().round_log(), round_log.str());
    save_results(ex, Scheme::kFederated, results);
    return results;
  });
}

inline std::map<std::size_t, ClusterResults> stage_localize(const Experiment& ex,
                                                             const RunOptions& opts = {}) {
  return detail::staged("localize", [&] {
    const auto& c = ex.config();
    const auto fleet = load_fleet(ex);
    const auto clusters = load_clusters(ex);
    const auto tuned = tuned_map(load_tuning(ex));
    std::vector<SchemeResult> ilp(fleet.size());
    parallel_for(fleet.size(), opts.threads, [&](std::size_t i) {
      const auto& s = fleet[i];
      const auto data = prepare_client(s, c.lookback, c.train_fraction);
      const auto it = tuned.find(s.client_id);
      require(it != tuned.end(), "no tuning record for '" + s.client_id + "'");
      const auto model = train_local(data, it->second, c.base_spec(),
                                     ex.init_seed(clusters.assignment.labels.at(s.client_id)),
                                     ex.train_seed(s.client_id), c.train);
      ilp[i] = predict_ilp(Scheme::kLocal, model, data);
    });
    std::map<std::size_t, ClusterResults> results;
    for (std::size_t i = 0; i < fleet.size(); ++i) {
      results[clusters.assignment.labels.at(fleet[i].client_id)].ilp[Scheme::kLocal].push_back(
          ilp[i]);
    }
    for (auto& [index, r] : results) {
      r.alp[Scheme::kLocal] =
          predict_alp_by_sum(Scheme::kLocal, r.ilp[Scheme::kLocal], aggregate_subject(index));
    }
    detail::log(opts, "localize: trained " + std::to_string(fleet.size()) + " local models");
    save_results(ex, Scheme::kLocal, results);
    return results;
  });
}

inline std::map<std::size_t, ClusterResults> stage_centralize(const Experiment& ex,
                                                               const RunOptions& opts = {}) {
  return detail::staged("centralize", [&] {
    const auto& c = ex.config();
    const auto fleet = load_fleet(ex);
    const auto clusters = load_clusters(ex);
    const HyperParams hp = modal_hyperparams(tuned_map(load_tuning(ex)));
    const NetworkSpec base = c.base_spec();

    // Pools: one per cluster, or a single fleet-wide pool under index 0.
    std::map<std::size_t, std::vector<LoadSeries>> pools;
    if (c.centralized_scope == "fleet") {
      pools[0] = fleet;
    } else {
      for (const auto& [index, unused] : clusters.hyperparams)
        pools[index] = members_of(fleet, clusters.assignment, index);
    }
    std::vector<std::size_t> pool_ids;
    for (const auto& [index, unused] : pools) pool_ids.push_back(index);
    std::vector<std::map<std::string, SchemeResult>> pool_ilp(pool_ids.size());
    parallel_for(pool_ids.size(), opts.threads, [&](std::size_t p) {
      const auto& members = pools.at(pool_ids[p]);
      const Scaler pooled = fit_pooled_scaler(members, c.lookback, c.train_fraction);
      std::vector<ClientData> data;
      for (const auto& s : members)
        data.push_back(prepare_client(s, c.lookback, c.train_fraction, &pooled));
      const auto model = train_centralized(data, hp, base, ex.init_seed(pool_ids[p]),
                                           ex.centralized_seed(pool_ids[p]), c.train);
      for (const auto& d : data) {
        pool_ilp[p].emplace(d.client_id, predict_ilp(Scheme::kCentralized, model, d));
      }
    });
    std::map<std::string, SchemeResult> by_client;
    for (auto& m : pool_ilp) by_client.merge(m);

    std::map<std::size_t, ClusterResults> results;
    std::vector<std::size_t> cluster_ids;
    for (const auto& [index, unused] : clusters.hyperparams) {
      cluster_ids.push_back(index);
      for (const auto& s : members_of(fleet, clusters.assignment, index))
        results[index].ilp[Scheme::kCentralized].push_back(by_client.at(s.client_id));
    }
    std::vector<SchemeResult> alp(cluster_ids.size());
    parallel_for(cluster_ids.size(), opts.threads, [&](std::size_t i) {
      const std::size_t index = cluster_ids[i];
      if (c.centralized_alp == "sum") {
        alp[i] = predict_alp_by_sum(Scheme::kCentralized,
                                    results.at(index).ilp.at(Scheme::kCentralized),
                                    aggregate_subject(index));
        return;
      }
      const auto members = members_of(fleet, clusters.assignment, index);
      const LoadSeries total = aggregate(members, aggregate_subject(index));
      const auto data = prepare_client(total, c.lookback, c.train_fraction);
      const auto model = train_local(data, hp, base, ex.init_seed(index),
                                     ex.centralized_alp_seed(index), c.train);
      alp[i] = predict_alp_direct(Scheme::kCentralized, model, data);
    });
    for (std::size_t i = 0; i < cluster_ids.size(); ++i)
      results[cluster_ids[i]].alp[Scheme::kCentralized] = std::move(alp[i]);
    detail::log(opts, "centralize: " + std::to_string(pools.size()) + " pooled model(s), " +
                          to_string(hp));
    save_results(ex, Scheme::kCentralized, results);
    return results;
  });
}

inline json report_to_json(const ClusterReport& r) {
  auto block = [&](bool test) {
    json ilp, alp;
    for (const auto& [scheme, s] : r.schemes) {
      const auto& stats = test ? s.ilp_test : s.ilp_train;
      ilp["min"][to_string(scheme)] = stats.min;
      ilp["max"][to_string(scheme)] = stats.max;
      ilp["mean"][to_string(scheme)] = stats.mean;
      alp[to_string(scheme)] = test ? s.alp_test : s.alp_train;
    }
    return json{{"RMSE (ILP)", ilp}, {"RMSE (ALP)", alp}};
  };
  return {{"cluster", r.cluster},
          {"name", "Cluster " + std::to_string(r.cluster + 1)},
          {"members", r.members},
          {"test", block(true)},
          {"train", block(false)},
          {"consumption",
           {{"Max client energy consumption", r.max_client_consumption},
            {"Mean client energy consumption", r.mean_client_consumption},
            {"Max aggregate energy consumption", r.max_aggregate_consumption},
            {"Mean aggregate energy consumption", r.mean_aggregate_consumption}}}};
}

inline std::string report_to_csv(const std::vector<ClusterReport>& reports,
                                 const std::string& comment) {
  std::ostringstream out;
  out << "# " << comment << '\n';
  out << "cluster,dataset,metric,stat,federated,centralized,local,value\n";
  for (const auto& r : reports) {
    const auto id = std::to_string(r.cluster + 1);
    for (bool test : {true, false}) {
      const char* dataset = test ? "test" : "train";
      auto row = [&](const char* metric, const char* stat, auto pick) {
        out << id << ',' << dataset << ',' << metric << ',' << stat;
        for (Scheme s : kAllSchemes) out << ',' << format_double(pick(r.schemes.at(s)));
        out << ",\n";
      };
      auto ilp = [&](const SchemeSummary& s) -> const RmseStats& {
        return test ? s.ilp_test : s.ilp_train;
      };
      row("RMSE (ILP)", "min", [&](const SchemeSummary& s) { return ilp(s).min; });
      row("RMSE (ILP)", "max", [&](const SchemeSummary& s) { return ilp(s).max; });
      row("RMSE (ILP)", "mean", [&](const SchemeSummary& s) { return ilp(s).mean; });
      row("RMSE (ALP)", "-",
          [&](const SchemeSummary& s) { return test ? s.alp_test : s.alp_train; });
    }
    auto value = [&](const char* metric, double v) {
      out << id << ",all," << metric << ",-,,,," << format_double(v) << '\n';
    };
    value("Max client energy consumption", r.max_client_consumption);
    value("Mean client energy consumption", r.mean_client_consumption);
    value("Max aggregate energy consumption", r.max_aggregate_consumption);
    value("Mean aggregate energy consumption", r.mean_aggregate_consumption);
  }
  return out.str();
}

inline std::vector<ClusterReport> stage_report(const Experiment& ex, const RunOptions& opts = {}) {
  return detail::staged("report", [&] {
    const auto fleet = load_fleet(ex);
    const auto clusters = load_clusters(ex);
    std::map<std::size_t, ClusterResults> results;
    for (Scheme s : kAllSchemes) load_results(ex, s, results);
    std::vector<ClusterReport> reports;
    json arr = json::array();
    for (const auto& [index, unused] : clusters.hyperparams) {
      const auto members = members_of(fleet, clusters.assignment, index);
      reports.push_back(build_report(index, results.at(index), members));
      arr.push_back(report_to_json(reports.back()));
    }
    detail::write_json(ex.paths().report_json(), {{"config_hash", ex.hash()}, {"clusters", arr}});
    detail::write_text(ex.paths().report_csv(), report_to_csv(reports, ex.hash_comment()));
    detail::log(opts, "report: " + std::to_string(reports.size()) + " cluster tables written");
    return reports;
  });
}

// ----- clustering ablation ---------------------------------------------------

struct AblationCurve {
  std::size_t cluster = 0;
  HyperParams hyperparams;
  std::vector<std::string> members;
  std::vector<double> probe_losses;  // one per round
};

struct AblationResult {
  std::string probe;
  std::size_t rounds = 0;
  AblationCurve clustered;
  AblationCurve unclustered;
};

/// Federated training of the probe client's cluster versus one cluster
/// holding the whole fleet (fleet-modal hyperparameters). Both runs use the
/// same rounds, local epochs, seeds and removal disabled, so each curve
/// covers every round.
inline AblationResult run_clustering_ablation(const Experiment& ex,
                                              const RunOptions& opts = {}) {
  return detail::staged("ablate", [&] {
    const auto fleet = load_fleet(ex);
    const auto clusters = load_clusters(ex);
    const auto tuned = tuned_map(load_tuning(ex));
    AblationResult out;
    out.probe = ex.config().probe_client.empty() ? fleet.front().client_id
                                                 : ex.config().probe_client;
    const auto label = clusters.assignment.labels.find(out.probe);
    require(label != clusters.assignment.labels.end(), ErrorKind::kConfig,
            "probe client '" + out.probe + "' is not in the fleet");

    const HyperParams clustered_hp = clusters.hyperparams.at(label->second);
    const HyperParams fleet_hp = modal_hyperparams(tuned);
    out.rounds = ex.rounds_for(clustered_hp);

    auto run = [&](std::size_t cluster, const HyperParams& hp,
                   std::span<const LoadSeries> members) {
      AblationCurve curve{cluster, hp, {}, {}};
      for (const auto& s : members) curve.members.push_back(s.client_id);
      const auto fed = federate_cluster(ex, cluster, hp, members, out.rounds, opts, false);
      for (const auto& l : fed.logs) curve.probe_losses.push_back(l.client_losses.at(out.probe));
      return curve;
    };
    out.clustered = run(label->second, clustered_hp,
                        members_of(fleet, clusters.assignment, label->second));
    out.unclustered = run(0, fleet_hp, fleet);

    auto curve_json = [](const AblationCurve& c) {
      return json{{"cluster", c.cluster},
                  {"hyperparams", hyperparams_to_json(c.hyperparams)},
                  {"members", c.members},
                  {"probe_losses", c.probe_losses}};
    };
    detail::write_json(ex.paths().ablation_json(),
                       {{"config_hash", ex.hash()},
                        {"probe_client", out.probe},
                        {"rounds", out.rounds},
                        {"clustered", curve_json(out.clustered)},
                        {"unclustered", curve_json(out.unclustered)}});
    std::ostringstream csv;
    csv << "# " << ex.hash_comment() << "\nround,clustered,unclustered\n";
    for (std::size_t r = 0; r < out.rounds; ++r) {
      csv << r + 1 << ',' << format_double(out.clustered.probe_losses[r]) << ','
          << format_double(out.unclustered.probe_losses[r]) << '\n';
    }
    detail::write_text(ex.paths().ablation_csv(), csv.str());
    detail::log(opts, "ablate: probe " + out.probe + " final loss clustered " +
                          format_double(out.clustered.probe_losses.back()) + " vs unclustered " +
                          format_double(out.unclustered.probe_losses.back()));
    return out;
  });
}

/// synth -> tune -> cluster -> configured schemes -> report (when all three
/// schemes ran).
inline void run_pipeline(const Experiment& ex, const RunOptions& opts = {}) {
  stage_synth(ex, opts);
  stage_tune(ex, opts);
  stage_cluster(ex, opts);
  const auto& c = ex.config();
  if (c.runs(Scheme::kFederated)) stage_federate(ex, opts);
  if (c.runs(Scheme::kCentralized)) stage_centralize(ex, opts);
  if (c.runs(Scheme::kLocal)) stage_localize(ex, opts);
  if (c.runs(Scheme::kFederated) && c.runs(Scheme::kCentralized) && c.runs(Scheme::kLocal)) {
    stage_report(ex, opts);
  } else {
    detail::log(opts, "report: skipped (needs all three schemes)");
  }
}

}  // namespace fedload

#endif  // FEDLOAD_PIPELINE_HPP_

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

// Centralized and local baselines, one-step-ahead prediction in kWh for
// individual (ILP) and aggregate (ALP) load, and per-cluster report tables.

#ifndef FEDLOAD_SCHEMES_HPP_
#define FEDLOAD_SCHEMES_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedload/common.hpp"
#include "fedload/data.hpp"
#include "fedload/hypertune.hpp"
#include "fedload/neural.hpp"

namespace fedload {

enum class Scheme { kFederated, kCentralized, kLocal };
enum class Task { kIlp, kAlp };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::kFederated: return "federated";
    case Scheme::kCentralized: return "centralized";
    case Scheme::kLocal: return "local";
  }
  return "?";
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "federated") return Scheme::kFederated;
  if (s == "centralized") return Scheme::kCentralized;
  if (s == "local") return Scheme::kLocal;
  throw Error(ErrorKind::kConfig, "unknown scheme '" + s + "'");
}

inline const char* to_string(Task t) { return t == Task::kIlp ? "ILP" : "ALP"; }

inline constexpr Scheme kAllSchemes[] = {Scheme::kFederated, Scheme::kCentralized,
                                         Scheme::kLocal};

inline double rmse(std::span<const double> predicted, std::span<const double> actual) {
  return std::sqrt(mse_loss(predicted, actual));
}

struct Model {
  NetworkSpec spec;
  ParameterVector weights;
  std::vector<double> epoch_losses;
};

struct SplitPrediction {
  UtcHour first_time{};
  std::vector<double> predicted;  // kWh
  std::vector<double> actual;     // kWh
  double rmse = 0.0;

  bool operator==(const SplitPrediction&) const = default;
};

struct SchemeResult {
  Scheme scheme = Scheme::kLocal;
  Task task = Task::kIlp;
  std::string subject;  // client id, or the aggregate's id for ALP
  SplitPrediction train;
  SplitPrediction test;

  bool operator==(const SchemeResult&) const = default;
};

/// One-step-ahead predictions over a split, mapped back to kWh.
inline SplitPrediction predict_split(const Model& model, const WindowedDataset& split) {
  require(!split.empty(), "predict: empty split for '" + split.client_id + "'");
  require(model.spec.input_size == 1, ErrorKind::kShapeMismatch,
          "predict: model expects multivariate input");
  SplitPrediction out;
  out.first_time = split.first_target_time;
  const auto scaled = predict(model.weights, model.spec, split.batch());
  out.predicted.reserve(scaled.size());
  for (double y : scaled) out.predicted.push_back(split.scaler.invert(y));
  out.actual = split.raw_targets;
  out.rmse = rmse(out.predicted, out.actual);
  return out;
}

/// Individual load prediction for one client with the scheme's model. The
/// client's windows must be scaled the way the model was trained (per-client
/// for federated and local, pooled for centralized).
inline SchemeResult predict_ilp(Scheme scheme, const Model& model, const ClientData& client) {
  return SchemeResult{scheme, Task::kIlp, client.client_id,
                      predict_split(model, client.train), predict_split(model, client.test)};
}

namespace detail {

inline SplitPrediction sum_split(const std::vector<const SplitPrediction*>& parts) {
  SplitPrediction out;
  out.first_time = parts.front()->first_time;
  out.predicted.assign(parts.front()->predicted.size(), 0.0);
  out.actual.assign(parts.front()->actual.size(), 0.0);
  for (const auto* p : parts) {
    require(p->first_time == out.first_time && p->predicted.size() == out.predicted.size(),
            ErrorKind::kShapeMismatch, "ALP: client predictions are not aligned");
    for (std::size_t i = 0; i < out.predicted.size(); ++i) {
      out.predicted[i] += p->predicted[i];
      out.actual[i] += p->actual[i];
    }
  }
  out.rmse = rmse(out.predicted, out.actual);
  return out;
}

}  // namespace detail

/// Aggregate load prediction by summing per-client kWh predictions (and
/// actuals) in the given order.
inline SchemeResult predict_alp_by_sum(Scheme scheme, const std::vector<SchemeResult>& ilp,
                                       const std::string& subject = "aggregate") {
  require(!ilp.empty(), "ALP: no client predictions");
  std::vector<const SplitPrediction*> train, test;
  for (const auto& r : ilp) {
    require(r.task == Task::kIlp && r.scheme == scheme,
            "ALP: inputs must be ILP results of the same scheme");
    train.push_back(&r.train);
    test.push_back(&r.test);
  }
  return SchemeResult{scheme, Task::kAlp, subject, detail::sum_split(train),
                      detail::sum_split(test)};
}

/// Aggregate load prediction from a model trained on the aggregate series.
inline SchemeResult predict_alp_direct(Scheme scheme, const Model& model,
                                       const ClientData& aggregate_data) {
  auto r = predict_ilp(scheme, model, aggregate_data);
  r.task = Task::kAlp;
  return r;
}

inline Model train_local(const ClientData& client, const HyperParams& hp,
                         const NetworkSpec& base, std::uint64_t init_seed,
                         std::uint64_t seed, const TrainOptions& options) {
  const NetworkSpec spec = hp.apply(base);
  auto report = train(init_forecaster(spec, init_seed), spec, client.train.batch(),
                      hp.epochs, options, seed);
  return Model{spec, std::move(report.weights), std::move(report.epoch_losses)};
}

/// Scaler fitted on the union of every client's training span.
inline Scaler fit_pooled_scaler(std::span<const LoadSeries> fleet, std::size_t lookback,
                                double train_fraction) {
  require(!fleet.empty(), "pooled scaler: empty fleet");
  std::vector<double> pooled;
  for (const auto& s : fleet) {
    const auto span = training_span(s, lookback, train_fraction);
    pooled.insert(pooled.end(), span.begin(), span.end());
  }
  return Scaler::fit(pooled);
}

/// One model on the concatenation (in the given order) of every client's
/// training windows. Clients must share one scaler.
inline Model train_centralized(const std::vector<ClientData>& pool, const HyperParams& hp,
                               const NetworkSpec& base, std::uint64_t init_seed,
                               std::uint64_t seed, const TrainOptions& options) {
  require(!pool.empty(), "centralized: empty pool");
  std::vector<double> inputs, targets;
  const std::size_t lookback = pool.front().train.lookback;
  for (const auto& c : pool) {
    require(c.train.lookback == lookback, "centralized: clients disagree on lookback");
    require(c.scaler == pool.front().scaler,
            "centralized: clients must share the pooled scaler");
    inputs.insert(inputs.end(), c.train.inputs.begin(), c.train.inputs.end());
    targets.insert(targets.end(), c.train.targets.begin(), c.train.targets.end());
  }
  require(!targets.empty(), "centralized: empty pool");
  const NetworkSpec spec = hp.apply(base);
  auto report = train(init_forecaster(spec, init_seed), spec,
                      SampleBatch{inputs, targets, lookback}, hp.epochs, options, seed);
  return Model{spec, std::move(report.weights), std::move(report.epoch_losses)};
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct RmseStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;

  bool operator==(const RmseStats&) const = default;
};

inline RmseStats summarize(const std::vector<double>& values) {
  require(!values.empty(), "summarize: no values");
  RmseStats s{values.front(), values.front(), 0.0};
  double sum = 0.0;
  for (double v : values) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
  }
  s.mean = sum / static_cast<double>(values.size());
  return s;
}

struct SchemeSummary {
  RmseStats ilp_test;
  RmseStats ilp_train;
  double alp_test = 0.0;
  double alp_train = 0.0;

  bool operator==(const SchemeSummary&) const = default;
};

struct ClusterReport {
  std::size_t cluster = 0;
  std::vector<std::string> members;
  std::map<Scheme, SchemeSummary> schemes;
  double max_client_consumption = 0.0;
  double mean_client_consumption = 0.0;
  double max_aggregate_consumption = 0.0;
  double mean_aggregate_consumption = 0.0;

  bool operator==(const ClusterReport&) const = default;
};

struct ClusterResults {
  std::map<Scheme, std::vector<SchemeResult>> ilp;  // one per member client
  std::map<Scheme, SchemeResult> alp;
};

inline ClusterReport build_report(std::size_t cluster, const ClusterResults& results,
                                  std::span<const LoadSeries> members) {
  require(!members.empty(), "report: cluster has no members");
  ClusterReport report;
  report.cluster = cluster;
  for (const auto& s : members) report.members.push_back(s.client_id);
  for (Scheme scheme : kAllSchemes) {
    const auto ilp = results.ilp.find(scheme);
    const auto alp = results.alp.find(scheme);
    require(ilp != results.ilp.end() && !ilp->second.empty() && alp != results.alp.end(),
            std::string("report: missing results for scheme '") + to_string(scheme) + "'");
    std::vector<double> test, train;
    for (const auto& r : ilp->second) {
      test.push_back(r.test.rmse);
      train.push_back(r.train.rmse);
    }
    report.schemes[scheme] = SchemeSummary{summarize(test), summarize(train),
                                           alp->second.test.rmse, alp->second.train.rmse};
  }

  double client_max = 0.0, client_sum = 0.0;
  std::size_t client_count = 0;
  for (const auto& s : members) {
    for (double v : s.values) {
      client_max = std::max(client_max, v);
      client_sum += v;
    }
    client_count += s.values.size();
  }
  const LoadSeries total = aggregate(members);
  double agg_max = 0.0, agg_sum = 0.0;
  for (double v : total.values) {
    agg_max = std::max(agg_max, v);
    agg_sum += v;
  }
  report.max_client_consumption = client_max;
  report.mean_client_consumption = client_sum / static_cast<double>(client_count);
  report.max_aggregate_consumption = agg_max;
  report.mean_aggregate_consumption = agg_sum / static_cast<double>(total.values.size());
  return report;
}

}  // namespace fedload

#endif  // FEDLOAD_SCHEMES_HPP_

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

// Clustered federated training. One call to run_federation drives one
// cluster: every communication round broadcasts the cluster's global
// weights, lets each active client train locally, drops clients whose
// training loss has grown by more than `removal_factor` over `removal_lag`
// rounds, and replaces the global weights with the sample-weighted average
// of the remaining updates.

#ifndef FEDLOAD_FEDERATED_HPP_
#define FEDLOAD_FEDERATED_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedload/clustering.hpp"
#include "fedload/common.hpp"
#include "fedload/data.hpp"
#include "fedload/neural.hpp"

namespace fedload {

struct ClientState {
  std::string client_id;
  WindowedDataset train;
  WindowedDataset test;
  Scaler scaler;
  /// Entry r - 1 is the loss reported in round r.
  std::vector<double> loss_history;
  bool active = true;
  /// Local Adam moments carried from round to round.
  AdamState optimizer;
  std::uint64_t train_seed = 0;

  static ClientState from(const ClientData& data, std::uint64_t train_seed) {
    ClientState c;
    c.client_id = data.client_id;
    c.train = data.train;
    c.test = data.test;
    c.scaler = data.scaler;
    c.train_seed = train_seed;
    return c;
  }
};

struct WeightUpdate {
  std::string client_id;
  ParameterVector weights;
  std::size_t sample_count = 0;
  double loss = 0.0;
};

struct FederationConfig {
  std::size_t rounds = 30;
  std::size_t local_epochs = 5;
  double removal_factor = 1.6;
  std::size_t removal_lag = 20;
  bool removal_enabled = true;
  TrainOptions train;
  std::size_t threads = 1;
  /// Retain every round's aggregated updates in the result.
  bool keep_updates = false;

  void validate() const {
    require(rounds >= 1, "federation: rounds must be at least 1");
    require(local_epochs >= 1, "federation: local epochs must be at least 1");
    require(removal_factor > 1.0, "federation: removal factor must exceed 1");
    require(removal_lag >= 1, "federation: removal lag must be at least 1");
  }
};

struct RemovalRecord {
  std::size_t round = 0;
  std::string client_id;
};

struct ServerState {
  std::size_t cluster = 0;
  ParameterVector global_weights;
  std::size_t round = 0;
  std::size_t total_samples = 0;
  std::vector<RemovalRecord> removals;
};

struct RoundLog {
  std::size_t cluster = 0;
  std::size_t round = 0;
  std::map<std::string, double> client_losses;
  std::vector<std::string> removed;
  std::size_t total_samples = 0;
  std::string checksum;
  std::string error;

  bool operator==(const RoundLog&) const = default;
};

struct FederationResult {
  ServerState server;
  std::vector<RoundLog> logs;
  std::vector<ClientState> clients;
  /// Per round, the updates that entered the average (keep_updates only).
  std::vector<std::vector<WeightUpdate>> updates;
  std::string error;

  bool ok() const { return error.empty(); }
};

/// Optional callbacks for simulations that manipulate client data.
struct FederationHooks {
  /// Called for every active client before its local training in `round`.
  std::function<void(std::size_t round, ClientState&)> before_local_round;
};

/// Aggregation coefficients n_c / n in input order.
inline std::vector<double> fedavg_coefficients(const std::vector<WeightUpdate>& updates) {
  require(!updates.empty(), "fedavg: no updates");
  std::size_t n = 0;
  for (const auto& u : updates) n += u.sample_count;
  std::vector<double> out;
  for (const auto& u : updates)
    out.push_back(static_cast<double>(u.sample_count) / static_cast<double>(n));
  return out;
}

/// w = sum_c (n_c / n) * w_c.
///
/// Evaluated as (sum_c n_c * w_c) / n in double-double arithmetic (exact
/// products via fma, compensated sums, one corrected division), so a lone
/// update or a set of identical updates is returned unchanged and
/// integer-valued examples come out exact.
inline ParameterVector fedavg(const std::vector<WeightUpdate>& updates) {
  require(!updates.empty(), "fedavg: no updates");
  const Manifest& manifest = updates.front().weights.manifest();
  std::size_t n = 0;
  for (const auto& u : updates) {
    require(u.weights.manifest() == manifest, ErrorKind::kShapeMismatch,
            "fedavg: update from '" + u.client_id + "' has a different manifest");
    require(u.sample_count > 0, "fedavg: update from '" + u.client_id + "' has n_c = 0");
    require(all_finite(u.weights.values()), ErrorKind::kNonFinite,
            "fedavg: update from '" + u.client_id + "' has non-finite weights");
    n += u.sample_count;
  }
  const double total = static_cast<double>(n);
  std::vector<double> out(manifest_size(manifest));
  for (std::size_t j = 0; j < out.size(); ++j) {
    double sum = 0.0, err = 0.0;
    for (const auto& u : updates) {
      const double nc = static_cast<double>(u.sample_count);
      const double w = u.weights[j];
      const double p = nc * w;
      const double p_err = std::fma(nc, w, -p);
      const double t = sum + p;
      const double z = t - sum;
      err += ((sum - (t - z)) + (p - z)) + p_err;
      sum = t;
    }
    const double hi = sum + err;
    const double lo = err - (hi - sum);
    double q = hi / total;
    q += (std::fma(-q, total, hi) + lo) / total;
    out[j] = q;
  }
  return ParameterVector(std::move(out), manifest);
}

struct LocalRoundResult {
  WeightUpdate update;
  AdamState optimizer;
  double loss = 0.0;
};

/// Loads the broadcast weights, runs `local_epochs` epochs on the client's
/// training windows (continuing its optimizer state and epoch count), and
/// reports the final weights, n_c and the last epoch's training MSE.
inline LocalRoundResult local_round(const ClientState& client,
                                    const ParameterVector& global_weights,
                                    const NetworkSpec& spec, std::size_t local_epochs,
                                    std::uint64_t seed, const TrainOptions& options) {
  require(client.active, "local_round: client '" + client.client_id + "' was removed");
  require(local_epochs >= 1, "local_round: local epochs must be at least 1");
  require(!client.train.empty(), "local_round: client '" + client.client_id +
                                     "' has no training windows");
  ParameterVector weights = global_weights;
  AdamState optimizer = client.optimizer.first_moment.empty()
                            ? AdamState::zeros(weights.size(), options.adam)
                            : client.optimizer;
  std::vector<double> losses;
  train_epochs(weights, optimizer, spec, client.train.batch(), local_epochs,
               client.loss_history.size() * local_epochs, options, seed, losses);
  const double loss = losses.back();
  return {WeightUpdate{client.client_id, std::move(weights), client.train.size(), loss},
          std::move(optimizer), loss};
}

/// Active clients whose loss in `round` exceeds factor * their loss in
/// round - lag. Needs round - lag >= 1, so nothing is flagged before
/// round lag + 1.
inline std::set<std::string> detect_deterrents(const std::vector<ClientState>& clients,
                                               std::size_t round, double factor,
                                               std::size_t lag) {
  std::set<std::string> flagged;
  if (round <= lag) return flagged;
  for (const auto& c : clients) {
    if (!c.active || c.loss_history.size() < round) continue;
    const double now = c.loss_history[round - 1];
    const double before = c.loss_history[round - lag - 1];
    if (now > factor * before) flagged.insert(c.client_id);
  }
  return flagged;
}

inline FederationResult run_federation(const ClusterModel& cluster,
                                       std::vector<ClientState> clients,
                                       const FederationConfig& config,
                                       const NetworkSpec& spec,
                                       const FederationHooks& hooks = {}) {
  config.validate();
  require(!clients.empty(), "federation: cluster " + std::to_string(cluster.index) +
                                " has no clients");
  check_compatible(cluster.global_weights, spec);
  std::sort(clients.begin(), clients.end(),
            [](const ClientState& a, const ClientState& b) { return a.client_id < b.client_id; });

  FederationResult result;
  ServerState& server = result.server;
  server.cluster = cluster.index;
  server.global_weights = cluster.global_weights;

  for (std::size_t round = 1; round <= config.rounds; ++round) {
    server.round = round;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < clients.size(); ++i)
      if (clients[i].active) active.push_back(i);

    if (hooks.before_local_round) {
      for (auto i : active) hooks.before_local_round(round, clients[i]);
    }

    std::vector<LocalRoundResult> local(active.size());
    parallel_for(active.size(), config.threads, [&](std::size_t a) {
      const ClientState& c = clients[active[a]];
      local[a] = local_round(c, server.global_weights, spec, config.local_epochs,
                             c.train_seed, config.train);
    });

    RoundLog log;
    log.cluster = cluster.index;
    log.round = round;
    for (std::size_t a = 0; a < active.size(); ++a) {
      ClientState& c = clients[active[a]];
      c.loss_history.push_back(local[a].loss);
      c.optimizer = std::move(local[a].optimizer);
      log.client_losses[c.client_id] = local[a].loss;
    }

    std::set<std::string> flagged;
    if (config.removal_enabled) {
      flagged = detect_deterrents(clients, round, config.removal_factor, config.removal_lag);
    }
    for (auto& c : clients) {
      if (flagged.count(c.client_id) != 0) {
        c.active = false;
        server.removals.push_back({round, c.client_id});
        log.removed.push_back(c.client_id);
      }
    }

    std::vector<WeightUpdate> kept;
    for (auto& l : local) {
      if (flagged.count(l.update.client_id) == 0) kept.push_back(std::move(l.update));
    }
    if (kept.empty()) {
      log.error = "all clients removed";
      result.error = "cluster " + std::to_string(cluster.index) +
                     ": all clients removed in round " + std::to_string(round);
      result.logs.push_back(std::move(log));
      break;
    }
    for (const auto& u : kept) {
      if (u.weights.manifest() != server.global_weights.manifest()) {
        log.error = "manifest divergence";
        result.error = "cluster " + std::to_string(cluster.index) + ": client '" +
                       u.client_id + "' returned a diverging manifest";
        result.logs.push_back(std::move(log));
        result.clients = std::move(clients);
        return result;
      }
    }

    server.global_weights = fedavg(kept);
    server.total_samples = 0;
    for (const auto& u : kept) server.total_samples += u.sample_count;
    log.total_samples = server.total_samples;
    log.checksum = to_hex(server.global_weights.checksum());
    result.logs.push_back(std::move(log));
    if (config.keep_updates) result.updates.push_back(std::move(kept));
  }
  result.clients = std::move(clients);
  return result;
}

}  // namespace fedload

#endif  // FEDLOAD_FEDERATED_HPP_

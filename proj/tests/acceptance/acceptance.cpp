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

// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
// below. Exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fedload/fedload.hpp"
#include "oracles.hpp"

namespace fedload {
namespace {

namespace fs = std::filesystem;

// Criterion 1
constexpr std::size_t kGradientNets = 20;
constexpr std::size_t kMaxGradientParams = 200;
constexpr std::size_t kMaxGradientBatch = 8;
constexpr double kFiniteDifferenceStep = 1e-5;
constexpr double kGradientRelTol = 1e-4;
constexpr double kGradientDenomFloor = 1e-8;
// Criterion 2
constexpr double kCoefficientSumTol = 1e-12;
constexpr double kMeanTol = 1e-12;
// Criterion 3
constexpr double kFederationLocalTol = 1e-9;
// Criterion 4
constexpr std::size_t kDeterrentRounds = 60;
constexpr std::size_t kRemovalWindowLo = 20;
constexpr std::size_t kRemovalWindowHi = 60;
constexpr double kRequiredRmseGain = 0.10;
// Criteria 6 and 7
constexpr std::size_t kSeeds = 5;
constexpr double kFederatedOverLocalCap = 1.5;
// Criterion 8
constexpr double kIdentityTol = 1e-12;

// Runtime budgets, seconds.
constexpr double kBudget1 = 30, kBudget2 = 1, kBudget3 = 120, kBudget4 = 600, kBudget5 = 5,
                 kBudget6 = 1200, kBudget7 = 1800, kBudget8 = 1;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, Verdict v, double secs, double budget) {
  if (secs >= budget) {
    v.pass = false;
    v.detail += "; over the time budget";
  }
  if (!v.pass) ++failures;
  std::printf("criterion %d %s  %s: %s (%.1f s, budget %.0f s)\n", id, v.pass ? "PASS" : "FAIL",
              name.c_str(), v.detail.c_str(), secs, budget);
  std::fflush(stdout);
}

void run(int id, const std::string& name, double budget, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("threw: ") + e.what()};
  }
  report(id, name, v, seconds_since(t0), budget);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> uniform_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// ----- 1 ---------------------------------------------------------------------

double batch_loss(const ParameterVector& w, const NetworkSpec& spec, const SampleBatch& b) {
  return mse_loss(predict(w, spec, b), b.targets);
}

Verdict gradient_oracle() {
  double worst = 0.0;
  std::size_t components = 0;
  for (std::size_t net = 0; net < kGradientNets; ++net) {
    Rng rng(derive_seed(1, "gradient-net", net));
    const NetworkSpec spec{1, 1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(5), 1};
    auto w = init_forecaster(spec, derive_seed(1, "gradient-init", net));
    if (w.size() > kMaxGradientParams) return {false, "network over the parameter cap"};
    const std::size_t n = 1 + rng.below(kMaxGradientBatch), len = 2 + rng.below(6);
    const auto inputs = uniform_values(rng, n * len, 0.0, 1.0);
    const auto targets = uniform_values(rng, n, 0.0, 1.0);
    const SampleBatch batch{inputs, targets, len};
    const auto grad = compute_gradients(w, spec, batch);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double w0 = w[i];
      w[i] = w0 + kFiniteDifferenceStep;
      const double up = batch_loss(w, spec, batch);
      w[i] = w0 - kFiniteDifferenceStep;
      const double down = batch_loss(w, spec, batch);
      w[i] = w0;
      const double numeric = (up - down) / (2 * kFiniteDifferenceStep);
      const double denom =
          std::max({std::abs(grad[i]), std::abs(numeric), kGradientDenomFloor});
      worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
      ++components;
    }
  }
  return {worst < kGradientRelTol, std::to_string(components) + " components over " +
                                       std::to_string(kGradientNets) +
                                       " nets, worst relative error " + fmt("%.2e", worst)};
}

// ----- 2 ---------------------------------------------------------------------

ParameterVector random_params(const Manifest& m, Rng& rng) {
  auto p = ParameterVector::zeros(m);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(-3.0, 3.0);
  return p;
}

Verdict fedavg_algebra() {
  const Manifest m = make_manifest(NetworkSpec{1, 3, 4, 3, 1});
  Rng rng(2);
  std::vector<std::string> failed;
  double worst_sum = 0.0, worst_mean = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t clients = 1 + rng.below(6);
    std::vector<WeightUpdate> updates, equal;
    for (std::size_t c = 0; c < clients; ++c) {
      auto w = random_params(m, rng);
      updates.push_back({"c" + std::to_string(c), w, 1 + rng.below(500), 0.0});
      equal.push_back({"c" + std::to_string(c), std::move(w), 37, 0.0});
    }
    if (fedavg({updates[0]}) != updates[0].weights) failed.push_back("single-update identity");

    const auto mean = fedavg(equal);
    for (std::size_t j = 0; j < mean.size(); ++j) {
      double plain = 0.0;
      for (const auto& u : equal) plain += u.weights[j];
      plain /= static_cast<double>(clients);
      worst_mean = std::max(worst_mean, std::abs(mean[j] - plain));
    }

    double sum = 0.0;
    for (double k : fedavg_coefficients(updates)) sum += k;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

    auto shuffled = updates;
    std::reverse(shuffled.begin(), shuffled.end());
    if (clients > 2) std::swap(shuffled[0], shuffled[clients / 2]);
    if (fedavg(shuffled) != fedavg(updates)) failed.push_back("permutation invariance");
  }
  if (worst_mean > kMeanTol) failed.push_back("equal-count mean");
  if (worst_sum > kCoefficientSumTol) failed.push_back("coefficient sum");

  std::vector<WeightUpdate> hand;
  const std::size_t n[] = {10, 30, 60};
  for (int c = 0; c < 3; ++c) {
    auto w = ParameterVector::zeros(m);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = c + 1.0;
    hand.push_back({"h" + std::to_string(c), std::move(w), n[c], 0.0});
  }
  const auto avg = fedavg(hand);
  for (std::size_t j = 0; j < avg.size(); ++j)
    if (avg[j] != 2.5) {
      failed.push_back("hand example");
      break;
    }
  std::string detail = "50 random trials, |sum(coef) - 1| <= " + fmt("%.1e", worst_sum) +
                       ", mean error " + fmt("%.1e", worst_mean) + ", hand example 2.5 exact";
  if (!failed.empty()) detail = "failed: " + failed.front();
  return {failed.empty(), detail};
}

// ----- 3 ---------------------------------------------------------------------

Verdict federation_equals_local() {
  FleetSpec fleet;
  fleet.archetypes = {{0.3, 1.5, 19, 0.8, 0.08, 1}};
  fleet.hours = 24 * 14;
  const auto client = prepare_client(synthesize_fleet(fleet).front(), 24, 0.75);
  const NetworkSpec base;  // default LSTM width
  const HyperParams hp{32, 85, 60};
  const NetworkSpec spec = hp.apply(base);
  constexpr std::uint64_t kInit = 11, kTrain = 12;

  FederationConfig cfg;
  cfg.local_epochs = 5;
  cfg.rounds = hp.epochs / cfg.local_epochs;
  const ClusterModel cluster{0, {client.client_id}, hp, init_forecaster(spec, kInit)};
  const auto fed = run_federation(cluster, {ClientState::from(client, kTrain)}, cfg, spec);
  const auto local = train_local(client, hp, base, kInit, kTrain, {});
  double worst = 0.0;
  for (std::size_t i = 0; i < local.weights.size(); ++i)
    worst = std::max(worst, std::abs(fed.server.global_weights[i] - local.weights[i]));
  return {fed.ok() && worst <= kFederationLocalTol,
          std::to_string(cfg.rounds) + " rounds x " + std::to_string(cfg.local_epochs) +
              " epochs vs " + std::to_string(hp.epochs) + " local epochs, max |dw| " +
              fmt("%.1e", worst)};
}

// ----- 4 ---------------------------------------------------------------------

// The deterrent: fresh random targets every round, drawn with a spread that
// grows each round, so its training loss keeps getting worse.
FederationHooks deterrent(const std::string& id) {
  FederationHooks h;
  h.before_local_round = [id](std::size_t round, ClientState& c) {
    if (c.client_id != id) return;
    Rng rng(derive_seed(4, "deterrent", round));
    const double spread = 1.0 + 0.05 * static_cast<double>(round);
    for (auto& t : c.train.targets) t = spread * rng.uniform();
  };
  return h;
}

Verdict deterrent_removal() {
  FleetSpec fleet;
  fleet.archetypes = {{0.3, 1.5, 19, 1.0, 0.05, 5}};
  fleet.hours = 24 * 14;
  fleet.seed = 4;
  std::vector<ClientData> data;
  std::vector<ClientState> clients;
  for (const auto& s : synthesize_fleet(fleet)) {
    data.push_back(prepare_client(s, 24, 0.75));
    clients.push_back(ClientState::from(data.back(), derive_seed(derive_seed(4, "train"), s.client_id)));
  }
  const std::string bad = clients[2].client_id;
  NetworkSpec base;
  base.lstm_hidden = 8;
  const HyperParams hp{8, 16, kDeterrentRounds * 5};
  const NetworkSpec spec = hp.apply(base);
  ClusterModel cluster{0, {}, hp, init_forecaster(spec, derive_seed(4, "init"))};
  for (const auto& c : clients) cluster.members.push_back(c.client_id);

  FederationConfig cfg;
  cfg.rounds = kDeterrentRounds;
  cfg.local_epochs = 5;
  cfg.removal_factor = 1.6;
  cfg.removal_lag = 20;
  cfg.train.adam.learning_rate = 1e-2;

  auto honest_rmse = [&](const ParameterVector& w) {
    double total = 0.0;
    for (const auto& d : data) {
      if (d.client_id == bad) continue;
      total += predict_ilp(Scheme::kFederated, Model{spec, w, {}}, d).test.rmse;
    }
    return total / static_cast<double>(data.size() - 1);
  };

  const auto with = run_federation(cluster, clients, cfg, spec, deterrent(bad));
  cfg.removal_enabled = false;
  const auto without = run_federation(cluster, clients, cfg, spec, deterrent(bad));
  if (!with.ok() || !without.ok()) return {false, "federation ended early"};

  const auto& removals = with.server.removals;
  const bool removed_alone = removals.size() == 1 && removals[0].client_id == bad;
  const std::size_t round = removals.empty() ? 0 : removals[0].round;
  const bool in_window = round >= kRemovalWindowLo && round <= kRemovalWindowHi;
  const double a = honest_rmse(with.server.global_weights);
  const double b = honest_rmse(without.server.global_weights);
  const double gain = 1.0 - a / b;
  std::string detail = removed_alone ? "deterrent removed at round " + std::to_string(round)
                                     : std::to_string(removals.size()) + " removals";
  detail += ", honest test RMSE " + fmt("%.4f", a) + " vs " + fmt("%.4f", b) +
            " kWh without removal (" + fmt("%.1f", 100 * gain) + "% lower)";
  return {removed_alone && in_window && gain >= kRequiredRmseGain, detail};
}

// ----- 5 ---------------------------------------------------------------------

Verdict clustering_recovery() {
  const auto grid = HyperGrid::defaults();
  PointSet points;
  std::map<std::string, std::size_t> truth;
  std::map<std::string, HyperParams> tuned;
  std::size_t n = 0, row = 0;
  for (const auto& r : testing::reference_clusters()) {
    for (std::size_t i = 0; i < r.clients; ++i) {
      char id[16];
      std::snprintf(id, sizeof(id), "c%03zu", n++);
      const auto v = hyperparam_vector(r.params, grid);
      points[id] = {v.begin(), v.end()};
      truth[id] = row;
      tuned[id] = r.params;
    }
    ++row;
  }
  const auto a = kmeans(points, 5, derive_seed(5, "kmeans"), 10);
  const double ari = testing::adjusted_rand_index(a.labels, truth);
  const auto consolidated = consolidate_hyperparams(a, tuned);
  std::size_t verbatim = 0;
  for (const auto& r : testing::reference_clusters())
    for (const auto& [label, hp] : consolidated)
      if (hp == r.params && a.members(label).size() == r.clients) ++verbatim;
  return {ari == 1.0 && verbatim == 5,
          "ARI " + fmt("%.6f", ari) + ", " + std::to_string(verbatim) + "/5 rows reproduced"};
}

// ----- 6, 7, 9 -----------------------------------------------------------------

const fs::path kScratch = fs::temp_directory_path() / "fedload_acceptance";

// Two archetypes with peaks twelve hours apart: small, quiet morning users
// and large, noisy evening users. Every scheme trains full-batch, so each
// epoch is one optimizer step for all of them.
ExperimentConfig heterogeneous(std::uint64_t seed, const std::string& dir) {
  ExperimentConfig c;
  c.seed = seed;
  c.output_dir = (kScratch / dir).string();
  c.fleet.hours = 24 * 14;
  c.fleet.seed = seed;
  c.fleet.archetypes = {{0.2, 0.8, 7, 1.0, 0.03, 10}, {1.5, 6.0, 19, 1.0, 0.3, 10}};
  c.lstm_hidden = 8;
  c.train.adam.learning_rate = 1e-2;
  c.train.full_batch_limit = 1 << 20;
  c.grid = {{8, 16}, {8, 16}, {30, 150}};
  c.clusters.k = 2;
  c.probe_client = synthetic_client_id(0, 0);
  return c;
}

struct SeedOutcome {
  double probe_clustered = 0, probe_unclustered = 0;
  double federated = 0, centralized = 0, local = 0;
  double shared_secs = 0, ablation_secs = 0, schemes_secs = 0;
};

// Mean ILP test RMSE over every client of the fleet, per scheme.
std::map<Scheme, double> fleet_means(const std::vector<ClusterReport>& reports) {
  std::map<Scheme, double> out;
  std::size_t clients = 0;
  for (const auto& r : reports) {
    clients += r.members.size();
    for (const auto& [s, sum] : r.schemes)
      out[s] += sum.ilp_test.mean * static_cast<double>(r.members.size());
  }
  for (auto& [s, v] : out) v /= static_cast<double>(clients);
  return out;
}

std::vector<SeedOutcome> heterogeneous_runs() {
  std::vector<SeedOutcome> out;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const Experiment ex(heterogeneous(100 + s, "seed" + std::to_string(s)));
    SeedOutcome o;
    auto t0 = Clock::now();
    stage_synth(ex);
    stage_tune(ex);
    stage_cluster(ex);
    o.shared_secs = seconds_since(t0);
    t0 = Clock::now();
    const auto ab = run_clustering_ablation(ex);
    o.probe_clustered = ab.clustered.probe_losses.back();
    o.probe_unclustered = ab.unclustered.probe_losses.back();
    o.ablation_secs = seconds_since(t0);
    t0 = Clock::now();
    stage_federate(ex);
    stage_centralize(ex);
    stage_localize(ex);
    const auto means = fleet_means(stage_report(ex));
    o.federated = means.at(Scheme::kFederated);
    o.centralized = means.at(Scheme::kCentralized);
    o.local = means.at(Scheme::kLocal);
    o.schemes_secs = seconds_since(t0);
    std::printf("  seed %zu: probe loss %.5f clustered vs %.5f unclustered; ILP RMSE "
                "federated %.4f, centralized %.4f, local %.4f\n",
                s, o.probe_clustered, o.probe_unclustered, o.federated, o.centralized, o.local);
    std::fflush(stdout);
    out.push_back(o);
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism() {
  const Experiment a(heterogeneous(100, "threads1"));
  const Experiment b(heterogeneous(100, "threads4"));
  run_pipeline(a, {1, nullptr});
  run_pipeline(b, {4, nullptr});
  std::vector<std::string> differ;
  for (auto path : {&ArtifactPaths::report_json, &ArtifactPaths::report_csv,
                    &ArtifactPaths::round_log, &ArtifactPaths::tuning, &ArtifactPaths::clusters}) {
    const auto pa = (a.paths().*path)(), pb = (b.paths().*path)();
    const auto x = slurp(pa);
    if (x.empty() || x != slurp(pb)) differ.push_back(pa.filename().string());
  }
  return {differ.empty(), differ.empty()
                              ? "reports, round log, tuning and clusters byte-identical at 1 and "
                                "4 threads"
                              : "differs: " + differ.front()};
}

// ----- 8 ---------------------------------------------------------------------

Verdict metric_identities() {
  Rng rng(8);
  std::vector<std::string> failed;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    const auto p = uniform_values(rng, n, 0.0, 5.0), t = uniform_values(rng, n, 0.0, 5.0);
    const double r = rmse(p, t);
    if (std::abs(r * r - mse_loss(p, t)) > kIdentityTol) failed.push_back("rmse^2 = mse");
    const auto series = uniform_values(rng, 10 + n, 0.0, 4.0);
    const Scaler s = Scaler::fit(series);
    for (double v : series)
      if (std::abs(s.invert(s.apply(v)) - v) > kIdentityTol) failed.push_back("scaler");
  }

  FleetSpec spec;
  spec.archetypes = {{0.3, 1.2, 18, 0.8, 0.1, 3}};
  spec.hours = 100;
  const auto fleet = synthesize_fleet(spec);
  const auto c = prepare_client(fleet[0], 24, 0.75);
  if (c.train.size() + c.test.size() != 76) failed.push_back("window count");
  if (c.train.size() != 57 || c.test.size() != 19) failed.push_back("split sizes");

  std::vector<SchemeResult> ilp;
  for (const auto& s : fleet) {
    const auto d = prepare_client(s, 24, 0.75);
    SchemeResult r{Scheme::kLocal, Task::kIlp, d.client_id, {}, {}};
    r.train = {d.train.first_target_time, uniform_values(rng, d.train.size(), 0, 2),
               d.train.raw_targets, 0};
    r.test = {d.test.first_target_time, uniform_values(rng, d.test.size(), 0, 2),
              d.test.raw_targets, 0};
    ilp.push_back(r);
  }
  const auto alp = predict_alp_by_sum(Scheme::kLocal, ilp);
  for (std::size_t i = 0; i < alp.test.predicted.size(); ++i) {
    double sum = 0.0;
    for (const auto& r : ilp) sum += r.test.predicted[i];
    if (alp.test.predicted[i] != sum) {
      failed.push_back("ALP summation");
      break;
    }
  }
  return {failed.empty(), failed.empty() ? "rmse/mse, scaler round trip, 76 -> 57/19 windows, "
                                           "ALP summation"
                                         : "failed: " + failed.front()};
}

}  // namespace
}  // namespace fedload

int main() {
  using namespace fedload;
  fs::remove_all(kScratch);
  run(1, "gradient oracle", kBudget1, gradient_oracle);
  run(2, "FedAvg algebra", kBudget2, fedavg_algebra);
  run(3, "federation equals local", kBudget3, federation_equals_local);
  run(4, "deterrent removal", kBudget4, deterrent_removal);
  run(5, "clustering recovery", kBudget5, clustering_recovery);

  double c6_secs = 0.0;
  std::vector<SeedOutcome> runs;
  std::string error;
  try {
    runs = heterogeneous_runs();
  } catch (const std::exception& e) {
    error = e.what();
  }
  if (runs.size() == kSeeds) {
    std::vector<double> probe_gap, fed_gap, fed_ratio;
    double secs6 = 0, secs7 = 0;
    for (const auto& o : runs) {
      probe_gap.push_back(o.probe_clustered - o.probe_unclustered);
      fed_gap.push_back(o.federated - o.centralized);
      fed_ratio.push_back(o.federated / o.local);
      secs6 += o.shared_secs + o.ablation_secs;
      secs7 += o.shared_secs + o.schemes_secs;
    }
    c6_secs = secs6;
    const double g6 = median(probe_gap), g7 = median(fed_gap), r7 = median(fed_ratio);
    report(6, "clustering ablation", {g6 < 0.0, "median clustered - unclustered probe loss " +
                                                    fmt("%.2e", g6) + " over 5 seeds"},
           secs6, kBudget6);
    report(7, "federated vs centralized and local",
           {g7 < 0.0 && r7 <= kFederatedOverLocalCap,
            "median federated - centralized ILP RMSE " + fmt("%.4f", g7) +
                " kWh, median federated / local " + fmt("%.3f", r7)},
           secs7, kBudget7);
  } else {
    report(6, "clustering ablation", {false, "threw: " + error}, 0, kBudget6);
    report(7, "federated vs centralized and local", {false, "threw: " + error}, 0, kBudget7);
  }

  run(8, "metric identities", kBudget8, metric_identities);
  run(9, "full-run determinism", c6_secs > 0 ? 2 * c6_secs : kBudget6 * 2, determinism);
  fs::remove_all(kScratch);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

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

// fedload command line: one subcommand per pipeline stage plus `pipeline`
// for the whole run. Exit codes: 0 success, 1 config error, 2 stage failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedload/fedload.hpp"

namespace {

using fedload::ExperimentConfig;

constexpr int kExitConfig = 1;
constexpr int kExitStage = 2;

/// Command-line overrides. Unset options leave the config file's value.
struct Overrides {
  std::optional<std::string> csv, output_dir, probe, scope, alp, cluster_mode;
  std::optional<std::uint64_t> seed, fleet_seed;
  std::optional<std::size_t> lookback, hidden, rounds, local_epochs, removal_lag, k, k_max,
      restarts, fast_cap, hours, minibatch, full_batch_limit;
  std::optional<double> train_fraction, removal_factor, drop_threshold, lr;
  std::optional<std::vector<std::size_t>> fc1, fc2, epochs;
  std::optional<std::vector<std::string>> schemes;
  bool fast = false, no_removal = false, traces = false;
};

void add_options(CLI::App& app, Overrides& o, std::string& config_path, std::size_t& threads) {
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  app.add_option("--output-dir", o.output_dir, "artifact directory");
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--csv", o.csv, "load CSV instead of a synthetic fleet");
  app.add_option("--fleet-seed", o.fleet_seed, "synthetic fleet seed");
  app.add_option("--hours", o.hours, "synthetic series length in hours");
  app.add_option("--lookback", o.lookback, "look-back window in hours");
  app.add_option("--train-fraction", o.train_fraction, "chronological train share");
  app.add_option("--lstm-hidden", o.hidden, "LSTM hidden units");
  app.add_option("--learning-rate", o.lr, "Adam learning rate");
  app.add_option("--minibatch", o.minibatch, "minibatch size");
  app.add_option("--full-batch-limit", o.full_batch_limit, "full-batch training up to this many windows");
  app.add_option("--grid-fc1", o.fc1, "fc1 grid values")->delimiter(',');
  app.add_option("--grid-fc2", o.fc2, "fc2 grid values")->delimiter(',');
  app.add_option("--grid-epochs", o.epochs, "epoch grid values")->delimiter(',');
  app.add_flag("--fast-tuning", o.fast, "cap epochs during the grid search");
  app.add_option("--fast-epoch-cap", o.fast_cap, "epoch cap for --fast-tuning");
  app.add_option("--cluster-mode", o.cluster_mode, "fixed or elbow")
      ->check(CLI::IsMember({"fixed", "elbow"}));
  app.add_option("--k", o.k, "cluster count in fixed mode");
  app.add_option("--k-max", o.k_max, "largest k on the inertia curve");
  app.add_option("--drop-threshold", o.drop_threshold, "elbow relative-drop threshold");
  app.add_option("--restarts", o.restarts, "k-means restarts");
  app.add_option("--rounds", o.rounds, "communication rounds (0: ceil(epochs / local epochs))");
  app.add_option("--local-epochs", o.local_epochs, "local epochs per round");
  app.add_option("--removal-factor", o.removal_factor, "deterrent loss growth factor");
  app.add_option("--removal-lag", o.removal_lag, "deterrent look-back in rounds");
  app.add_flag("--no-removal", o.no_removal, "disable deterrent removal");
  app.add_option("--schemes", o.schemes, "schemes to run")
      ->delimiter(',')
      ->check(CLI::IsMember({"federated", "centralized", "local"}));
  app.add_option("--centralized-scope", o.scope, "cluster or fleet")
      ->check(CLI::IsMember({"cluster", "fleet"}));
  app.add_option("--centralized-alp", o.alp, "aggregate or sum")
      ->check(CLI::IsMember({"aggregate", "sum"}));
  app.add_option("--probe", o.probe, "probe client for the clustering ablation");
  app.add_flag("--traces", o.traces, "write per-prediction CSV traces");
}

template <typename T, typename U>
void apply(const std::optional<T>& v, U& target) {
  if (v) target = *v;
}

ExperimentConfig resolve(const std::string& path, const Overrides& o) {
  ExperimentConfig c = path.empty() ? ExperimentConfig{} : fedload::load_config(path);
  if (const char* env = std::getenv("FEDLOAD_OUTPUT_DIR"); env != nullptr && *env != '\0')
    c.output_dir = env;
  apply(o.output_dir, c.output_dir);
  apply(o.seed, c.seed);
  apply(o.csv, c.csv_path);
  apply(o.fleet_seed, c.fleet.seed);
  apply(o.hours, c.fleet.hours);
  apply(o.lookback, c.lookback);
  apply(o.train_fraction, c.train_fraction);
  apply(o.hidden, c.lstm_hidden);
  apply(o.lr, c.train.adam.learning_rate);
  apply(o.minibatch, c.train.minibatch_size);
  apply(o.full_batch_limit, c.train.full_batch_limit);
  apply(o.fc1, c.grid.fc1);
  apply(o.fc2, c.grid.fc2);
  apply(o.epochs, c.grid.epochs);
  if (o.fast) c.fast_tuning = true;
  apply(o.fast_cap, c.fast_epoch_cap);
  if (o.cluster_mode) {
    c.clusters.mode = *o.cluster_mode == "elbow" ? fedload::ClusterSelection::Mode::kElbow
                                                 : fedload::ClusterSelection::Mode::kFixed;
  }
  apply(o.k, c.clusters.k);
  apply(o.k_max, c.clusters.k_max);
  apply(o.drop_threshold, c.clusters.drop_threshold);
  apply(o.restarts, c.clusters.restarts);
  apply(o.rounds, c.rounds);
  apply(o.local_epochs, c.local_epochs);
  apply(o.removal_factor, c.removal_factor);
  apply(o.removal_lag, c.removal_lag);
  if (o.no_removal) c.removal_enabled = false;
  if (o.schemes) {
    c.schemes.clear();
    for (const auto& s : *o.schemes) c.schemes.push_back(fedload::scheme_from_string(s));
  }
  apply(o.scope, c.centralized_scope);
  apply(o.alp, c.centralized_alp);
  apply(o.probe, c.probe_client);
  if (o.traces) c.traces = true;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated short-term load forecasting with hyperparameter-based clustering"};
  app.require_subcommand(1);
  Overrides overrides;
  std::string config_path;
  std::size_t threads = 1;
  add_options(app, overrides, config_path, threads);
  for (auto* name : {"synth", "tune", "cluster", "federate", "centralize", "localize", "report",
                     "ablate", "pipeline"}) {
    app.add_subcommand(name)->fallthrough();
  }
  app.get_subcommand("synth")->description("write the fleet (synthetic or ingested) to fleet.csv");
  app.get_subcommand("tune")->description("per-client grid search");
  app.get_subcommand("cluster")->description("k-means over tuned hyperparameters");
  app.get_subcommand("federate")->description("clustered federated training");
  app.get_subcommand("centralize")->description("pooled centralized baseline");
  app.get_subcommand("localize")->description("per-client local baseline");
  app.get_subcommand("report")->description("per-cluster RMSE tables");
  app.get_subcommand("ablate")->description("clustered vs unclustered convergence for the probe");
  app.get_subcommand("pipeline")->description("synth, tune, cluster, schemes and report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  std::optional<fedload::Experiment> ex;
  try {
    ex.emplace(resolve(config_path, overrides));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  const fedload::RunOptions opts{threads, &std::cerr};
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "synth") {
      fedload::stage_synth(*ex, opts);
    } else if (command == "tune") {
      fedload::stage_tune(*ex, opts);
    } else if (command == "cluster") {
      fedload::stage_cluster(*ex, opts);
    } else if (command == "federate") {
      fedload::stage_federate(*ex, opts);
    } else if (command == "centralize") {
      fedload::stage_centralize(*ex, opts);
    } else if (command == "localize") {
      fedload::stage_localize(*ex, opts);
    } else if (command == "report") {
      fedload::stage_report(*ex, opts);
    } else if (command == "ablate") {
      fedload::run_clustering_ablation(*ex, opts);
    } else {
      fedload::run_pipeline(*ex, opts);
    }
  } catch (const fedload::StageError& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}

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

#ifndef FEDLOAD_HYPERTUNE_HPP_
#define FEDLOAD_HYPERTUNE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fedload/common.hpp"
#include "fedload/data.hpp"
#include "fedload/neural.hpp"

namespace fedload {

struct HyperParams {
  std::size_t fc1_neurons = 0;
  std::size_t fc2_neurons = 0;
  std::size_t epochs = 0;

  auto operator<=>(const HyperParams&) const = default;
  bool operator==(const HyperParams&) const = default;

  NetworkSpec apply(NetworkSpec base) const {
    base.fc1_neurons = fc1_neurons;
    base.fc2_neurons = fc2_neurons;
    return base;
  }
};

inline std::string to_string(const HyperParams& hp) {
  return "(" + std::to_string(hp.fc1_neurons) + ", " + std::to_string(hp.fc2_neurons) +
         ", " + std::to_string(hp.epochs) + ")";
}

struct HyperGrid {
  std::vector<std::size_t> fc1;
  std::vector<std::size_t> fc2;
  std::vector<std::size_t> epochs;

  /// Every value used by the reference per-cluster hyperparameters.
  static HyperGrid defaults() {
    return {{32, 44, 56, 68}, {85, 127, 198}, {103, 148, 247, 291}};
  }

  void validate() const {
    auto check = [](const std::vector<std::size_t>& axis, const char* name) {
      require(!axis.empty(), std::string("hyper grid: ") + name + " axis is empty");
      require(axis.front() >= 1, std::string("hyper grid: ") + name + " values must be >= 1");
      for (std::size_t i = 1; i < axis.size(); ++i) {
        require(axis[i] > axis[i - 1],
                std::string("hyper grid: ") + name + " axis must be strictly increasing");
      }
    };
    check(fc1, "fc1");
    check(fc2, "fc2");
    check(epochs, "epochs");
  }

  std::size_t size() const { return fc1.size() * fc2.size() * epochs.size(); }

  /// Points in lexicographic (fc1, fc2, epochs) order.
  std::vector<HyperParams> points() const {
    std::vector<HyperParams> out;
    out.reserve(size());
    for (auto a : fc1)
      for (auto b : fc2)
        for (auto e : epochs) out.push_back({a, b, e});
    return out;
  }

  bool contains(const HyperParams& hp) const {
    auto has = [](const std::vector<std::size_t>& axis, std::size_t v) {
      return std::find(axis.begin(), axis.end(), v) != axis.end();
    };
    return has(fc1, hp.fc1_neurons) && has(fc2, hp.fc2_neurons) && has(epochs, hp.epochs);
  }

  bool operator==(const HyperGrid&) const = default;
};

struct TuneOptions {
  NetworkSpec base;
  TrainOptions train;
  /// Caps each candidate's epochs during search.
  bool fast_mode = false;
  std::size_t fast_epoch_cap = 150;
  std::size_t threads = 1;
};

struct GridEvaluation {
  HyperParams params;
  double score = 0.0;
};

struct TuneResult {
  HyperParams best;
  double score = 0.0;
  std::vector<GridEvaluation> evaluations;  // grid order
};

/// Scores one grid point for one client: trains on the first 75% of the
/// client's training windows and returns the final model's MSE on the rest
/// (scaled units). Initialization depends only on `seed`.
inline double evaluate_grid_point(const WindowedDataset& train_data,
                                  const HyperParams& hp, const TuneOptions& options,
                                  std::uint64_t seed) {
  require(train_data.size() >= 8, "grid search: client '" + train_data.client_id +
                                      "' needs at least 8 training windows");
  const auto [fit, validation] = split(train_data, 0.75);
  const NetworkSpec spec = hp.apply(options.base);
  const std::size_t epochs =
      options.fast_mode ? std::min(hp.epochs, options.fast_epoch_cap) : hp.epochs;
  const auto report = train(init_forecaster(spec, derive_seed(seed, "tune-init")), spec,
                            fit.batch(), epochs, options.train,
                            derive_seed(seed, "tune-train"));
  return mse_loss(predict(report.weights, spec, validation.batch()), validation.targets);
}

/// Exhaustive search with a caller-supplied scorer. Lowest score wins; ties
/// go to the lexicographically smallest point. NaN scores never win.
inline TuneResult grid_search(const HyperGrid& grid,
                              const std::function<double(const HyperParams&)>& score,
                              std::size_t threads = 1) {
  grid.validate();
  const auto points = grid.points();
  std::vector<double> scores(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) { scores[i] = score(points[i]); });
  TuneResult result;
  std::size_t best = points.size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    result.evaluations.push_back({points[i], scores[i]});
    if (std::isnan(scores[i])) continue;
    if (best == points.size() || scores[i] < scores[best]) best = i;
  }
  require(best < points.size(), "grid search: every grid point scored NaN");
  result.best = points[best];
  result.score = scores[best];
  return result;
}

inline TuneResult grid_search(const WindowedDataset& train_data, const HyperGrid& grid,
                              const TuneOptions& options, std::uint64_t seed) {
  require(train_data.size() >= 8, "grid search: client '" + train_data.client_id +
                                      "' needs at least 8 training windows");
  return grid_search(
      grid,
      [&](const HyperParams& hp) {
        return evaluate_grid_point(train_data, hp, options, seed);
      },
      options.threads);
}

/// Min-max position of each coordinate on its grid axis, in [0, 1]. A
/// single-valued axis maps to 0.
inline std::array<double, 3> hyperparam_vector(const HyperParams& hp,
                                               const HyperGrid& grid) {
  require(grid.contains(hp), "hyperparam_vector: " + to_string(hp) + " is not on the grid");
  auto norm = [](std::size_t v, const std::vector<std::size_t>& axis) {
    const double lo = static_cast<double>(axis.front());
    const double hi = static_cast<double>(axis.back());
    return hi > lo ? (static_cast<double>(v) - lo) / (hi - lo) : 0.0;
  };
  return {norm(hp.fc1_neurons, grid.fc1), norm(hp.fc2_neurons, grid.fc2),
          norm(hp.epochs, grid.epochs)};
}

}  // namespace fedload

#endif  // FEDLOAD_HYPERTUNE_HPP_

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

#ifndef FEDLOAD_CLUSTERING_HPP_
#define FEDLOAD_CLUSTERING_HPP_

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedload/common.hpp"
#include "fedload/hypertune.hpp"
#include "fedload/neural.hpp"

namespace fedload {

/// Client id -> feature vector. Ordered by id, which fixes the point order
/// every algorithm below sees.
using PointSet = std::map<std::string, std::vector<double>>;

struct ClusterAssignment {
  std::size_t k = 0;
  std::map<std::string, std::size_t> labels;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;

  std::vector<std::string> members(std::size_t cluster) const {
    std::vector<std::string> out;
    for (const auto& [id, label] : labels)
      if (label == cluster) out.push_back(id);
    return out;
  }

  bool operator==(const ClusterAssignment&) const = default;
};

struct ClusterModel {
  std::size_t index = 0;
  std::vector<std::string> members;
  HyperParams hyperparams;
  ParameterVector global_weights;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Sum of squared distances from each point to the centroid of its label.
inline double compute_inertia(const PointSet& points,
                              const std::map<std::string, std::size_t>& labels,
                              const std::vector<std::vector<double>>& centroids) {
  double total = 0.0;
  for (const auto& [id, x] : points) total += squared_distance(x, centroids.at(labels.at(id)));
  return total;
}

namespace detail {

using Matrix = std::vector<std::vector<double>>;

inline std::size_t nearest(const std::vector<double>& x, const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    const double d = squared_distance(x, centroids[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

inline Matrix plus_plus_seeds(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.size();
  std::vector<bool> chosen(n, false);
  Matrix centers;
  std::size_t first = rng.below(n);
  centers.push_back(x[first]);
  chosen[first] = true;
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(x[i], centers.back()));
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    centers.push_back(x[pick]);
  }
  return centers;
}

inline void repair_empty(const Matrix& x, const Matrix& centroids,
                         std::vector<std::size_t>& labels, std::size_t k) {
  for (;;) {
    std::vector<std::size_t> counts(k, 0);
    for (auto l : labels) ++counts[l];
    std::size_t empty = k;
    for (std::size_t j = 0; j < k && empty == k; ++j)
      if (counts[j] == 0) empty = j;
    if (empty == k) return;
    std::size_t far = x.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (counts[labels[i]] < 2) continue;
      const double d = squared_distance(x[i], centroids[labels[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    labels[far] = empty;
  }
}

/// Cluster means, accumulated as offsets from each cluster's first member so
/// a cluster of identical points gets that point back exactly.
inline Matrix means(const Matrix& x, const std::vector<std::size_t>& labels, std::size_t k) {
  const std::size_t dim = x.front().size();
  Matrix anchor(k), offset(k, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t j = labels[i];
    if (counts[j]++ == 0) anchor[j] = x[i];
    for (std::size_t d = 0; d < dim; ++d) offset[j][d] += x[i][d] - anchor[j][d];
  }
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t d = 0; d < dim; ++d)
      offset[j][d] = anchor[j][d] + offset[j][d] / static_cast<double>(counts[j]);
  return offset;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs by
/// inertia. Labels are renumbered in order of first appearance over the
/// sorted client ids, so cluster 0 always holds the smallest id.
inline ClusterAssignment kmeans(const PointSet& points, std::size_t k, std::uint64_t seed,
                                std::size_t restarts = 10,
                                std::size_t max_iterations = 300) {
  require(!points.empty(), "kmeans: no points");
  require(k >= 1, "kmeans: k must be at least 1");
  require(k <= points.size(), "kmeans: k = " + std::to_string(k) + " exceeds " +
                                  std::to_string(points.size()) + " clients");
  require(restarts >= 1, "kmeans: restarts must be at least 1");
  detail::Matrix x;
  for (const auto& [id, v] : points) {
    require(v.size() == points.begin()->second.size(), ErrorKind::kShapeMismatch,
            "kmeans: point '" + id + "' has a different dimension");
    x.push_back(v);
  }
  const std::size_t n = x.size();

  std::vector<std::size_t> best_labels;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, "kmeans-restart", r));
    detail::Matrix centroids = detail::plus_plus_seeds(x, k, rng);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = detail::nearest(x[i], centroids);
    for (std::size_t it = 0; it < max_iterations; ++it) {
      detail::repair_empty(x, centroids, labels, k);
      centroids = detail::means(x, labels, k);
      std::vector<std::size_t> next(n);
      for (std::size_t i = 0; i < n; ++i) next[i] = detail::nearest(x[i], centroids);
      if (next == labels) break;
      labels = std::move(next);
    }
    detail::repair_empty(x, centroids, labels, k);
    centroids = detail::means(x, labels, k);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += squared_distance(x[i], centroids[labels[i]]);
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }

  std::vector<std::size_t> relabel(k, k);
  std::size_t next_label = 0;
  for (auto l : best_labels)
    if (relabel[l] == k) relabel[l] = next_label++;
  for (auto& l : best_labels) l = relabel[l];

  ClusterAssignment out;
  out.k = k;
  out.centroids = detail::means(x, best_labels, k);
  std::size_t i = 0;
  for (const auto& [id, v] : points) out.labels[id] = best_labels[i++];
  out.inertia = compute_inertia(points, out.labels, out.centroids);
  return out;
}

struct InertiaPoint {
  std::size_t k = 0;
  double inertia = 0.0;

  bool operator==(const InertiaPoint&) const = default;
};

inline std::vector<InertiaPoint> inertia_curve(const PointSet& points,
                                               const std::vector<std::size_t>& ks,
                                               std::uint64_t seed, std::size_t restarts = 10,
                                               std::size_t threads = 1) {
  require(!ks.empty(), "inertia curve: empty k range");
  for (auto k : ks) {
    require(k >= 1 && k <= points.size(),
            "inertia curve: k = " + std::to_string(k) + " outside [1, client count]");
  }
  std::vector<InertiaPoint> curve(ks.size());
  parallel_for(ks.size(), threads, [&](std::size_t i) {
    curve[i] = {ks[i], kmeans(points, ks[i], seed, restarts).inertia};
  });
  return curve;
}

/// Smallest k whose relative drop to the next entry, (I_k - I_next) / I_k,
/// is below `drop_threshold`. Falls back to the largest k.
inline std::size_t elbow_select(const std::vector<InertiaPoint>& curve,
                                double drop_threshold) {
  require(curve.size() >= 2, "elbow: curve needs at least two points");
  for (std::size_t i = 1; i < curve.size(); ++i) {
    require(curve[i].k > curve[i - 1].k, "elbow: k values must be strictly increasing");
  }
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double here = curve[i].inertia;
    const double drop = here > 0.0 ? (here - curve[i + 1].inertia) / here : 0.0;
    if (drop < drop_threshold) return curve[i].k;
  }
  return curve.back().k;
}

/// Per cluster and per field, the most frequent member value; ties go to
/// the smallest value.
inline std::map<std::size_t, HyperParams> consolidate_hyperparams(
    const ClusterAssignment& assignment, const std::map<std::string, HyperParams>& tuned) {
  std::map<std::size_t, std::vector<HyperParams>> per_cluster;
  for (const auto& [id, label] : assignment.labels) {
    const auto it = tuned.find(id);
    require(it != tuned.end(), "consolidate: no tuning record for client '" + id + "'");
    per_cluster[label].push_back(it->second);
  }
  auto mode = [](std::vector<std::size_t> values) {
    std::sort(values.begin(), values.end());
    std::size_t best = values.front(), best_count = 0;
    for (std::size_t i = 0; i < values.size();) {
      std::size_t j = i;
      while (j < values.size() && values[j] == values[i]) ++j;
      if (j - i > best_count) {
        best_count = j - i;
        best = values[i];
      }
      i = j;
    }
    return best;
  };
  std::map<std::size_t, HyperParams> out;
  for (const auto& [label, hps] : per_cluster) {
    std::vector<std::size_t> a, b, e;
    for (const auto& hp : hps) {
      a.push_back(hp.fc1_neurons);
      b.push_back(hp.fc2_neurons);
      e.push_back(hp.epochs);
    }
    out[label] = {mode(a), mode(b), mode(e)};
  }
  return out;
}

/// Fleet-wide modal hyperparameters (everyone in one cluster).
inline HyperParams modal_hyperparams(const std::map<std::string, HyperParams>& tuned) {
  require(!tuned.empty(), "modal hyperparameters: no tuning records");
  ClusterAssignment all;
  all.k = 1;
  for (const auto& [id, hp] : tuned) all.labels[id] = 0;
  return consolidate_hyperparams(all, tuned).at(0);
}

}  // namespace fedload

#endif  // FEDLOAD_CLUSTERING_HPP_

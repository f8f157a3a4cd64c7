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

// Single-layer LSTM followed by two ReLU dense layers and a linear output,
// trained on mean squared error with exact BPTT gradients and Adam.
//
// Parameter layout (row-major, in this order):
//   lstm.weight_ih  [4H, I]   gate rows ordered input, forget, candidate, output
//   lstm.weight_hh  [4H, H]
//   lstm.bias       [4H]
//   fc1.weight      [F1, H]   fc1.bias [F1]
//   fc2.weight      [F2, F1]  fc2.bias [F2]
//   out.weight      [O, F2]   out.bias [O]

#ifndef FEDLOAD_NEURAL_HPP_
#define FEDLOAD_NEURAL_HPP_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedload/common.hpp"

namespace fedload {

struct NetworkSpec {
  std::size_t input_size = 1;
  std::size_t lstm_hidden = 20;
  std::size_t fc1_neurons = 32;
  std::size_t fc2_neurons = 32;
  std::size_t output_size = 1;

  void validate() const {
    require(input_size >= 1 && lstm_hidden >= 1 && fc1_neurons >= 1 &&
                fc2_neurons >= 1,
            "network spec: every layer needs at least one unit");
    require(output_size == 1, "network spec: output_size must be 1");
  }

  bool operator==(const NetworkSpec&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  bool operator==(const TensorInfo&) const = default;
};

using Manifest = std::vector<TensorInfo>;

inline Manifest make_manifest(const NetworkSpec& spec) {
  spec.validate();
  const std::size_t g = 4 * spec.lstm_hidden;
  return {
      {"lstm.weight_ih", {g, spec.input_size}},
      {"lstm.weight_hh", {g, spec.lstm_hidden}},
      {"lstm.bias", {g}},
      {"fc1.weight", {spec.fc1_neurons, spec.lstm_hidden}},
      {"fc1.bias", {spec.fc1_neurons}},
      {"fc2.weight", {spec.fc2_neurons, spec.fc1_neurons}},
      {"fc2.bias", {spec.fc2_neurons}},
      {"out.weight", {spec.output_size, spec.fc2_neurons}},
      {"out.bias", {spec.output_size}},
  };
}

inline std::size_t manifest_size(const Manifest& manifest) {
  std::size_t n = 0;
  for (const auto& t : manifest) n += t.numel();
  return n;
}

/// Flat parameter array plus the manifest needed to cut it back into
/// tensors. Plain value type; copies are deep.
class ParameterVector {
 public:
  ParameterVector() = default;

  ParameterVector(std::vector<double> values, Manifest manifest)
      : values_(std::move(values)), manifest_(std::move(manifest)) {
    require(manifest_size(manifest_) == values_.size(), ErrorKind::kShapeMismatch,
            "parameter vector: manifest describes " +
                std::to_string(manifest_size(manifest_)) + " values, got " +
                std::to_string(values_.size()));
  }

  static ParameterVector zeros(const Manifest& manifest) {
    return ParameterVector(std::vector<double>(manifest_size(manifest), 0.0),
                           manifest);
  }

  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const Manifest& manifest() const { return manifest_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  /// Splits the flat array into one owned array per manifest entry.
  std::vector<std::vector<double>> tensors() const {
    std::vector<std::vector<double>> out;
    std::size_t offset = 0;
    for (const auto& t : manifest_) {
      const auto n = t.numel();
      out.emplace_back(values_.begin() + static_cast<std::ptrdiff_t>(offset),
                       values_.begin() + static_cast<std::ptrdiff_t>(offset + n));
      offset += n;
    }
    return out;
  }

  static ParameterVector from_tensors(
      const std::vector<std::vector<double>>& tensors, Manifest manifest) {
    require(tensors.size() == manifest.size(), ErrorKind::kShapeMismatch,
            "parameter vector: tensor count does not match manifest");
    std::vector<double> flat;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      require(tensors[i].size() == manifest[i].numel(), ErrorKind::kShapeMismatch,
              "parameter vector: tensor '" + manifest[i].name +
                  "' has the wrong element count");
      flat.insert(flat.end(), tensors[i].begin(), tensors[i].end());
    }
    return ParameterVector(std::move(flat), std::move(manifest));
  }

  std::uint64_t checksum() const { return hash_doubles(values_); }

  bool operator==(const ParameterVector&) const = default;

 private:
  std::vector<double> values_;
  Manifest manifest_;
};

/// Offsets of each tensor inside the flat array.
struct Layout {
  std::size_t hidden, input, fc1, fc2, out;
  std::size_t w_ih, w_hh, b_lstm, w1, b1, w2, b2, w_out, b_out, total;

  explicit Layout(const NetworkSpec& s)
      : hidden(s.lstm_hidden),
        input(s.input_size),
        fc1(s.fc1_neurons),
        fc2(s.fc2_neurons),
        out(s.output_size) {
    const std::size_t g = 4 * hidden;
    w_ih = 0;
    w_hh = w_ih + g * input;
    b_lstm = w_hh + g * hidden;
    w1 = b_lstm + g;
    b1 = w1 + fc1 * hidden;
    w2 = b1 + fc1;
    b2 = w2 + fc2 * fc1;
    w_out = b2 + fc2;
    b_out = w_out + out * fc2;
    total = b_out + out;
  }
};

inline void check_compatible(const ParameterVector& weights,
                             const NetworkSpec& spec) {
  require(weights.manifest() == make_manifest(spec), ErrorKind::kShapeMismatch,
          "weights manifest does not match network spec");
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per tensor. LSTM tensors use
/// fan_in = input + hidden; dense tensors use their input width. The forget
/// gate bias starts at 1.
inline ParameterVector init_forecaster(const NetworkSpec& spec,
                                       std::uint64_t seed) {
  spec.validate();
  const Manifest manifest = make_manifest(spec);
  const Layout l(spec);
  std::vector<double> w(l.total);
  Rng rng(derive_seed(seed, "init_forecaster"));
  auto fill = [&](std::size_t begin, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) w[begin + i] = rng.uniform(-bound, bound);
  };
  const std::size_t g = 4 * l.hidden;
  const std::size_t lstm_fan = l.input + l.hidden;
  fill(l.w_ih, g * l.input, lstm_fan);
  fill(l.w_hh, g * l.hidden, lstm_fan);
  fill(l.b_lstm, g, lstm_fan);
  for (std::size_t j = 0; j < l.hidden; ++j) w[l.b_lstm + l.hidden + j] = 1.0;
  fill(l.w1, l.fc1 * l.hidden, l.hidden);
  fill(l.b1, l.fc1, l.hidden);
  fill(l.w2, l.fc2 * l.fc1, l.fc1);
  fill(l.b2, l.fc2, l.fc1);
  fill(l.w_out, l.out * l.fc2, l.fc2);
  fill(l.b_out, l.out, l.fc2);
  return ParameterVector(std::move(w), manifest);
}

/// Non-owning view of N training samples stored row-major: `inputs` holds
/// N * window_length values, `targets` holds N values.
struct SampleBatch {
  std::span<const double> inputs;
  std::span<const double> targets;
  std::size_t window_length = 0;

  std::size_t size() const { return targets.size(); }
  std::span<const double> window(std::size_t i) const {
    return inputs.subspan(i * window_length, window_length);
  }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Forward activations for one sequence, kept for the backward pass.
class Tape {
 public:
  explicit Tape(const Layout& l) : l_(l) {}

  double forward(std::span<const double> w, std::span<const double> window) {
    const std::size_t H = l_.hidden;
    const std::size_t I = l_.input;
    const std::size_t G = 4 * H;
    steps_ = window.size() / I;
    gates_.assign(steps_ * G, 0.0);
    cell_.assign((steps_ + 1) * H, 0.0);
    hid_.assign((steps_ + 1) * H, 0.0);
    tanh_c_.assign(steps_ * H, 0.0);
    z_.resize(G);

    for (std::size_t t = 0; t < steps_; ++t) {
      const double* x = window.data() + t * I;
      const double* h_prev = hid_.data() + t * H;
      for (std::size_t r = 0; r < G; ++r) {
        double acc = w[l_.b_lstm + r];
        const double* wi = w.data() + l_.w_ih + r * I;
        for (std::size_t k = 0; k < I; ++k) acc += wi[k] * x[k];
        const double* wh = w.data() + l_.w_hh + r * H;
        for (std::size_t k = 0; k < H; ++k) acc += wh[k] * h_prev[k];
        z_[r] = acc;
      }
      double* gate = gates_.data() + t * G;
      const double* c_prev = cell_.data() + t * H;
      double* c = cell_.data() + (t + 1) * H;
      double* h = hid_.data() + (t + 1) * H;
      double* tc = tanh_c_.data() + t * H;
      for (std::size_t j = 0; j < H; ++j) {
        const double ig = sigmoid(z_[j]);
        const double fg = sigmoid(z_[H + j]);
        const double cg = std::tanh(z_[2 * H + j]);
        const double og = sigmoid(z_[3 * H + j]);
        gate[j] = ig;
        gate[H + j] = fg;
        gate[2 * H + j] = cg;
        gate[3 * H + j] = og;
        c[j] = fg * c_prev[j] + ig * cg;
        tc[j] = std::tanh(c[j]);
        h[j] = og * tc[j];
      }
    }

    const double* h_last = hid_.data() + steps_ * H;
    dense(w, l_.w1, l_.b1, l_.fc1, H, h_last, z1_, a1_);
    dense(w, l_.w2, l_.b2, l_.fc2, l_.fc1, a1_.data(), z2_, a2_);
    double y = w[l_.b_out];
    for (std::size_t k = 0; k < l_.fc2; ++k) y += w[l_.w_out + k] * a2_[k];
    return y;
  }

  /// Accumulates d(loss)/d(weights) into `grad` given d(loss)/d(output).
  void backward(std::span<const double> w, std::span<const double> window,
                double dy, std::span<double> grad) {
    const std::size_t H = l_.hidden;
    const std::size_t I = l_.input;
    const std::size_t G = 4 * H;

    grad[l_.b_out] += dy;
    da2_.assign(l_.fc2, 0.0);
    for (std::size_t k = 0; k < l_.fc2; ++k) {
      grad[l_.w_out + k] += dy * a2_[k];
      da2_[k] = z2_[k] > 0.0 ? dy * w[l_.w_out + k] : 0.0;
    }

    da1_.assign(l_.fc1, 0.0);
    for (std::size_t r = 0; r < l_.fc2; ++r) {
      const double d = da2_[r];
      if (d == 0.0) continue;
      grad[l_.b2 + r] += d;
      double* gw = grad.data() + l_.w2 + r * l_.fc1;
      const double* wr = w.data() + l_.w2 + r * l_.fc1;
      for (std::size_t k = 0; k < l_.fc1; ++k) {
        gw[k] += d * a1_[k];
        da1_[k] += d * wr[k];
      }
    }
    for (std::size_t k = 0; k < l_.fc1; ++k) {
      if (z1_[k] <= 0.0) da1_[k] = 0.0;
    }

    dh_.assign(H, 0.0);
    const double* h_last = hid_.data() + steps_ * H;
    for (std::size_t r = 0; r < l_.fc1; ++r) {
      const double d = da1_[r];
      if (d == 0.0) continue;
      grad[l_.b1 + r] += d;
      double* gw = grad.data() + l_.w1 + r * H;
      const double* wr = w.data() + l_.w1 + r * H;
      for (std::size_t k = 0; k < H; ++k) {
        gw[k] += d * h_last[k];
        dh_[k] += d * wr[k];
      }
    }

    dc_.assign(H, 0.0);
    dz_.resize(G);
    dh_prev_.resize(H);
    for (std::size_t t = steps_; t-- > 0;) {
      const double* gate = gates_.data() + t * G;
      const double* c_prev = cell_.data() + t * H;
      const double* h_prev = hid_.data() + t * H;
      const double* tc = tanh_c_.data() + t * H;
      for (std::size_t j = 0; j < H; ++j) {
        const double ig = gate[j];
        const double fg = gate[H + j];
        const double cg = gate[2 * H + j];
        const double og = gate[3 * H + j];
        const double dc = dc_[j] + dh_[j] * og * (1.0 - tc[j] * tc[j]);
        dz_[j] = dc * cg * ig * (1.0 - ig);
        dz_[H + j] = dc * c_prev[j] * fg * (1.0 - fg);
        dz_[2 * H + j] = dc * ig * (1.0 - cg * cg);
        dz_[3 * H + j] = dh_[j] * tc[j] * og * (1.0 - og);
        dc_[j] = dc * fg;
      }
      const double* x = window.data() + t * I;
      std::fill(dh_prev_.begin(), dh_prev_.end(), 0.0);
      for (std::size_t r = 0; r < G; ++r) {
        const double d = dz_[r];
        grad[l_.b_lstm + r] += d;
        double* gi = grad.data() + l_.w_ih + r * I;
        for (std::size_t k = 0; k < I; ++k) gi[k] += d * x[k];
        double* gh = grad.data() + l_.w_hh + r * H;
        const double* wh = w.data() + l_.w_hh + r * H;
        for (std::size_t k = 0; k < H; ++k) {
          gh[k] += d * h_prev[k];
          dh_prev_[k] += d * wh[k];
        }
      }
      dh_.swap(dh_prev_);
    }
  }

 private:
  static void dense(std::span<const double> w, std::size_t w_off,
                    std::size_t b_off, std::size_t rows, std::size_t cols,
                    const double* in, std::vector<double>& z,
                    std::vector<double>& a) {
    z.resize(rows);
    a.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = w[b_off + r];
      const double* wr = w.data() + w_off + r * cols;
      for (std::size_t k = 0; k < cols; ++k) acc += wr[k] * in[k];
      z[r] = acc;
      a[r] = acc > 0.0 ? acc : 0.0;
    }
  }

  Layout l_;
  std::size_t steps_ = 0;
  std::vector<double> gates_, cell_, hid_, tanh_c_, z_;
  std::vector<double> z1_, a1_, z2_, a2_;
  std::vector<double> da2_, da1_, dh_, dh_prev_, dc_, dz_;
};

inline void check_window(const NetworkSpec& spec, std::size_t length) {
  require(length > 0 && length % spec.input_size == 0,
          "window length must be a positive multiple of input_size");
}

}  // namespace detail

/// One-step-ahead prediction for a single look-back window. Hidden and cell
/// state start at zero for every call.
inline double forward(const ParameterVector& weights, const NetworkSpec& spec,
                      std::span<const double> window) {
  check_compatible(weights, spec);
  detail::check_window(spec, window.size());
  detail::Tape tape{Layout(spec)};
  return tape.forward(weights.values(), window);
}

/// Predictions for every window of `batch`.
inline std::vector<double> predict(const ParameterVector& weights,
                                   const NetworkSpec& spec,
                                   const SampleBatch& batch) {
  check_compatible(weights, spec);
  detail::check_window(spec, batch.window_length);
  detail::Tape tape{Layout(spec)};
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out[i] = tape.forward(weights.values(), batch.window(i));
  }
  return out;
}

/// (1/N) * sum (actual - predicted)^2
inline double mse_loss(std::span<const double> predicted,
                       std::span<const double> actual) {
  require(!predicted.empty() && predicted.size() == actual.size(),
          "mse_loss: inputs must be nonempty and of equal length");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = actual[i] - predicted[i];
    sum += d * d;
  }
  return sum / static_cast<double>(predicted.size());
}

/// Writes the gradient of the mean squared error over `rows` of `batch` into
/// `grad` (overwritten) and returns that mean squared error. An empty `rows`
/// means every sample.
inline double loss_and_gradient(const ParameterVector& weights,
                                const NetworkSpec& spec,
                                const SampleBatch& batch,
                                std::span<const std::size_t> rows,
                                std::span<double> grad) {
  check_compatible(weights, spec);
  require(batch.size() > 0, "gradient: empty batch");
  detail::check_window(spec, batch.window_length);
  require(grad.size() == weights.size(), ErrorKind::kShapeMismatch,
          "gradient: output buffer has wrong length");
  const std::size_t n = rows.empty() ? batch.size() : rows.size();
  const double scale = 2.0 / static_cast<double>(n);
  std::fill(grad.begin(), grad.end(), 0.0);
  detail::Tape tape{Layout(spec)};
  double sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t i = rows.empty() ? s : rows[s];
    const auto window = batch.window(i);
    const double y = tape.forward(weights.values(), window);
    const double err = y - batch.targets[i];
    sum += err * err;
    tape.backward(weights.values(), window, scale * err, grad);
  }
  return sum / static_cast<double>(n);
}

inline ParameterVector compute_gradients(const ParameterVector& weights,
                                         const NetworkSpec& spec,
                                         const SampleBatch& batch) {
  ParameterVector grad = ParameterVector::zeros(weights.manifest());
  loss_and_gradient(weights, spec, batch, {}, grad.values());
  return grad;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
  AdamConfig config;

  static AdamState zeros(std::size_t n, AdamConfig config = {}) {
    return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0,
                     config};
  }

  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam update applied in place.
inline void adam_update(std::span<double> weights,
                        std::span<const double> gradients, AdamState& state) {
  require(weights.size() == gradients.size() &&
              weights.size() == state.first_moment.size() &&
              weights.size() == state.second_moment.size(),
          ErrorKind::kShapeMismatch, "adam: array lengths differ");
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double g = gradients[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    weights[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

inline std::pair<ParameterVector, AdamState> adam_step(
    ParameterVector weights, const ParameterVector& gradients,
    AdamState state) {
  require(weights.manifest() == gradients.manifest(), ErrorKind::kShapeMismatch,
          "adam: gradient manifest differs from weights");
  adam_update(weights.values(), gradients.values(), state);
  return {std::move(weights), std::move(state)};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
  AdamConfig adam;
  /// Datasets up to this many windows take one full-batch step per epoch.
  std::size_t full_batch_limit = 2048;
  std::size_t minibatch_size = 256;
};

struct TrainReport {
  std::vector<double> epoch_losses;
  ParameterVector weights;
  std::size_t sample_count = 0;

  bool operator==(const TrainReport&) const = default;
};

/// Runs `epochs` epochs continuing from `state`. `first_epoch` is the global
/// index of the first epoch and seeds the per-epoch shuffle, so splitting a
/// run into several calls gives the same result as one long call. The loss
/// recorded for an epoch is the mean squared error seen by its gradient
/// passes, i.e. before that epoch's updates.
inline void train_epochs(ParameterVector& weights, AdamState& state,
                         const NetworkSpec& spec, const SampleBatch& data,
                         std::size_t epochs, std::size_t first_epoch,
                         const TrainOptions& options, std::uint64_t seed,
                         std::vector<double>& losses) {
  require(data.size() > 0, "train: empty dataset");
  check_compatible(weights, spec);
  require(state.first_moment.size() == weights.size(), ErrorKind::kShapeMismatch,
          "train: optimizer state does not match weights");
  std::vector<double> grad(weights.size());
  const std::size_t n = data.size();
  if (n <= options.full_batch_limit) {
    for (std::size_t e = 0; e < epochs; ++e) {
      losses.push_back(loss_and_gradient(weights, spec, data, {}, grad));
      adam_update(weights.values(), grad, state);
    }
    return;
  }
  require(options.minibatch_size > 0, "train: minibatch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "epoch", first_epoch + e));
    rng.shuffle(order);
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < n; begin += options.minibatch_size) {
      const std::size_t end = std::min(n, begin + options.minibatch_size);
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      weighted += loss_and_gradient(weights, spec, data, rows, grad) *
                  static_cast<double>(rows.size());
      adam_update(weights.values(), grad, state);
    }
    losses.push_back(weighted / static_cast<double>(n));
  }
}

inline TrainReport train(ParameterVector weights, const NetworkSpec& spec,
                         const SampleBatch& data, std::size_t epochs,
                         const TrainOptions& options, std::uint64_t seed) {
  require(epochs >= 1, "train: epochs must be at least 1");
  require(data.size() > 0, "train: empty dataset");
  AdamState state = AdamState::zeros(weights.size(), options.adam);
  TrainReport report;
  report.epoch_losses.reserve(epochs);
  train_epochs(weights, state, spec, data, epochs, 0, options, seed,
               report.epoch_losses);
  report.weights = std::move(weights);
  report.sample_count = data.size();
  return report;
}

}  // namespace fedload

#endif  // FEDLOAD_NEURAL_HPP_

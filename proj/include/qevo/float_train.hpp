#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "qevo/common.hpp"
#include "qevo/network.hpp"

namespace qevo {

// Full-precision counterpart of QuantNetwork; exists only to manufacture
// initial solutions, never inside the search loop.
struct FloatNetwork {
  std::vector<LayerSpec> layers;
  std::vector<double> weights;  // flat, layer by layer: weights then biases
};

inline Matrix float_forward(const FloatNetwork& net, const Matrix& batch) {
  return detail::forward_pass(
      net.layers, net.weights.data(), batch, [](double v) { return v > 0.0 ? v : 0.0; }, nullptr);
}

inline double float_accuracy(const FloatNetwork& net, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("float_accuracy: empty dataset");
  Matrix logits = float_forward(net, data.inputs);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const double* row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c)
      if (row[c] > row[best]) best = c;
    if (static_cast<int>(best) == data.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows);
}

// Glorot-uniform weights, zero biases.
inline FloatNetwork init_float_network(const std::vector<LayerSpec>& layers, std::uint64_t seed) {
  validate_topology(layers);
  FloatNetwork net;
  net.layers = layers;
  net.weights.assign(count_params(layers), 0.0);
  Rng rng(derive_seed(seed, 0xF10a7));
  std::size_t off = 0;
  for (const auto& s : layers) {
    std::size_t fan_in = s.input_size(), fan_out = s.output_size();
    std::size_t wcount = s.param_count() - (s.kind == LayerKind::kDense
                                                ? static_cast<std::size_t>(s.out_features)
                                                : static_cast<std::size_t>(s.out_ch));
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < wcount; ++i) net.weights[off + i] = rng.uniform(-limit, limit);
    off += s.param_count();  // biases stay zero
  }
  return net;
}

// Minibatch SGD with softmax cross-entropy. Dense topologies only: this is
// scaffolding for initial solutions, not part of the search.
inline FloatNetwork train_float_reference(const std::vector<LayerSpec>& layers,
                                          const Dataset& data, int epochs, double lr,
                                          std::uint64_t seed, int batch_size = 32) {
  validate_topology(layers);
  for (const auto& s : layers)
    if (s.kind != LayerKind::kDense)
      throw std::invalid_argument("train_float_reference: only dense topologies are trainable");
  if (data.size() == 0) throw std::invalid_argument("train_float_reference: empty dataset");
  validate_dataset(data);
  if (layers.front().input_size() != data.inputs.cols)
    throw std::invalid_argument("train_float_reference: input dimension mismatch");
  if (layers.back().output_size() < static_cast<std::size_t>(data.num_classes))
    throw std::invalid_argument("train_float_reference: output layer smaller than class count");
  if (epochs < 0 || lr <= 0.0 || batch_size < 1)
    throw std::invalid_argument("train_float_reference: bad hyperparameters");

  FloatNetwork net = init_float_network(layers, seed);
  std::size_t n = data.size();
  std::size_t L = layers.size();
  std::vector<double> grad(net.weights.size());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0x5bf, static_cast<std::uint64_t>(epoch)));
    auto order = shuffle_rng.permutation(n);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
      std::size_t bsz = std::min<std::size_t>(batch_size, n - start);
      Matrix x(bsz, data.inputs.cols);
      std::vector<int> y(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        std::size_t src = order[start + b];
        std::copy(data.inputs.row(src), data.inputs.row(src) + data.inputs.cols, x.row(b));
        y[b] = data.labels[src];
      }
      // forward, keeping every layer's output
      std::vector<Matrix> acts;
      acts.reserve(L + 1);
      acts.push_back(std::move(x));
      std::size_t off = 0;
      for (std::size_t l = 0; l < L; ++l) {
        const auto& s = net.layers[l];
        const double* w = net.weights.data() + off;
        const double* bias = w + static_cast<std::size_t>(s.in_features) * s.out_features;
        const Matrix& in = acts.back();
        Matrix out(bsz, s.output_size());
        for (std::size_t b = 0; b < bsz; ++b) {
          const double* xr = in.row(b);
          double* yr = out.row(b);
          for (int o = 0; o < s.out_features; ++o) {
            const double* wrow = w + static_cast<std::size_t>(o) * s.in_features;
            double acc = bias[o];
            for (int i = 0; i < s.in_features; ++i) acc += wrow[i] * xr[i];
            yr[o] = (s.act == Activation::kReluQuantize && acc < 0.0) ? 0.0 : acc;
          }
        }
        off += s.param_count();
        acts.push_back(std::move(out));
      }
      // softmax cross-entropy gradient at the output
      Matrix delta = acts.back();
      double loss = 0.0;
      for (std::size_t b = 0; b < bsz; ++b) {
        double* row = delta.row(b);
        double mx = row[0];
        for (std::size_t c = 1; c < delta.cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < delta.cols; ++c) {
          row[c] = std::exp(row[c] - mx);
          sum += row[c];
        }
        for (std::size_t c = 0; c < delta.cols; ++c) row[c] /= sum;
        loss -= std::log(std::max(row[static_cast<std::size_t>(y[b])], 1e-300));
        row[static_cast<std::size_t>(y[b])] -= 1.0;
        for (std::size_t c = 0; c < delta.cols; ++c) row[c] /= static_cast<double>(bsz);
      }
      if (!std::isfinite(loss))
        throw training_failed("train_float_reference: non-finite loss, training diverged");
      // backward
      std::fill(grad.begin(), grad.end(), 0.0);
      std::size_t layer_off = net.weights.size();
      for (std::size_t l = L; l-- > 0;) {
        const auto& s = net.layers[l];
        layer_off -= s.param_count();
        const double* w = net.weights.data() + layer_off;
        double* gw = grad.data() + layer_off;
        double* gb = gw + static_cast<std::size_t>(s.in_features) * s.out_features;
        const Matrix& in = acts[l];
        Matrix prev_delta(bsz, s.input_size());
        for (std::size_t b = 0; b < bsz; ++b) {
          const double* dr = delta.row(b);
          const double* xr = in.row(b);
          double* pd = prev_delta.row(b);
          for (int o = 0; o < s.out_features; ++o) {
            double d = dr[o];
            if (d == 0.0) continue;
            double* gww = gw + static_cast<std::size_t>(o) * s.in_features;
            const double* wrow = w + static_cast<std::size_t>(o) * s.in_features;
            for (int i = 0; i < s.in_features; ++i) {
              gww[i] += d * xr[i];
              pd[i] += wrow[i] * d;
            }
            gb[o] += d;
          }
        }
        if (l > 0) {
          // relu mask of the previous layer's output
          const Matrix& prev_out = acts[l];
          for (std::size_t i = 0; i < prev_delta.data.size(); ++i)
            if (prev_out.data[i] <= 0.0) prev_delta.data[i] = 0.0;
        }
        delta = std::move(prev_delta);
      }
      for (std::size_t i = 0; i < net.weights.size(); ++i) net.weights[i] -= lr * grad[i];
    }
  }
  for (double w : net.weights)
    if (!std::isfinite(w)) throw training_failed("train_float_reference: non-finite weights");
  return net;
}

}  // namespace qevo

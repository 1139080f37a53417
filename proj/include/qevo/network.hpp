#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "qevo/common.hpp"
#include "qevo/quantizer.hpp"

namespace qevo {

enum class LayerKind { kDense, kConv2d };
enum class Activation { kReluQuantize, kIdentity };

// Topology node. Dense layers use in_features/out_features; conv layers are
// stride-1, zero-padded "same", square odd kernels, channel-major layout.
struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  Activation act = Activation::kReluQuantize;
  int in_features = 0, out_features = 0;
  int in_ch = 0, in_h = 0, in_w = 0, out_ch = 0, ksize = 0;

  static LayerSpec dense(int in, int out, Activation a = Activation::kReluQuantize) {
    LayerSpec s;
    s.kind = LayerKind::kDense;
    s.act = a;
    s.in_features = in;
    s.out_features = out;
    return s;
  }

  static LayerSpec conv2d(int in_ch, int h, int w, int out_ch, int ksize,
                          Activation a = Activation::kReluQuantize) {
    LayerSpec s;
    s.kind = LayerKind::kConv2d;
    s.act = a;
    s.in_ch = in_ch;
    s.in_h = h;
    s.in_w = w;
    s.out_ch = out_ch;
    s.ksize = ksize;
    return s;
  }

  std::size_t input_size() const {
    if (kind == LayerKind::kDense) return static_cast<std::size_t>(in_features);
    return static_cast<std::size_t>(in_ch) * in_h * in_w;
  }

  std::size_t output_size() const {
    if (kind == LayerKind::kDense) return static_cast<std::size_t>(out_features);
    return static_cast<std::size_t>(out_ch) * in_h * in_w;
  }

  // weights plus biases
  std::size_t param_count() const {
    if (kind == LayerKind::kDense)
      return static_cast<std::size_t>(in_features) * out_features + out_features;
    return static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize + out_ch;
  }
};

inline void validate_topology(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw std::invalid_argument("topology: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layers[l];
    if (s.kind == LayerKind::kDense) {
      if (s.in_features <= 0 || s.out_features <= 0)
        throw std::invalid_argument("topology: dense layer with non-positive dimension");
    } else {
      if (s.in_ch <= 0 || s.in_h <= 0 || s.in_w <= 0 || s.out_ch <= 0)
        throw std::invalid_argument("topology: conv layer with non-positive dimension");
      if (s.ksize <= 0 || s.ksize % 2 == 0)
        throw std::invalid_argument("topology: conv kernel must be odd and positive");
    }
    if (l > 0 && layers[l - 1].output_size() != s.input_size())
      throw std::invalid_argument("topology: layer " + std::to_string(l) +
                                  " input does not match previous output");
  }
}

inline std::size_t count_params(const std::vector<LayerSpec>& layers) {
  validate_topology(layers);
  std::size_t n = 0;
  for (const auto& s : layers) n += s.param_count();
  return n;
}

// Plain MLP: hidden layers relu+quantize, output layer raw affine.
inline std::vector<LayerSpec> make_mlp(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output");
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Activation a = (i + 2 == dims.size()) ? Activation::kIdentity : Activation::kReluQuantize;
    layers.push_back(LayerSpec::dense(dims[i], dims[i + 1], a));
  }
  return layers;
}

struct Dataset {
  Matrix inputs;            // examples x features, values in [-1, 1]
  std::vector<int> labels;  // class indices
  int num_classes = 0;

  std::size_t size() const { return inputs.rows; }
};

inline void validate_dataset(const Dataset& data) {
  if (data.inputs.rows != data.labels.size())
    throw std::invalid_argument("dataset: input/label row mismatch");
  for (int y : data.labels)
    if (y < 0 || y >= data.num_classes)
      throw std::invalid_argument("dataset: label out of range");
}

// ---------------------------------------------------------------------------
// Quantized network: per-layer codebooks plus one integer code per parameter.

struct QuantNetwork {
  std::vector<LayerSpec> layers;
  std::vector<Codebook> codebooks;   // one per layer
  std::vector<std::uint32_t> codes;  // flat, length count_params(layers)
  ActivationQuantizer aq;

  // decoded levels, rebuilt whenever codes change
  std::vector<double> weights;

  void refresh_weights() {
    weights.resize(codes.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      std::size_t cnt = layers[l].param_count();
      const auto& lv = codebooks[l].levels;
      for (std::size_t i = 0; i < cnt; ++i) weights[off + i] = lv[codes[off + i]];
      off += cnt;
    }
  }
};

inline void validate_network(const QuantNetwork& net) {
  validate_topology(net.layers);
  if (net.codebooks.size() != net.layers.size())
    throw std::invalid_argument("network: one codebook per layer required");
  if (net.codes.size() != count_params(net.layers))
    throw std::invalid_argument("network: code count does not match topology");
  std::size_t off = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    std::size_t cnt = net.layers[l].param_count();
    for (std::size_t i = 0; i < cnt; ++i)
      if (net.codes[off + i] >= net.codebooks[l].levels.size())
        throw std::invalid_argument("network: code out of codebook range at layer " +
                                    std::to_string(l));
    off += cnt;
  }
}

// ---------------------------------------------------------------------------
// Search space and solution encoding.

struct SearchDomain {
  // per weight: sorted distinct codes this position may take (>= 2 entries)
  std::vector<std::vector<std::uint32_t>> candidates;

  std::size_t size() const { return candidates.size(); }
};

struct Genome {
  std::vector<std::uint16_t> choices;  // index into candidates[i]

  std::size_t size() const { return choices.size(); }
  bool operator==(const Genome& other) const { return choices == other.choices; }
};

inline void validate_domain(const SearchDomain& domain, const QuantNetwork& net) {
  if (domain.size() != net.codes.size())
    throw std::invalid_argument("domain: size does not match network parameter count");
  std::size_t off = 0, l = 0, cnt = net.layers.empty() ? 0 : net.layers[0].param_count();
  for (std::size_t i = 0; i < domain.size(); ++i) {
    while (i >= off + cnt) {
      off += cnt;
      cnt = net.layers[++l].param_count();
    }
    const auto& cand = domain.candidates[i];
    if (cand.size() < 2) throw std::invalid_argument("domain: fewer than two candidates");
    if (cand.size() > 65535) throw std::invalid_argument("domain: candidate set too large");
    if (!std::is_sorted(cand.begin(), cand.end()) ||
        std::adjacent_find(cand.begin(), cand.end()) != cand.end())
      throw std::invalid_argument("domain: candidates must be sorted and distinct");
    for (auto c : cand)
      if (c >= net.codebooks[l].levels.size())
        throw std::invalid_argument("domain: candidate outside codebook");
  }
}

// Every codebook level allowed at every position.
inline SearchDomain full_domain(const QuantNetwork& net) {
  SearchDomain d;
  d.candidates.reserve(net.codes.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    std::vector<std::uint32_t> all(net.codebooks[l].levels.size());
    std::iota(all.begin(), all.end(), 0u);
    for (std::size_t i = 0; i < net.layers[l].param_count(); ++i) d.candidates.push_back(all);
  }
  return d;
}

inline QuantNetwork apply_genome(const SearchDomain& domain, const Genome& genome,
                                 const QuantNetwork& net) {
  if (genome.size() != domain.size() || domain.size() != net.codes.size())
    throw std::invalid_argument("apply_genome: length mismatch");
  QuantNetwork out = net;
  for (std::size_t i = 0; i < genome.size(); ++i) {
    const auto& cand = domain.candidates[i];
    if (genome.choices[i] >= cand.size())
      throw std::invalid_argument("apply_genome: choice out of candidate range");
    out.codes[i] = cand[genome.choices[i]];
  }
  out.refresh_weights();
  return out;
}

// Inverse of apply_genome for networks whose codes all lie in the domain.
inline Genome extract_choices(const SearchDomain& domain, const QuantNetwork& net) {
  if (domain.size() != net.codes.size())
    throw std::invalid_argument("extract_choices: length mismatch");
  Genome g;
  g.choices.resize(domain.size());
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const auto& cand = domain.candidates[i];
    auto it = std::lower_bound(cand.begin(), cand.end(), net.codes[i]);
    if (it == cand.end() || *it != net.codes[i])
      throw std::invalid_argument("extract_choices: code not in candidate set");
    g.choices[i] = static_cast<std::uint16_t>(it - cand.begin());
  }
  return g;
}

// ---------------------------------------------------------------------------
// Forward pass.

// Collects every hidden activation emitted after quantization (test hook).
struct ForwardProbe {
  std::vector<double> hidden;
};

namespace detail {

// Shared by the quantized and float paths; `hidden` maps a pre-activation
// value to the layer output value.
template <typename HiddenFn>
Matrix forward_pass(const std::vector<LayerSpec>& layers, const double* weights,
                    const Matrix& batch, HiddenFn&& hidden, ForwardProbe* probe) {
  if (layers.empty() || batch.cols != layers.front().input_size())
    throw std::invalid_argument("forward: batch feature dimension mismatch");
  Matrix cur = batch;
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layers[l];
    Matrix next(cur.rows, s.output_size());
    const double* w = weights + off;
    if (s.kind == LayerKind::kDense) {
      const double* bias = w + static_cast<std::size_t>(s.in_features) * s.out_features;
      for (std::size_t r = 0; r < cur.rows; ++r) {
        const double* x = cur.row(r);
        double* y = next.row(r);
        for (int o = 0; o < s.out_features; ++o) {
          const double* wrow = w + static_cast<std::size_t>(o) * s.in_features;
          double acc = bias[o];
          for (int i = 0; i < s.in_features; ++i) acc += wrow[i] * x[i];
          y[o] = acc;
        }
      }
    } else {
      int H = s.in_h, W = s.in_w, C = s.in_ch, OC = s.out_ch, K = s.ksize, P = s.ksize / 2;
      const double* bias = w + static_cast<std::size_t>(OC) * C * K * K;
      for (std::size_t r = 0; r < cur.rows; ++r) {
        const double* x = cur.row(r);
        double* y = next.row(r);
        for (int oc = 0; oc < OC; ++oc) {
          const double* kern = w + static_cast<std::size_t>(oc) * C * K * K;
          for (int yy = 0; yy < H; ++yy) {
            for (int xx = 0; xx < W; ++xx) {
              double acc = bias[oc];
              for (int c = 0; c < C; ++c) {
                for (int ky = 0; ky < K; ++ky) {
                  int sy = yy + ky - P;
                  if (sy < 0 || sy >= H) continue;
                  for (int kx = 0; kx < K; ++kx) {
                    int sx = xx + kx - P;
                    if (sx < 0 || sx >= W) continue;
                    acc += kern[(static_cast<std::size_t>(c) * K + ky) * K + kx] *
                           x[(static_cast<std::size_t>(c) * H + sy) * W + sx];
                  }
                }
              }
              y[(static_cast<std::size_t>(oc) * H + yy) * W + xx] = acc;
            }
          }
        }
      }
    }
    if (s.act == Activation::kReluQuantize) {
      for (double& v : next.data) {
        v = hidden(v);
        if (probe) probe->hidden.push_back(v);
      }
    }
    off += s.param_count();
    cur = std::move(next);
  }
  return cur;
}

}  // namespace detail

// Quantized inference: affine maps over dequantized levels; hidden layers
// apply relu then activation quantization; the output layer stays raw.
inline Matrix forward(const QuantNetwork& net, const Matrix& batch, ForwardProbe* probe = nullptr) {
  const ActivationQuantizer& aq = net.aq;
  return detail::forward_pass(
      net.layers, net.weights.data(), batch,
      [&aq](double v) { return quantize_activation(v > 0.0 ? v : 0.0, aq); }, probe);
}

// Classification accuracy on the full dataset; argmax ties resolve to the
// lowest class index.
inline double fitness(const QuantNetwork& net, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("fitness: empty dataset");
  validate_dataset(data);
  Matrix logits = forward(net, data.inputs);
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

}  // namespace qevo

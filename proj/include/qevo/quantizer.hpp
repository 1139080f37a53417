#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qevo/common.hpp"

namespace qevo {

struct LayerRange {
  double w_min = 0.0;
  double w_max = 0.0;

  bool valid() const {
    return std::isfinite(w_min) && std::isfinite(w_max) && w_min < w_max;
  }
};

// Uniform grid step for a k-bit layer.
inline double compute_delta(const LayerRange& range, int bits) {
  if (bits < 1) throw std::invalid_argument("compute_delta: bits must be >= 1");
  if (!range.valid()) throw std::invalid_argument("compute_delta: degenerate layer range");
  return (range.w_max - range.w_min) / static_cast<double>((std::uint64_t{1} << bits) - 1);
}

// The representable weight levels of one layer: every multiple of delta that
// falls inside the range, plus the range endpoints (clip targets). Levels are
// stored once as m*delta so later quantization can match them bit-exactly.
struct Codebook {
  int bits = 0;
  double delta = 0.0;
  std::vector<double> levels;
  LayerRange range;

  std::size_t size() const { return levels.size(); }
};

namespace detail {

// Values within snap_tol of an endpoint collapse onto it, so a multiple that
// equals an endpoint up to rounding error does not create a duplicate level.
// The tolerance covers the rounding error of m*delta, which scales with the
// magnitude of the range, not with delta.
inline double snap_tol(const LayerRange& range, double delta) {
  return std::max(delta * 1e-9, (std::abs(range.w_min) + std::abs(range.w_max)) * 2.22e-14);
}

inline double snap_level(double v, const LayerRange& range, double delta) {
  double tol = snap_tol(range, delta);
  if (v <= range.w_min + tol) return range.w_min;
  if (v >= range.w_max - tol) return range.w_max;
  return std::clamp(v, range.w_min, range.w_max);
}

}  // namespace detail

// Eq.-style weight quantization: round to the nearest multiple of delta
// (half away from zero), saturating at the layer range. Output is always a
// codebook level.
inline double quantize_weight(double w, const Codebook& cb) {
  if (!std::isfinite(w)) throw std::invalid_argument("quantize_weight: non-finite weight");
  double m = std::round(w / cb.delta);
  return detail::snap_level(m * cb.delta, cb.range, cb.delta);
}

inline Codebook build_codebook(const LayerRange& range, int bits) {
  Codebook cb;
  cb.bits = bits;
  cb.range = range;
  cb.delta = compute_delta(range, bits);
  double q_lo = range.w_min / cb.delta;
  double q_hi = range.w_max / cb.delta;
  double snap = 1e-9;
  auto m_lo = static_cast<std::int64_t>(std::ceil(q_lo - snap * (1.0 + std::abs(q_lo))));
  auto m_hi = static_cast<std::int64_t>(std::floor(q_hi + snap * (1.0 + std::abs(q_hi))));
  cb.levels.push_back(range.w_min);
  cb.levels.push_back(range.w_max);
  for (std::int64_t m = m_lo; m <= m_hi; ++m)
    cb.levels.push_back(detail::snap_level(static_cast<double>(m) * cb.delta, range, cb.delta));
  std::sort(cb.levels.begin(), cb.levels.end());
  cb.levels.erase(std::unique(cb.levels.begin(), cb.levels.end()), cb.levels.end());
  return cb;
}

inline std::size_t code_of_level(double level, const Codebook& cb) {
  auto it = std::lower_bound(cb.levels.begin(), cb.levels.end(), level);
  if (it == cb.levels.end() || *it != level)
    throw std::out_of_range("code_of_level: value is not a codebook level");
  return static_cast<std::size_t>(it - cb.levels.begin());
}

inline double level_of_code(std::size_t code, const Codebook& cb) {
  if (code >= cb.levels.size()) throw std::out_of_range("level_of_code: code out of range");
  return cb.levels[code];
}

// Activations live on the fixed [-1, 1] grid with step 2/(2^k - 1). The grid
// step makes 1/delta half-integral, so rounding alone would push inputs at
// the boundary outside the range; the outer clamp saturates them back to +-1.
struct ActivationQuantizer {
  int bits = 0;
  double delta = 0.0;

  explicit ActivationQuantizer(int k = 0) : bits(k) {
    if (k > 0) delta = 2.0 / static_cast<double>((std::uint64_t{1} << k) - 1);
  }
};

inline double quantize_activation(double a, const ActivationQuantizer& aq) {
  if (!std::isfinite(a)) throw std::invalid_argument("quantize_activation: non-finite input");
  if (aq.bits < 1) throw std::invalid_argument("quantize_activation: quantizer not initialized");
  double clipped = std::clamp(a, -1.0, 1.0);
  double v = std::round(clipped / aq.delta) * aq.delta;
  return std::clamp(v, -1.0, 1.0);
}

}  // namespace qevo

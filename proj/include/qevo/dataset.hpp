#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qevo/common.hpp"
#include "qevo/network.hpp"

namespace qevo {

// Affine per-feature rescale onto [-1, 1]. Constant features map to 0 and
// are reported through the optional warning sink.
inline void rescale_features(Matrix& m, std::vector<std::string>* warnings = nullptr) {
  for (std::size_t c = 0; c < m.cols; ++c) {
    double lo = m.at(0, c), hi = m.at(0, c);
    for (std::size_t r = 1; r < m.rows; ++r) {
      lo = std::min(lo, m.at(r, c));
      hi = std::max(hi, m.at(r, c));
    }
    if (lo == hi) {
      for (std::size_t r = 0; r < m.rows; ++r) m.at(r, c) = 0.0;
      if (warnings)
        warnings->push_back("feature " + std::to_string(c) + " is constant, rescaled to 0");
      continue;
    }
    double scale = 2.0 / (hi - lo);
    for (std::size_t r = 0; r < m.rows; ++r) m.at(r, c) = -1.0 + (m.at(r, c) - lo) * scale;
  }
}

namespace detail {

inline double gauss(Rng& rng) {
  double u1 = std::max(rng.uniform01(), 1e-300);
  double u2 = rng.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace detail

// The four XOR corners, cycled to the requested size, scaled to {-1, 1}^2.
inline Dataset make_xor(std::size_t n = 4) {
  if (n == 0) throw std::invalid_argument("make_xor: size must be positive");
  static const double px[4][2] = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  static const int py[4] = {0, 1, 1, 0};
  Dataset d;
  d.inputs = Matrix(n, 2);
  d.labels.resize(n);
  d.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    d.inputs.at(i, 0) = px[i % 4][0];
    d.inputs.at(i, 1) = px[i % 4][1];
    d.labels[i] = py[i % 4];
  }
  return d;
}

// Two interleaved half-circles with gaussian jitter, classes alternating by
// row so any even prefix stays balanced.
inline Dataset make_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("make_moons: size must be positive");
  Dataset d;
  d.inputs = Matrix(n, 2);
  d.labels.resize(n);
  d.num_classes = 2;
  Rng rng(derive_seed(seed, 0x3005u));
  for (std::size_t i = 0; i < n; ++i) {
    int cls = static_cast<int>(i % 2);
    double t = rng.uniform01() * 3.14159265358979323846;
    double x, y;
    if (cls == 0) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    d.inputs.at(i, 0) = x + noise * detail::gauss(rng);
    d.inputs.at(i, 1) = y + noise * detail::gauss(rng);
    d.labels[i] = cls;
  }
  rescale_features(d.inputs);
  return d;
}

// Isotropic gaussian blobs on a circle of class centers.
inline Dataset make_blobs(std::size_t n, double noise, std::uint64_t seed, int classes = 3) {
  if (n == 0) throw std::invalid_argument("make_blobs: size must be positive");
  if (classes < 2) throw std::invalid_argument("make_blobs: need at least two classes");
  Dataset d;
  d.inputs = Matrix(n, 2);
  d.labels.resize(n);
  d.num_classes = classes;
  Rng rng(derive_seed(seed, 0xb10b5));
  for (std::size_t i = 0; i < n; ++i) {
    int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
    double ang = 2.0 * 3.14159265358979323846 * cls / classes;
    d.inputs.at(i, 0) = 0.8 * std::cos(ang) + noise * detail::gauss(rng);
    d.inputs.at(i, 1) = 0.8 * std::sin(ang) + noise * detail::gauss(rng);
    d.labels[i] = cls;
  }
  rescale_features(d.inputs);
  return d;
}

}  // namespace qevo

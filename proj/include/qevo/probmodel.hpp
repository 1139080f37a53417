#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "qevo/common.hpp"
#include "qevo/network.hpp"

namespace qevo {

// Per-weight categorical distribution over that weight's candidate codes.
// Weights are modeled as independent.
struct ProbModel {
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return rows.size(); }
};

struct Confidence {
  std::vector<double> values;  // per-weight max row probability
};

inline void validate_model(const ProbModel& model) {
  for (const auto& row : model.rows) {
    if (row.empty()) throw std::invalid_argument("probmodel: empty row");
    double sum = 0.0;
    for (double p : row) {
      if (p < 0.0) throw std::invalid_argument("probmodel: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("probmodel: row does not sum to 1");
  }
}

// sigma on the anchor choice, (1-sigma)/(m-1) on each alternative.
inline ProbModel init_sigma_greedy(const Genome& anchor, double sigma, const SearchDomain& domain) {
  if (anchor.size() != domain.size())
    throw std::invalid_argument("init_sigma_greedy: anchor/domain length mismatch");
  ProbModel model;
  model.rows.resize(domain.size());
  for (std::size_t i = 0; i < domain.size(); ++i) {
    std::size_t m = domain.candidates[i].size();
    if (!(sigma > 1.0 / static_cast<double>(m) && sigma < 1.0))
      throw std::invalid_argument("init_sigma_greedy: sigma must lie in (1/m, 1)");
    if (anchor.choices[i] >= m)
      throw std::invalid_argument("init_sigma_greedy: anchor choice out of range");
    model.rows[i].assign(m, (1.0 - sigma) / static_cast<double>(m - 1));
    model.rows[i][anchor.choices[i]] = sigma;
  }
  return model;
}

// Re-anchor a subset of rows; used by the restart schemes.
inline void reinit_rows_sigma_greedy(ProbModel& model, const Genome& anchor, double sigma,
                                     const SearchDomain& domain,
                                     const std::vector<std::size_t>& row_indices) {
  for (std::size_t i : row_indices) {
    std::size_t m = domain.candidates[i].size();
    if (!(sigma > 1.0 / static_cast<double>(m) && sigma < 1.0))
      throw std::invalid_argument("reinit_rows_sigma_greedy: sigma must lie in (1/m, 1)");
    model.rows[i].assign(m, (1.0 - sigma) / static_cast<double>(m - 1));
    model.rows[i][anchor.choices[i]] = sigma;
  }
}

// One categorical draw per position. Same seed, same model -> same genome.
inline Genome sample(const ProbModel& model, Rng& rng) {
  Genome g;
  g.choices.resize(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& row = model.rows[i];
    double u = rng.uniform01();
    double cum = 0.0;
    std::size_t pick = row.size() - 1;
    for (std::size_t j = 0; j < row.size(); ++j) {
      cum += row[j];
      if (u < cum) {
        pick = j;
        break;
      }
    }
    g.choices[i] = static_cast<std::uint16_t>(pick);
  }
  return g;
}

// Convex step toward the elite frequencies, restricted to `row_indices`.
inline void update_rows(ProbModel& model, const std::vector<Genome>& elite, double alpha,
                        const std::vector<std::size_t>& row_indices) {
  if (elite.empty()) throw std::invalid_argument("update: empty elite set");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("update: alpha must be in (0, 1]");
  for (const auto& g : elite)
    if (g.size() != model.size()) throw std::invalid_argument("update: elite genome length mismatch");
  double inv = 1.0 / static_cast<double>(elite.size());
  std::vector<double> freq;
  for (std::size_t i : row_indices) {
    auto& row = model.rows[i];
    freq.assign(row.size(), 0.0);
    for (const auto& g : elite) freq[g.choices[i]] += inv;
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = (1.0 - alpha) * row[j] + alpha * freq[j];
  }
}

// P = (1-alpha) P + alpha P_best over all rows.
inline ProbModel update(const ProbModel& model, const std::vector<Genome>& elite, double alpha) {
  ProbModel out = model;
  std::vector<std::size_t> all(model.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  update_rows(out, elite, alpha, all);
  return out;
}

// Convergence proxy: how peaked each row currently is.
inline Confidence confidence(const ProbModel& model) {
  Confidence c;
  c.values.resize(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    double best = 0.0;
    for (double p : model.rows[i]) best = std::max(best, p);
    c.values[i] = best;
  }
  return c;
}

}  // namespace qevo

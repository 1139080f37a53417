#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qevo/common.hpp"
#include "qevo/network.hpp"
#include "qevo/probmodel.hpp"

namespace qevo {

using FitnessFn = std::function<double(const Genome&)>;

struct EdaConfig {
  int generations_per_cycle = 500;  // G
  int population = 20;              // S
  int elite_count = 20;             // N_best
  double alpha = 0.1;
  double sigma = 0.95;
  double accuracy_threshold = 1.0;  // T: restart loops continue while best <= T
  double beta_lo = 0.4;
  double beta_hi = 0.6;
  long max_fitness_evals = 150000;
  std::uint64_t seed = 1;
  int jobs = 1;

  void validate() const {
    if (generations_per_cycle < 0) throw std::invalid_argument("config: generations must be >= 0");
    if (population < 1) throw std::invalid_argument("config: population must be >= 1");
    if (elite_count < 1 || elite_count > population)
      throw std::invalid_argument("config: elite count must be in [1, population]");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("config: alpha must be in (0, 1]");
    if (!(sigma > 0.0 && sigma < 1.0)) throw std::invalid_argument("config: sigma must be in (0, 1)");
    if (accuracy_threshold < 0.0 || accuracy_threshold > 1.0)
      throw std::invalid_argument("config: threshold must be in [0, 1]");
    if (beta_lo < 0.0 || beta_lo > beta_hi || beta_hi > 1.0)
      throw std::invalid_argument("config: beta range must satisfy 0 <= lo <= hi <= 1");
    if (max_fitness_evals < 1) throw std::invalid_argument("config: budget must be positive");
    if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
  }
};

struct GaConfig {
  int population = 20;
  int tournament = 2;
  double crossover_rate = 0.9;
  double mutation_rate = -1.0;  // < 0 means 1/n
  long max_fitness_evals = 150000;
  std::uint64_t seed = 1;
  int jobs = 1;

  void validate() const {
    if (population < 2) throw std::invalid_argument("ga config: population must be >= 2");
    if (tournament < 1) throw std::invalid_argument("ga config: tournament size must be >= 1");
    if (crossover_rate < 0.0 || crossover_rate > 1.0)
      throw std::invalid_argument("ga config: crossover rate must be in [0, 1]");
    if (mutation_rate > 1.0) throw std::invalid_argument("ga config: mutation rate must be <= 1");
    if (max_fitness_evals < 1) throw std::invalid_argument("ga config: budget must be positive");
    if (jobs < 1) throw std::invalid_argument("ga config: jobs must be >= 1");
  }
};

struct LsConfig {
  double sigma = 0.95;  // restart perturbation: keep each position with prob sigma
  long max_fitness_evals = 150000;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(sigma > 0.0 && sigma < 1.0)) throw std::invalid_argument("ls config: sigma must be in (0, 1)");
    if (max_fitness_evals < 1) throw std::invalid_argument("ls config: budget must be positive");
  }
};

// Frozen/active split of the weight indices.
struct Partition {
  std::vector<std::size_t> frozen;  // group A
  std::vector<std::size_t> active;  // group B
};

// Sort weights by confidence descending (ties keep index order) and freeze
// the first floor(beta * n).
inline Partition partition_by_confidence(const Confidence& conf, double beta) {
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("partition: beta must be in [0, 1]");
  std::size_t n = conf.values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return conf.values[a] > conf.values[b]; });
  auto frozen_count = static_cast<std::size_t>(std::floor(beta * static_cast<double>(n)));
  Partition p;
  p.frozen.assign(order.begin(), order.begin() + frozen_count);
  p.active.assign(order.begin() + frozen_count, order.end());
  std::sort(p.frozen.begin(), p.frozen.end());
  std::sort(p.active.begin(), p.active.end());
  return p;
}

struct GenerationRow {
  long generation = 0;
  long evals = 0;
  double best_fitness = 0.0;  // best so far, non-decreasing
  double pop_best = 0.0;      // best of this generation
  int cycle = 0;
  double beta = 0.0;
};

struct PartitionEvent {
  int cycle = 0;
  double beta = 0.0;
  std::size_t frozen_count = 0;
};

struct RunRecord {
  std::vector<GenerationRow> rows;
  std::vector<PartitionEvent> partitions;
  Genome best;
  double best_fitness = 0.0;
  long evals_used = 0;
  bool truncated = false;  // budget ran out mid-run
};

// Restart-cycle snapshot; written per cycle, sufficient for exact resume
// because all random streams are derived from (seed, counters).
struct EdaCheckpoint {
  std::string algo;  // "eda", "eda-cc", "eda-nocc"
  int cycle = 0;
  long global_gen = 0;
  long evals = 0;
  Genome best;
  double best_fitness = 0.0;
  ProbModel model;
};

struct OptimizerHooks {
  std::function<void(const GenerationRow&)> on_row;
  std::function<void(int cycle, const Partition&, double beta)> on_partition;
  std::function<void(int cycle, long generation, const std::vector<Genome>&)> on_population;
  std::function<void(const EdaCheckpoint&)> on_cycle_end;
};

namespace detail {

// Stream tags keep the independent random streams from colliding.
enum : std::uint64_t {
  kTagSample = 0x5aULL << 32,
  kTagBeta = 0xb3ULL << 32,
  kTagGaInit = 0x6aULL << 32,
  kTagGaVar = 0x6bULL << 32,
  kTagLsSweep = 0x15ULL << 32,
  kTagLsRestart = 0x16ULL << 32,
  kTagRandom = 0x77ULL << 32,
};

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return derive_seed(derive_seed(seed, tag), a, b);
}

inline std::vector<std::size_t> rank_desc(const std::vector<double>& fits) {
  std::vector<std::size_t> order(fits.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fits[a] > fits[b]; });
  return order;
}

inline Genome random_genome(const SearchDomain& domain, Rng& rng) {
  Genome g;
  g.choices.resize(domain.size());
  for (std::size_t i = 0; i < domain.size(); ++i)
    g.choices[i] = static_cast<std::uint16_t>(rng.below(domain.candidates[i].size()));
  return g;
}

// Shared engine for the EDA-family loops.
struct EdaDriver {
  const SearchDomain& domain;
  const FitnessFn& fitness;
  const EdaConfig& cfg;
  const OptimizerHooks& hooks;

  RunRecord record;
  ProbModel model;
  Genome best;
  double best_fit = 0.0;
  long evals = 0;
  long global_gen = 0;
  int cycle = 0;
  double cur_beta = 0.0;
  bool truncated = false;

  EdaDriver(const SearchDomain& d, const FitnessFn& f, const EdaConfig& c,
            const OptimizerHooks& h)
      : domain(d), fitness(f), cfg(c), hooks(h) {}

  void charge(long k) {
    evals += k;
    if (evals > cfg.max_fitness_evals) throw std::logic_error("internal: fitness budget exceeded");
  }

  void emit_row(double pop_best) {
    GenerationRow row{global_gen, evals, best_fit, pop_best, cycle, cur_beta};
    record.rows.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
  }

  void start(const Genome& initial) {
    if (initial.size() != domain.size())
      throw std::invalid_argument("optimizer: initial genome does not match domain");
    best = initial;
    best_fit = fitness(initial);
    charge(1);
    model = init_sigma_greedy(initial, cfg.sigma, domain);
    emit_row(best_fit);
  }

  void restore(const EdaCheckpoint& ck) {
    best = ck.best;
    best_fit = ck.best_fitness;
    model = ck.model;
    evals = ck.evals;
    global_gen = ck.global_gen;
    cycle = ck.cycle;
  }

  EdaCheckpoint snapshot(const std::string& algo) const {
    return EdaCheckpoint{algo, cycle, global_gen, evals, best, best_fit, model};
  }

  // One cycle of G generations. Frozen positions are pinned to the incumbent
  // best at cycle start and excluded from model updates.
  void run_cycle(const std::vector<std::size_t>& frozen, const std::vector<std::size_t>& active) {
    Genome pin = best;
    std::vector<Genome> pop(cfg.population);
    for (int gen = 0; gen < cfg.generations_per_cycle; ++gen) {
      long remaining = cfg.max_fitness_evals - evals;
      if (remaining <= 0) {
        truncated = true;
        return;
      }
      ++global_gen;
      for (int i = 0; i < cfg.population; ++i) {
        Rng rng(stream_seed(cfg.seed, kTagSample, static_cast<std::uint64_t>(global_gen),
                            static_cast<std::uint64_t>(i)));
        pop[i] = sample(model, rng);
        for (std::size_t f : frozen) pop[i].choices[f] = pin.choices[f];
      }
      auto count = static_cast<std::size_t>(
          std::min<long>(cfg.population, remaining));
      std::vector<double> fits(count);
      parallel_for(count, cfg.jobs, [&](std::size_t i) { fits[i] = fitness(pop[i]); });
      charge(static_cast<long>(count));
      auto order = rank_desc(fits);
      double pop_best = fits[order[0]];
      if (pop_best > best_fit) {
        best_fit = pop_best;
        best = pop[order[0]];
      }
      if (hooks.on_population) hooks.on_population(cycle, global_gen, pop);
      emit_row(pop_best);
      if (count < static_cast<std::size_t>(cfg.population)) {
        truncated = true;
        return;
      }
      auto n_elite = std::min<std::size_t>(static_cast<std::size_t>(cfg.elite_count), count);
      std::vector<Genome> elite;
      elite.reserve(n_elite);
      for (std::size_t e = 0; e < n_elite; ++e) elite.push_back(pop[order[e]]);
      update_rows(model, elite, cfg.alpha, active);
    }
  }

  RunRecord finish() {
    record.best = best;
    record.best_fitness = best_fit;
    record.evals_used = evals;
    record.truncated = truncated;
    return std::move(record);
  }
};

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace detail

// Single EDA run: sigma-greedy init anchored at `initial`, then G generations
// of sample / evaluate / rank / track best / convex model update.
inline RunRecord run_eda(const SearchDomain& domain, const Genome& initial,
                         const FitnessFn& fitness, const EdaConfig& cfg,
                         const OptimizerHooks& hooks = {}) {
  cfg.validate();
  detail::EdaDriver drv(domain, fitness, cfg, hooks);
  drv.start(initial);
  drv.run_cycle({}, detail::all_indices(domain.size()));
  return drv.finish();
}

namespace detail {

inline RunRecord run_restart_loop(const SearchDomain& domain, const Genome* initial,
                                  const FitnessFn& fitness, const EdaConfig& cfg,
                                  const OptimizerHooks& hooks, bool grouping,
                                  const EdaCheckpoint* resume) {
  cfg.validate();
  const char* algo = grouping ? "eda-cc" : "eda-nocc";
  EdaDriver drv(domain, fitness, cfg, hooks);
  if (resume) {
    drv.restore(*resume);
  } else {
    drv.start(*initial);
  }
  while (drv.best_fit <= cfg.accuracy_threshold && drv.evals < cfg.max_fitness_evals &&
         !drv.truncated) {
    std::vector<std::size_t> frozen;
    std::vector<std::size_t> active = all_indices(domain.size());
    if (drv.cycle >= 1) {
      double beta = 0.0;
      if (grouping) {
        Rng beta_rng(stream_seed(cfg.seed, kTagBeta, static_cast<std::uint64_t>(drv.cycle)));
        beta = beta_rng.uniform(cfg.beta_lo, cfg.beta_hi);
        Partition part = partition_by_confidence(confidence(drv.model), beta);
        frozen = part.frozen;
        active = part.active;
        if (hooks.on_partition) hooks.on_partition(drv.cycle, part, beta);
      } else if (hooks.on_partition) {
        hooks.on_partition(drv.cycle, Partition{{}, active}, beta);
      }
      drv.record.partitions.push_back({drv.cycle, beta, frozen.size()});
      drv.cur_beta = beta;
      reinit_rows_sigma_greedy(drv.model, drv.best, cfg.sigma, domain, active);
    }
    drv.run_cycle(frozen, active);
    ++drv.cycle;
    if (hooks.on_cycle_end) hooks.on_cycle_end(drv.snapshot(algo));
  }
  return drv.finish();
}

}  // namespace detail

// EDA within a cooperative-coevolution restart scheme: every G generations,
// rank weights by model confidence, freeze the floor(beta*n) most-confident
// at the incumbent best, and restart the rest sigma-greedily around it.
inline RunRecord run_eda_cc(const SearchDomain& domain, const Genome& initial,
                            const FitnessFn& fitness, const EdaConfig& cfg,
                            const OptimizerHooks& hooks = {},
                            const EdaCheckpoint* resume = nullptr) {
  return detail::run_restart_loop(domain, &initial, fitness, cfg, hooks, true, resume);
}

// Same restart cadence, but every restart re-anchors the whole model with no
// freezing.
inline RunRecord run_eda_no_cc(const SearchDomain& domain, const Genome& initial,
                               const FitnessFn& fitness, const EdaConfig& cfg,
                               const OptimizerHooks& hooks = {},
                               const EdaCheckpoint* resume = nullptr) {
  return detail::run_restart_loop(domain, &initial, fitness, cfg, hooks, false, resume);
}

// Generational GA baseline: tournament selection, uniform crossover,
// per-gene mutation, elitism of one. Population slot 0 starts from `initial`,
// the rest start uniform-random.
inline RunRecord run_ga(const SearchDomain& domain, const Genome& initial,
                        const FitnessFn& fitness, const GaConfig& cfg,
                        const OptimizerHooks& hooks = {}) {
  cfg.validate();
  if (initial.size() != domain.size())
    throw std::invalid_argument("optimizer: initial genome does not match domain");
  double mut = cfg.mutation_rate >= 0.0
                   ? cfg.mutation_rate
                   : 1.0 / static_cast<double>(std::max<std::size_t>(domain.size(), 1));
  RunRecord record;
  std::vector<Genome> pop(cfg.population);
  pop[0] = initial;
  for (int i = 1; i < cfg.population; ++i) {
    Rng rng(detail::stream_seed(cfg.seed, detail::kTagGaInit, static_cast<std::uint64_t>(i)));
    pop[i] = detail::random_genome(domain, rng);
  }
  std::vector<double> fits(cfg.population, 0.0);
  Genome best;
  double best_fit = 0.0;
  long evals = 0;
  bool truncated = false;
  bool have_best = false;
  long gen = 0;
  // generation 1 evaluates the initial population; later generations only the
  // offspring (the elite keeps its known fitness)
  std::size_t eval_from = 0;
  while (evals < cfg.max_fitness_evals) {
    ++gen;
    long remaining = cfg.max_fitness_evals - evals;
    std::size_t want = static_cast<std::size_t>(cfg.population) - eval_from;
    std::size_t count = std::min<std::size_t>(want, static_cast<std::size_t>(remaining));
    parallel_for(count, cfg.jobs,
                 [&](std::size_t i) { fits[eval_from + i] = fitness(pop[eval_from + i]); });
    evals += static_cast<long>(count);
    std::size_t evaluated = eval_from + count;
    std::size_t gen_best = 0;
    for (std::size_t i = 1; i < evaluated; ++i)
      if (fits[i] > fits[gen_best]) gen_best = i;
    if (!have_best || fits[gen_best] > best_fit) {
      best = pop[gen_best];
      best_fit = fits[gen_best];
      have_best = true;
    }
    GenerationRow row{gen, evals, best_fit, fits[gen_best], 0, 0.0};
    record.rows.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
    if (hooks.on_population)
      hooks.on_population(0, gen, pop);
    if (count < want) {
      truncated = true;
      break;
    }
    if (evals >= cfg.max_fitness_evals) break;
    // breed the next generation
    Rng rng(detail::stream_seed(cfg.seed, detail::kTagGaVar, static_cast<std::uint64_t>(gen)));
    std::vector<Genome> next(cfg.population);
    std::vector<double> next_fits(cfg.population, 0.0);
    next[0] = pop[gen_best];  // elite
    next_fits[0] = fits[gen_best];
    auto tournament = [&]() -> const Genome& {
      std::size_t winner = rng.below(pop.size());
      for (int t = 1; t < cfg.tournament; ++t) {
        std::size_t ch = rng.below(pop.size());
        if (fits[ch] > fits[winner]) winner = ch;
      }
      return pop[winner];
    };
    for (int i = 1; i < cfg.population; ++i) {
      const Genome& pa = tournament();
      const Genome& pb = tournament();
      Genome child = pa;
      if (rng.uniform01() < cfg.crossover_rate) {
        for (std::size_t j = 0; j < child.size(); ++j)
          if (rng.uniform01() < 0.5) child.choices[j] = pb.choices[j];
      }
      for (std::size_t j = 0; j < child.size(); ++j) {
        if (rng.uniform01() < mut) {
          std::size_t m = domain.candidates[j].size();
          std::size_t alt = rng.below(m - 1);
          if (alt >= child.choices[j]) ++alt;
          child.choices[j] = static_cast<std::uint16_t>(alt);
        }
      }
      next[i] = std::move(child);
    }
    pop = std::move(next);
    fits = std::move(next_fits);
    eval_from = 1;
  }
  record.best = best;
  record.best_fitness = best_fit;
  record.evals_used = evals;
  record.truncated = truncated;
  return record;
}

// First-improvement hill climbing with sigma-greedy restarts on stagnation.
inline RunRecord run_ls(const SearchDomain& domain, const Genome& initial,
                        const FitnessFn& fitness, const LsConfig& cfg,
                        const OptimizerHooks& hooks = {}) {
  cfg.validate();
  if (initial.size() != domain.size())
    throw std::invalid_argument("optimizer: initial genome does not match domain");
  RunRecord record;
  Genome inc = initial;
  double inc_fit = fitness(inc);
  long evals = 1;
  Genome best = inc;
  double best_fit = inc_fit;
  bool truncated = false;
  auto emit = [&](long sweep, double pop_best) {
    GenerationRow row{sweep, evals, best_fit, pop_best, 0, 0.0};
    record.rows.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
  };
  emit(0, inc_fit);
  long sweep = 0;
  while (evals < cfg.max_fitness_evals) {
    ++sweep;
    Rng order_rng(detail::stream_seed(cfg.seed, detail::kTagLsSweep, static_cast<std::uint64_t>(sweep)));
    auto order = order_rng.permutation(domain.size());
    bool improved = false;
    for (std::size_t pos : order) {
      const auto& cand = domain.candidates[pos];
      for (std::size_t alt = 0; alt < cand.size() && evals < cfg.max_fitness_evals; ++alt) {
        if (alt == inc.choices[pos]) continue;
        Genome probe = inc;
        probe.choices[pos] = static_cast<std::uint16_t>(alt);
        double f = fitness(probe);
        ++evals;
        if (f > inc_fit) {
          inc = std::move(probe);
          inc_fit = f;
          improved = true;
          if (f > best_fit) {
            best = inc;
            best_fit = f;
          }
          break;  // first improvement: move on to the next position
        }
      }
      if (evals >= cfg.max_fitness_evals) break;
    }
    if (evals >= cfg.max_fitness_evals) {
      truncated = true;
      emit(sweep, inc_fit);
      break;
    }
    if (!improved) {
      // stuck on a local optimum: keep each position with prob sigma,
      // otherwise jump to a uniformly chosen alternative
      Rng rng(detail::stream_seed(cfg.seed, detail::kTagLsRestart, static_cast<std::uint64_t>(sweep)));
      Genome restart = inc;
      for (std::size_t i = 0; i < restart.size(); ++i) {
        if (rng.uniform01() < cfg.sigma) continue;
        std::size_t m = domain.candidates[i].size();
        std::size_t alt = rng.below(m - 1);
        if (alt >= restart.choices[i]) ++alt;
        restart.choices[i] = static_cast<std::uint16_t>(alt);
      }
      inc = std::move(restart);
      inc_fit = fitness(inc);
      ++evals;
      if (inc_fit > best_fit) {
        best = inc;
        best_fit = inc_fit;
      }
    }
    emit(sweep, inc_fit);
  }
  record.best = best;
  record.best_fitness = best_fit;
  record.evals_used = evals;
  record.truncated = truncated;
  return record;
}

// Uniform random sampling control.
inline RunRecord run_random(const SearchDomain& domain, const FitnessFn& fitness,
                            const EdaConfig& cfg, const OptimizerHooks& hooks = {}) {
  cfg.validate();
  RunRecord record;
  Genome best;
  double best_fit = 0.0;
  bool have_best = false;
  long evals = 0;
  long block = 0;
  std::vector<Genome> batch(cfg.population);
  while (evals < cfg.max_fitness_evals) {
    ++block;
    long remaining = cfg.max_fitness_evals - evals;
    auto count = static_cast<std::size_t>(std::min<long>(cfg.population, remaining));
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(detail::stream_seed(cfg.seed, detail::kTagRandom,
                                  static_cast<std::uint64_t>(evals + static_cast<long>(i))));
      batch[i] = detail::random_genome(domain, rng);
    }
    std::vector<double> fits(count);
    parallel_for(count, cfg.jobs, [&](std::size_t i) { fits[i] = fitness(batch[i]); });
    evals += static_cast<long>(count);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < count; ++i)
      if (fits[i] > fits[arg]) arg = i;
    if (!have_best || fits[arg] > best_fit) {
      best = batch[arg];
      best_fit = fits[arg];
      have_best = true;
    }
    GenerationRow row{block, evals, best_fit, fits[arg], 0, 0.0};
    record.rows.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
  }
  record.best = best;
  record.best_fitness = best_fit;
  record.evals_used = evals;
  record.truncated = false;
  return record;
}

}  // namespace qevo

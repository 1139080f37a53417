#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "qevo/common.hpp"
#include "qevo/dataset.hpp"
#include "qevo/float_train.hpp"
#include "qevo/io.hpp"
#include "qevo/network.hpp"
#include "qevo/optimizers.hpp"
#include "qevo/quantizer.hpp"

namespace qevo {

// ---------------------------------------------------------------------------
// Float -> quantized.

// Per-layer range from that layer's own weights, then every parameter
// (biases included) snapped to the codebook. A layer whose weights are all
// equal gets its range widened by an epsilon margin and a log entry.
inline QuantNetwork quantize_network(const FloatNetwork& fnet, int bits,
                                     std::vector<std::string>* log = nullptr) {
  validate_topology(fnet.layers);
  if (fnet.weights.size() != count_params(fnet.layers))
    throw std::invalid_argument("quantize_network: weight count does not match topology");
  QuantNetwork net;
  net.layers = fnet.layers;
  net.aq = ActivationQuantizer(bits);
  net.codes.resize(fnet.weights.size());
  std::size_t off = 0;
  for (std::size_t l = 0; l < fnet.layers.size(); ++l) {
    std::size_t cnt = fnet.layers[l].param_count();
    double lo = fnet.weights[off], hi = fnet.weights[off];
    for (std::size_t i = 1; i < cnt; ++i) {
      lo = std::min(lo, fnet.weights[off + i]);
      hi = std::max(hi, fnet.weights[off + i]);
    }
    if (lo == hi) {
      double margin = std::max(std::abs(lo), 1.0) * std::numeric_limits<double>::epsilon() * 4;
      lo -= margin;
      hi += margin;
      if (log)
        log->push_back("layer " + std::to_string(l) + ": degenerate weight range, widened by " +
                       detail::fmt_double(2 * margin));
    }
    Codebook cb = build_codebook(LayerRange{lo, hi}, bits);
    for (std::size_t i = 0; i < cnt; ++i)
      net.codes[off + i] =
          static_cast<std::uint32_t>(code_of_level(quantize_weight(fnet.weights[off + i], cb), cb));
    net.codebooks.push_back(std::move(cb));
    off += cnt;
  }
  net.refresh_weights();
  return net;
}

// ---------------------------------------------------------------------------
// Initial-solution construction: move s of the codes to an adjacent level
// and give every weight a two-code search neighborhood.

struct SwitchResult {
  QuantNetwork net;     // perturbed network
  SearchDomain domain;  // binary neighborhood per weight
};

inline SwitchResult switch_perturb(const QuantNetwork& qnet, double s, std::uint64_t seed) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("switch_perturb: s must be in [0, 1]");
  validate_network(qnet);
  SwitchResult res;
  res.net = qnet;
  std::size_t n = qnet.codes.size();
  res.domain.candidates.resize(n);
  Rng rng(derive_seed(seed, 0x5317c4));
  auto count = static_cast<std::size_t>(std::floor(s * static_cast<double>(n)));
  auto picked = rng.sample_indices(n, count);
  std::vector<char> selected(n, 0);
  for (std::size_t i : picked) selected[i] = 1;
  std::size_t layer = 0;
  std::size_t layer_end = qnet.layers.empty() ? 0 : qnet.layers[0].param_count();
  for (std::size_t i = 0; i < n; ++i) {
    while (i >= layer_end) layer_end += qnet.layers[++layer].param_count();
    std::size_t levels = qnet.codebooks[layer].levels.size();
    std::uint32_t c = qnet.codes[i];
    std::uint32_t adj;
    if (c == 0) {
      adj = 1;
    } else if (c + 1 == levels) {
      adj = c - 1;
    } else {
      adj = (rng.uniform01() < 0.5) ? c - 1 : c + 1;
    }
    res.domain.candidates[i] = {std::min(c, adj), std::max(c, adj)};
    if (selected[i]) res.net.codes[i] = adj;
  }
  res.net.refresh_weights();
  return res;
}

// ---------------------------------------------------------------------------
// Dataset specs: "xor[:k=v,...]", "moons[:...]", "blobs[:...]", "file:path",
// or a bare path. Generator keys: n, noise, seed, classes.

inline Dataset load_dataset(const std::string& spec, bool rescale_files = false,
                            std::vector<std::string>* warnings = nullptr) {
  std::string kind = spec, params;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    kind = spec.substr(0, colon);
    params = spec.substr(colon + 1);
  }
  if (kind == "file") return load_dataset_csv(params, rescale_files, warnings);
  if (kind != "xor" && kind != "moons" && kind != "blobs")
    return load_dataset_csv(spec, rescale_files, warnings);

  std::size_t n = (kind == "xor") ? 4 : (kind == "moons" ? 400 : 150);
  double noise = (kind == "moons") ? 0.1 : 0.15;
  std::uint64_t seed = 7;
  int classes = 3;
  std::istringstream ps(params);
  std::string kv;
  while (std::getline(ps, kv, ',')) {
    if (kv.empty()) continue;
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("dataset spec: expected key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "n")
      n = static_cast<std::size_t>(std::stoull(val));
    else if (key == "noise")
      noise = std::stod(val);
    else if (key == "seed")
      seed = std::stoull(val);
    else if (key == "classes")
      classes = std::stoi(val);
    else
      throw std::invalid_argument("dataset spec: unknown key '" + key + "'");
  }
  if (kind == "xor") return make_xor(n);
  if (kind == "moons") return make_moons(n, noise, seed);
  return make_blobs(n, noise, seed, classes);
}

inline Dataset slice_dataset(const Dataset& d, std::size_t from, std::size_t count) {
  if (from + count > d.size()) throw std::invalid_argument("slice_dataset: out of range");
  Dataset out;
  out.inputs = Matrix(count, d.inputs.cols);
  out.labels.assign(d.labels.begin() + static_cast<long>(from),
                    d.labels.begin() + static_cast<long>(from + count));
  std::copy(d.inputs.row(from), d.inputs.row(from) + count * d.inputs.cols, out.inputs.data.begin());
  out.num_classes = d.num_classes;
  return out;
}

// ---------------------------------------------------------------------------
// Fitness closures over a base network and its search domain.

inline FitnessFn make_fitness(const SearchDomain& domain, const QuantNetwork& base,
                              const Dataset& data) {
  return [&domain, &base, &data](const Genome& g) {
    return fitness(apply_genome(domain, g, base), data);
  };
}

// Minibatch estimate of the fitness: each call scores a fresh seeded batch.
// Off by default everywhere because the estimate depends on the call order,
// which makes curves non-deterministic under parallel evaluation.
inline FitnessFn make_minibatch_fitness(const SearchDomain& domain, const QuantNetwork& base,
                                        const Dataset& data, std::size_t batch,
                                        std::uint64_t seed) {
  if (batch == 0 || batch > data.size())
    throw std::invalid_argument("make_minibatch_fitness: bad batch size");
  auto counter = std::make_shared<std::atomic<std::uint64_t>>(0);
  return [&domain, &base, &data, batch, seed, counter](const Genome& g) {
    Rng rng(derive_seed(seed, 0xba7c4, counter->fetch_add(1)));
    Dataset sub;
    sub.inputs = Matrix(batch, data.inputs.cols);
    sub.labels.resize(batch);
    sub.num_classes = data.num_classes;
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t src = rng.below(data.size());
      std::copy(data.inputs.row(src), data.inputs.row(src) + data.inputs.cols, sub.inputs.row(b));
      sub.labels[b] = data.labels[src];
    }
    return fitness(apply_genome(domain, g, base), sub);
  };
}

// ---------------------------------------------------------------------------
// Experiment configuration, mirrored 1:1 by the config file and CLI flags.

struct ExperimentConfig {
  std::string topology = "2-16-8-2";  // dense MLP dims
  std::string data = "moons";         // xor | moons | blobs | file:path
  int train_n = 200;
  int test_n = 200;
  double noise = 0.1;
  std::uint64_t data_seed = 7;
  int classes = 3;
  int bits = 4;
  double switch_s = 0.3;
  std::string algo = "eda-cc";  // eda | eda-cc | eda-nocc | ga | ls | random
  int gens = 500;
  int pop = 20;
  int elite = 20;
  double alpha = 0.1;
  double sigma = 0.95;
  double threshold = 1.0;
  double beta_lo = 0.4;
  double beta_hi = 0.6;
  long budget = 150000;
  std::uint64_t seed = 1;
  int jobs = 1;
  int ga_tournament = 2;
  double ga_crossover = 0.9;
  double ga_mutation = -1.0;  // < 0: 1/n
  double ls_sigma = 0.95;
  int epochs = 2000;
  double lr = 0.2;
  int batch = 32;
  int fitness_batch = 0;  // 0: full training set per evaluation (deterministic)
  std::string out_dir = "qevo-out";
  std::string checkpoint;  // write a restart checkpoint here after each cycle
  std::string resume;      // resume an eda-cc / eda-nocc run from this checkpoint

  EdaConfig eda_config() const {
    EdaConfig c;
    c.generations_per_cycle = gens;
    c.population = pop;
    c.elite_count = elite;
    c.alpha = alpha;
    c.sigma = sigma;
    c.accuracy_threshold = threshold;
    c.beta_lo = beta_lo;
    c.beta_hi = beta_hi;
    c.max_fitness_evals = budget;
    c.seed = seed;
    c.jobs = jobs;
    return c;
  }
};

inline std::vector<int> parse_topology(const std::string& str) {
  std::vector<int> dims;
  std::istringstream in(str);
  std::string tok;
  while (std::getline(in, tok, '-')) {
    if (tok.empty()) throw std::invalid_argument("topology: empty dimension in '" + str + "'");
    dims.push_back(std::stoi(tok));
    if (dims.back() <= 0) throw std::invalid_argument("topology: dimensions must be positive");
  }
  if (dims.size() < 2) throw std::invalid_argument("topology: need at least two dimensions");
  return dims;
}

namespace detail {

template <typename Fn>
void for_each_config_field(ExperimentConfig& cfg, Fn&& fn) {
  fn("topology", cfg.topology);
  fn("data", cfg.data);
  fn("train_n", cfg.train_n);
  fn("test_n", cfg.test_n);
  fn("noise", cfg.noise);
  fn("data_seed", cfg.data_seed);
  fn("classes", cfg.classes);
  fn("bits", cfg.bits);
  fn("switch_s", cfg.switch_s);
  fn("algo", cfg.algo);
  fn("gens", cfg.gens);
  fn("pop", cfg.pop);
  fn("elite", cfg.elite);
  fn("alpha", cfg.alpha);
  fn("sigma", cfg.sigma);
  fn("threshold", cfg.threshold);
  fn("beta_lo", cfg.beta_lo);
  fn("beta_hi", cfg.beta_hi);
  fn("budget", cfg.budget);
  fn("seed", cfg.seed);
  fn("jobs", cfg.jobs);
  fn("ga_tournament", cfg.ga_tournament);
  fn("ga_crossover", cfg.ga_crossover);
  fn("ga_mutation", cfg.ga_mutation);
  fn("ls_sigma", cfg.ls_sigma);
  fn("epochs", cfg.epochs);
  fn("lr", cfg.lr);
  fn("batch", cfg.batch);
  fn("fitness_batch", cfg.fitness_batch);
  fn("out_dir", cfg.out_dir);
  fn("checkpoint", cfg.checkpoint);
  fn("resume", cfg.resume);
}

inline std::string field_to_string(const std::string& v) { return v; }
inline std::string field_to_string(int v) { return std::to_string(v); }
inline std::string field_to_string(long v) { return std::to_string(v); }
inline std::string field_to_string(std::uint64_t v) { return std::to_string(v); }
inline std::string field_to_string(double v) { return fmt_double(v); }

inline void field_from_string(const std::string& s, std::string& v, const std::string&) { v = s; }
inline void field_from_string(const std::string& s, int& v, const std::string& p) {
  v = static_cast<int>(parse_int(s, p));
}
inline void field_from_string(const std::string& s, long& v, const std::string& p) {
  v = static_cast<long>(parse_int(s, p));
}
inline void field_from_string(const std::string& s, std::uint64_t& v, const std::string& p) {
  v = static_cast<std::uint64_t>(parse_int(s, p));
}
inline void field_from_string(const std::string& s, double& v, const std::string& p) {
  v = parse_double(s, p);
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline std::string format_config(const ExperimentConfig& cfg) {
  std::string out;
  detail::for_each_config_field(const_cast<ExperimentConfig&>(cfg), [&](const char* key, auto& v) {
    out += std::string(key) + " = " + detail::field_to_string(v) + "\n";
  });
  return out;
}

inline void save_config(const ExperimentConfig& cfg, const std::string& path) {
  detail::write_file(path, format_config(cfg));
}

inline ExperimentConfig parse_config(const std::string& text, const std::string& path) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw io_error(path, "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(t.substr(0, eq));
    std::string val = detail::trim(t.substr(eq + 1));
    bool known = false;
    detail::for_each_config_field(cfg, [&](const char* k, auto& v) {
      if (key == k) {
        detail::field_from_string(val, v, path + ":" + std::to_string(lineno));
        known = true;
      }
    });
    if (!known) throw io_error(path, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(detail::read_file(path), path);
}

// ---------------------------------------------------------------------------
// The full pipeline: float-train -> quantize -> switch -> optimize.

struct ExperimentResult {
  double float_train_acc = 0.0, float_test_acc = 0.0;
  double quant_train_acc = 0.0, quant_test_acc = 0.0;
  double initial_train_acc = 0.0, initial_test_acc = 0.0;
  double final_train_acc = 0.0, final_test_acc = 0.0;
  RunRecord record;
  QuantNetwork final_net;
  Dataset train, test;
  std::vector<std::string> warnings;
};

inline RunRecord dispatch_optimizer(const ExperimentConfig& cfg, const SearchDomain& domain,
                                    const Genome& initial, const FitnessFn& fn,
                                    const OptimizerHooks& hooks,
                                    const EdaCheckpoint* resume = nullptr) {
  if (cfg.algo == "eda") return run_eda(domain, initial, fn, cfg.eda_config(), hooks);
  if (cfg.algo == "eda-cc") return run_eda_cc(domain, initial, fn, cfg.eda_config(), hooks, resume);
  if (cfg.algo == "eda-nocc")
    return run_eda_no_cc(domain, initial, fn, cfg.eda_config(), hooks, resume);
  if (cfg.algo == "ga") {
    GaConfig g;
    g.population = cfg.pop;
    g.tournament = cfg.ga_tournament;
    g.crossover_rate = cfg.ga_crossover;
    g.mutation_rate = cfg.ga_mutation;
    g.max_fitness_evals = cfg.budget;
    g.seed = cfg.seed;
    g.jobs = cfg.jobs;
    return run_ga(domain, initial, fn, g, hooks);
  }
  if (cfg.algo == "ls") {
    LsConfig l;
    l.sigma = cfg.ls_sigma;
    l.max_fitness_evals = cfg.budget;
    l.seed = cfg.seed;
    return run_ls(domain, initial, fn, l, hooks);
  }
  if (cfg.algo == "random") return run_random(domain, fn, cfg.eda_config(), hooks);
  throw std::invalid_argument("unknown algorithm '" + cfg.algo + "'");
}

inline Dataset build_experiment_data(const ExperimentConfig& cfg) {
  std::size_t total = static_cast<std::size_t>(cfg.train_n) + static_cast<std::size_t>(cfg.test_n);
  if (cfg.train_n < 1) throw std::invalid_argument("config: train_n must be >= 1");
  if (cfg.data == "xor") return make_xor(total);
  if (cfg.data == "moons") return make_moons(total, cfg.noise, cfg.data_seed);
  if (cfg.data == "blobs") return make_blobs(total, cfg.noise, cfg.data_seed, cfg.classes);
  Dataset d = load_dataset(cfg.data);
  if (d.size() < total)
    throw std::invalid_argument("config: dataset has fewer rows than train_n + test_n");
  return d;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  ExperimentResult res;
  Dataset all = build_experiment_data(cfg);
  res.train = slice_dataset(all, 0, static_cast<std::size_t>(cfg.train_n));
  res.test = cfg.test_n > 0
                 ? slice_dataset(all, static_cast<std::size_t>(cfg.train_n),
                                 static_cast<std::size_t>(cfg.test_n))
                 : res.train;

  auto layers = make_mlp(parse_topology(cfg.topology));
  FloatNetwork fnet = train_float_reference(layers, res.train, cfg.epochs, cfg.lr,
                                            derive_seed(cfg.seed, 0xf10), cfg.batch);
  res.float_train_acc = float_accuracy(fnet, res.train);
  res.float_test_acc = float_accuracy(fnet, res.test);

  QuantNetwork q0 = quantize_network(fnet, cfg.bits, &res.warnings);
  res.quant_train_acc = fitness(q0, res.train);
  res.quant_test_acc = fitness(q0, res.test);

  SwitchResult sw = switch_perturb(q0, cfg.switch_s, derive_seed(cfg.seed, 0x517));
  res.initial_train_acc = fitness(sw.net, res.train);
  res.initial_test_acc = fitness(sw.net, res.test);

  Genome initial = extract_choices(sw.domain, sw.net);
  const SearchDomain& domain = sw.domain;
  FitnessFn fn = cfg.fitness_batch > 0
                     ? make_minibatch_fitness(domain, sw.net, res.train,
                                              static_cast<std::size_t>(cfg.fitness_batch),
                                              derive_seed(cfg.seed, 0xba7c4))
                     : make_fitness(domain, sw.net, res.train);

  fs::create_directories(cfg.out_dir);
  auto p = [&](const char* name) { return (fs::path(cfg.out_dir) / name).string(); };
  save_config(cfg, p("config.cfg"));
  save_float_network(fnet, p("float.fnet"));
  save_quant_network(q0, p("initial.qnet"));
  save_quant_network(sw.net, p("switched.qnet"));
  save_domain(sw.domain, p("domain.sdom"));
  save_dataset_csv(res.train, p("train.csv"));
  if (cfg.test_n > 0) save_dataset_csv(res.test, p("test.csv"));

  CurveWriter curve(p("curve.csv"));
  OptimizerHooks hooks;
  hooks.on_row = [&curve](const GenerationRow& row) { curve.add(row); };
  if (!cfg.checkpoint.empty())
    hooks.on_cycle_end = [&cfg](const EdaCheckpoint& ck) { save_checkpoint(ck, cfg.checkpoint); };

  EdaCheckpoint resume_ck;
  const EdaCheckpoint* resume = nullptr;
  if (!cfg.resume.empty()) {
    resume_ck = load_checkpoint(cfg.resume);
    if (resume_ck.algo != cfg.algo)
      throw std::invalid_argument("resume: checkpoint algorithm '" + resume_ck.algo +
                                  "' does not match config algo '" + cfg.algo + "'");
    resume = &resume_ck;
  }

  res.record = dispatch_optimizer(cfg, domain, initial, fn, hooks, resume);
  curve.close();

  res.final_net = apply_genome(domain, res.record.best, sw.net);
  res.final_train_acc = fitness(res.final_net, res.train);
  res.final_test_acc = fitness(res.final_net, res.test);

  save_quant_network(res.final_net, p("final.qnet"), FileFormat::kBinary);
  save_quant_network(res.final_net, p("final.qnet.txt"), FileFormat::kText);

  std::string summary;
  auto add = [&summary](const std::string& k, const std::string& v) {
    summary += k + " = " + v + "\n";
  };
  add("float_train_acc", detail::fmt_double(res.float_train_acc));
  add("float_test_acc", detail::fmt_double(res.float_test_acc));
  add("quant_train_acc", detail::fmt_double(res.quant_train_acc));
  add("quant_test_acc", detail::fmt_double(res.quant_test_acc));
  add("initial_train_acc", detail::fmt_double(res.initial_train_acc));
  add("initial_test_acc", detail::fmt_double(res.initial_test_acc));
  add("final_train_acc", detail::fmt_double(res.final_train_acc));
  add("final_test_acc", detail::fmt_double(res.final_test_acc));
  add("best_fitness", detail::fmt_double(res.record.best_fitness));
  add("evals_used", std::to_string(res.record.evals_used));
  add("truncated", res.record.truncated ? "1" : "0");
  add("cycles", std::to_string(res.record.partitions.size() + 1));
  detail::write_file(p("summary.txt"), summary);
  if (!res.warnings.empty()) {
    std::string wtext;
    for (const auto& w : res.warnings) wtext += w + "\n";
    detail::write_file(p("warnings.txt"), wtext);
  }
  return res;
}

}  // namespace qevo

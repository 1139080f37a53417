// qevo: gradient-free trainer for k-bit quantized networks.
//
// Pipeline subcommands: train-float -> quantize -> switch -> optimize,
// plus eval and report. `optimize --config file.cfg` runs the whole
// pipeline in one go; explicit flags override config-file values.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qevo/qevo.hpp"

namespace fs = std::filesystem;
using namespace qevo;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("QEVO_OUT_DIR");
  return env && *env ? std::string(env) : std::string("qevo-out");
}

void print_config(const ExperimentConfig& cfg) { std::cout << format_config(cfg); }

FileFormat parse_format(const std::string& s) {
  if (s == "text") return FileFormat::kText;
  if (s == "binary") return FileFormat::kBinary;
  throw CLI::ValidationError("--format", "must be 'text' or 'binary'");
}

void check_eda_flags(const ExperimentConfig& cfg) {
  if (!(cfg.sigma > 0.0 && cfg.sigma < 1.0))
    throw CLI::ValidationError("--sigma", "must lie in (0, 1)");
  if (cfg.algo != "eda" && cfg.algo != "eda-cc" && cfg.algo != "eda-nocc" && cfg.algo != "ga" &&
      cfg.algo != "ls" && cfg.algo != "random")
    throw CLI::ValidationError("--algo", "must be one of eda, eda-cc, eda-nocc, ga, ls, random");
}

// Optimizer stage shared by the staged and --config modes: runs the search
// over an already-switched network, writes curve/final/summary into out_dir.
void optimize_staged(const ExperimentConfig& cfg, const QuantNetwork& switched,
                     const SearchDomain& domain, const Dataset& train, const Dataset& test) {
  validate_domain(domain, switched);
  double initial_train = fitness(switched, train);
  double initial_test = test.size() ? fitness(switched, test) : 0.0;
  Genome initial = extract_choices(domain, switched);
  FitnessFn fn = cfg.fitness_batch > 0
                     ? make_minibatch_fitness(domain, switched, train,
                                              static_cast<std::size_t>(cfg.fitness_batch),
                                              derive_seed(cfg.seed, 0xba7c4))
                     : make_fitness(domain, switched, train);

  fs::create_directories(cfg.out_dir);
  auto p = [&](const char* name) { return (fs::path(cfg.out_dir) / name).string(); };
  save_config(cfg, p("config.cfg"));
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
      throw std::invalid_argument("resume: checkpoint is for algorithm '" + resume_ck.algo + "'");
    resume = &resume_ck;
  }
  RunRecord record = dispatch_optimizer(cfg, domain, initial, fn, hooks, resume);
  curve.close();

  QuantNetwork final_net = apply_genome(domain, record.best, switched);
  double final_train = fitness(final_net, train);
  double final_test = test.size() ? fitness(final_net, test) : 0.0;
  save_quant_network(final_net, p("final.qnet"), FileFormat::kBinary);
  save_quant_network(final_net, p("final.qnet.txt"), FileFormat::kText);
  std::string summary;
  summary += "initial_train_acc = " + detail::fmt_double(initial_train) + "\n";
  summary += "initial_test_acc = " + detail::fmt_double(initial_test) + "\n";
  summary += "final_train_acc = " + detail::fmt_double(final_train) + "\n";
  summary += "final_test_acc = " + detail::fmt_double(final_test) + "\n";
  summary += "best_fitness = " + detail::fmt_double(record.best_fitness) + "\n";
  summary += "evals_used = " + std::to_string(record.evals_used) + "\n";
  summary += "truncated = " + std::string(record.truncated ? "1" : "0") + "\n";
  detail::write_file(p("summary.txt"), summary);
  std::cout << "final_train_acc = " << detail::fmt_double(final_train) << "\n";
  std::cout << "evals_used = " << record.evals_used << "\n";
  std::cout << "out_dir = " << cfg.out_dir << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"gradient-free trainer for k-bit quantized feed-forward networks"};
  app.require_subcommand(1);

  ExperimentConfig cfg;

  // --config is honored before flag overrides; see pre-scan below.
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) cfg = load_config(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) cfg = load_config(a.substr(9));
  }

  // train-float -----------------------------------------------------------
  auto* tf = app.add_subcommand("train-float", "train the full-precision reference network");
  std::string tf_out = "float.fnet", tf_format = "text";
  bool tf_rescale = false;
  tf->add_option("--topology", cfg.topology, "dense dims, e.g. 2-16-8-2");
  tf->add_option("--data", cfg.data, "dataset spec (xor | moons:... | blobs:... | file:path)");
  tf->add_option("--epochs", cfg.epochs);
  tf->add_option("--lr", cfg.lr);
  tf->add_option("--batch", cfg.batch);
  tf->add_option("--seed", cfg.seed);
  tf->add_option("--out", tf_out, "output network file");
  tf->add_option("--format", tf_format, "text | binary");
  tf->add_flag("--rescale", tf_rescale, "rescale file datasets to [-1,1] per feature");
  tf->callback([&]() {
    Dataset data = load_dataset(cfg.data, tf_rescale);
    auto layers = make_mlp(parse_topology(cfg.topology));
    FloatNetwork net =
        train_float_reference(layers, data, cfg.epochs, cfg.lr, derive_seed(cfg.seed, 0xf10), cfg.batch);
    save_float_network(net, tf_out, parse_format(tf_format));
    std::cout << "train_acc = " << detail::fmt_double(float_accuracy(net, data)) << "\n";
    std::cout << "saved = " << tf_out << "\n";
  });

  // quantize ----------------------------------------------------------------
  auto* qz = app.add_subcommand("quantize", "quantize a float network to k bits");
  std::string qz_net, qz_out = "initial.qnet", qz_format = "text";
  qz->add_option("--net", qz_net, "float network file")->required();
  qz->add_option("--bits", cfg.bits);
  qz->add_option("--out", qz_out);
  qz->add_option("--format", qz_format, "text | binary");
  qz->callback([&]() {
    FloatNetwork fnet = load_float_network(qz_net);
    std::vector<std::string> log;
    QuantNetwork qnet = quantize_network(fnet, cfg.bits, &log);
    for (const auto& line : log) std::cerr << "warning: " << line << "\n";
    save_quant_network(qnet, qz_out, parse_format(qz_format));
    std::cout << "saved = " << qz_out << "\n";
  });

  // switch ------------------------------------------------------------------
  auto* sw = app.add_subcommand("switch", "perturb s of the codes and emit the search domain");
  std::string sw_net, sw_out = "switched.qnet", sw_domain = "domain.sdom", sw_format = "text";
  sw->add_option("--net", sw_net, "quantized network file")->required();
  sw->add_option("--s", cfg.switch_s, "fraction of weights to perturb");
  sw->add_option("--seed", cfg.seed);
  sw->add_option("--out", sw_out);
  sw->add_option("--domain", sw_domain, "search domain output file");
  sw->add_option("--format", sw_format, "text | binary");
  sw->callback([&]() {
    if (!(cfg.switch_s >= 0.0 && cfg.switch_s <= 1.0))
      throw CLI::ValidationError("--s", "must lie in [0, 1]");
    QuantNetwork qnet = load_quant_network(sw_net);
    SwitchResult res = switch_perturb(qnet, cfg.switch_s, derive_seed(cfg.seed, 0x517));
    save_quant_network(res.net, sw_out, parse_format(sw_format));
    save_domain(res.domain, sw_domain);
    std::cout << "saved = " << sw_out << "\n";
    std::cout << "domain = " << sw_domain << "\n";
  });

  // optimize ----------------------------------------------------------------
  auto* op = app.add_subcommand("optimize", "search the discrete weight space");
  std::string op_config, op_net, op_domain, op_test;
  bool op_rescale = false;
  op->add_option("--config", op_config, "experiment config file (full pipeline mode)");
  op->add_option("--net", op_net, "switched quantized network (staged mode)");
  op->add_option("--domain", op_domain, "search domain file (staged mode)");
  op->add_option("--data", cfg.data, "training dataset spec");
  op->add_option("--test", op_test, "held-out dataset spec (staged mode)");
  op->add_flag("--rescale", op_rescale, "rescale file datasets to [-1,1] per feature");
  op->add_option("--algo", cfg.algo, "eda | eda-cc | eda-nocc | ga | ls | random");
  op->add_option("--seed", cfg.seed);
  op->add_option("--budget", cfg.budget, "max fitness evaluations");
  op->add_option("--threshold", cfg.threshold, "stop restarting once best fitness exceeds this");
  op->add_option("--beta-lo", cfg.beta_lo);
  op->add_option("--beta-hi", cfg.beta_hi);
  op->add_option("--sigma", cfg.sigma);
  op->add_option("--alpha", cfg.alpha);
  op->add_option("--gens", cfg.gens, "generations per cycle");
  op->add_option("--pop", cfg.pop);
  op->add_option("--elite", cfg.elite);
  op->add_option("--jobs", cfg.jobs, "parallel fitness evaluators");
  op->add_option("--fitness-batch", cfg.fitness_batch,
                 "minibatch size per fitness evaluation (0: full training set)");
  op->add_option("--out-dir", cfg.out_dir);
  op->add_option("--checkpoint", cfg.checkpoint, "write a per-cycle restart checkpoint here");
  op->add_option("--resume", cfg.resume, "resume from a checkpoint written by --checkpoint");
  op->add_option("--topology", cfg.topology);
  op->add_option("--train-n", cfg.train_n);
  op->add_option("--test-n", cfg.test_n);
  op->add_option("--noise", cfg.noise);
  op->add_option("--data-seed", cfg.data_seed);
  op->add_option("--bits", cfg.bits);
  op->add_option("--s", cfg.switch_s);
  op->callback([&]() {
    check_eda_flags(cfg);
    if (cfg.out_dir == "qevo-out") cfg.out_dir = default_out_dir();  // env fallback
    print_config(cfg);
    if (!op_net.empty()) {
      if (op_domain.empty())
        throw CLI::ValidationError("--domain", "staged mode needs --net, --domain and --data");
      QuantNetwork net = load_quant_network(op_net);
      SearchDomain domain = load_domain(op_domain);
      Dataset train = load_dataset(cfg.data, op_rescale);
      Dataset test = op_test.empty() ? Dataset{} : load_dataset(op_test, op_rescale);
      optimize_staged(cfg, net, domain, train, test);
    } else if (!op_config.empty()) {
      ExperimentResult res = run_experiment(cfg);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "initial_train_acc = " << detail::fmt_double(res.initial_train_acc) << "\n";
      std::cout << "final_train_acc = " << detail::fmt_double(res.final_train_acc) << "\n";
      std::cout << "final_test_acc = " << detail::fmt_double(res.final_test_acc) << "\n";
      std::cout << "evals_used = " << res.record.evals_used << "\n";
      std::cout << "out_dir = " << cfg.out_dir << "\n";
    } else {
      throw CLI::ValidationError("optimize", "need either --config or --net/--domain/--data");
    }
  });

  // eval --------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "accuracy of a saved network on a dataset");
  std::string ev_net, ev_data;
  bool ev_rescale = false;
  ev->add_option("--net", ev_net, "network file (quantized or float)")->required();
  ev->add_option("--data", ev_data, "dataset spec")->required();
  ev->add_flag("--rescale", ev_rescale);
  ev->callback([&]() {
    Dataset data = load_dataset(ev_data, ev_rescale);
    std::string head = detail::read_file(ev_net).substr(0, 9);
    double acc = 0.0;
    if (head.rfind("QEVOBFN1", 0) == 0 || head.rfind("QEVO fnet", 0) == 0) {
      acc = float_accuracy(load_float_network(ev_net), data);
    } else {
      acc = fitness(load_quant_network(ev_net), data);
    }
    std::cout << "accuracy = " << detail::fmt_double(acc) << "\n";
  });

  // report ------------------------------------------------------------------
  auto* rp = app.add_subcommand("report", "summarize an experiment output directory");
  std::string rp_dir;
  bool rp_curves = false;
  rp->add_option("--dir", rp_dir, "experiment output directory")->required();
  rp->add_flag("--curves", rp_curves, "dump curve.csv rows to stdout");
  rp->callback([&]() {
    auto p = [&](const char* name) { return (fs::path(rp_dir) / name).string(); };
    std::cout << "== config ==\n" << detail::read_file(p("config.cfg"));
    std::cout << "== summary ==\n" << detail::read_file(p("summary.txt"));
    auto rows = load_curve(p("curve.csv"));
    std::cout << "== curve ==\n";
    std::cout << "rows = " << rows.size() << "\n";
    if (!rows.empty()) {
      std::cout << "final_best_fitness = " << detail::fmt_double(rows.back().best_fitness) << "\n";
      std::cout << "final_evals = " << rows.back().evals << "\n";
    }
    if (rp_curves) std::cout << detail::read_file(p("curve.csv"));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const qevo::io_error& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "qevo/qevo.hpp"

using namespace qevo;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "qevo_io_test";
  fs::create_directories(dir);
  return dir / name;
}

FloatNetwork sample_float_net() {
  FloatNetwork net;
  net.layers = make_mlp({2, 3, 2});
  Rng rng(8);
  net.weights.resize(count_params(net.layers));
  for (auto& w : net.weights) w = rng.uniform(-1.3, 1.3);
  return net;
}

QuantNetwork sample_quant_net() {
  return quantize_network(sample_float_net(), 4);
}

}  // namespace

TEST_CASE("float network text and binary round-trips are exact") {
  FloatNetwork net = sample_float_net();
  for (auto fmt : {FileFormat::kText, FileFormat::kBinary}) {
    auto path = tmp(fmt == FileFormat::kText ? "f.txt.fnet" : "f.bin.fnet").string();
    save_float_network(net, path, fmt);
    FloatNetwork back = load_float_network(path);
    REQUIRE(back.layers.size() == net.layers.size());
    CHECK(back.weights == net.weights);
  }
}

TEST_CASE("quant network text and binary round-trips are exact") {
  QuantNetwork net = sample_quant_net();
  for (auto fmt : {FileFormat::kText, FileFormat::kBinary}) {
    auto path = tmp(fmt == FileFormat::kText ? "q.txt.qnet" : "q.bin.qnet").string();
    save_quant_network(net, path, fmt);
    QuantNetwork back = load_quant_network(path);
    CHECK(back.codes == net.codes);
    CHECK(back.weights == net.weights);
    REQUIRE(back.codebooks.size() == net.codebooks.size());
    for (std::size_t l = 0; l < net.codebooks.size(); ++l) {
      CHECK(back.codebooks[l].delta == net.codebooks[l].delta);
      CHECK(back.codebooks[l].levels == net.codebooks[l].levels);
    }
    CHECK(back.aq.bits == net.aq.bits);
  }
}

TEST_CASE("conv topologies survive serialization") {
  FloatNetwork net;
  net.layers = {LayerSpec::conv2d(1, 3, 3, 2, 3), LayerSpec::dense(18, 2, Activation::kIdentity)};
  Rng rng(5);
  net.weights.resize(count_params(net.layers));
  for (auto& w : net.weights) w = rng.uniform(-1.0, 1.0);
  auto path = tmp("conv.fnet").string();
  save_float_network(net, path, FileFormat::kBinary);
  FloatNetwork back = load_float_network(path);
  REQUIRE(back.layers[0].kind == LayerKind::kConv2d);
  CHECK(back.layers[0].ksize == 3);
  CHECK(back.weights == net.weights);
}

TEST_CASE("domain round-trip") {
  SearchDomain d;
  d.candidates = {{0, 3}, {1, 2}, {0, 1, 2, 4}};
  auto path = tmp("d.sdom").string();
  save_domain(d, path);
  SearchDomain back = load_domain(path);
  CHECK(back.candidates == d.candidates);
}

TEST_CASE("probability model round-trip is bit exact") {
  SearchDomain dom;
  dom.candidates.assign(5, {0, 1, 2});
  Genome anchor;
  anchor.choices.assign(5, 1);
  ProbModel m = init_sigma_greedy(anchor, 0.7, dom);
  std::vector<Genome> elite(3, anchor);
  m = update(m, elite, 0.37);
  auto path = tmp("m.pmodel").string();
  save_probmodel(m, path);
  ProbModel back = load_probmodel(path);
  CHECK(back.rows == m.rows);
}

TEST_CASE("checkpoint round-trip") {
  EdaCheckpoint ck;
  ck.algo = "eda-cc";
  ck.cycle = 3;
  ck.global_gen = 42;
  ck.evals = 841;
  ck.best_fitness = 0.9375;
  ck.best.choices = {0, 1, 1, 0};
  ck.model.rows = {{0.25, 0.75}, {0.5, 0.5}, {0.95, 0.05}, {0.1, 0.9}};
  auto path = tmp("ck.txt").string();
  save_checkpoint(ck, path);
  EdaCheckpoint back = load_checkpoint(path);
  CHECK(back.algo == ck.algo);
  CHECK(back.cycle == ck.cycle);
  CHECK(back.global_gen == ck.global_gen);
  CHECK(back.evals == ck.evals);
  CHECK(back.best_fitness == ck.best_fitness);
  CHECK(back.best == ck.best);
  CHECK(back.model.rows == ck.model.rows);
}

TEST_CASE("curve files round-trip through the reader") {
  auto path = tmp("c.csv").string();
  std::vector<GenerationRow> rows{{0, 1, 0.5, 0.5, 0, 0.0},
                                  {1, 21, 0.625, 0.625, 0, 0.0},
                                  {2, 41, 0.625, 0.5, 1, 0.4721}};
  {
    CurveWriter w(path);
    for (const auto& r : rows) w.add(r);
  }
  auto back = load_curve(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].generation == rows[i].generation);
    CHECK(back[i].evals == rows[i].evals);
    CHECK(back[i].best_fitness == rows[i].best_fitness);
    CHECK(back[i].pop_best == rows[i].pop_best);
    CHECK(back[i].cycle == rows[i].cycle);
    CHECK(back[i].beta == rows[i].beta);
  }
}

TEST_CASE("dataset csv round-trip and malformed input errors") {
  Dataset d = make_moons(40, 0.15, 9);
  auto path = tmp("d.csv").string();
  save_dataset_csv(d, path);
  Dataset back = load_dataset_csv(path);
  CHECK(back.inputs.data == d.inputs.data);
  CHECK(back.labels == d.labels);
  CHECK(back.num_classes == d.num_classes);

  auto bad = tmp("bad.csv").string();
  detail::write_file(bad, "0.5,0.25,1\n0.5,0\n");
  CHECK_THROWS_MATCHES(load_dataset_csv(bad), io_error,
                       Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 2")));
  detail::write_file(bad, "0.5,0.25,0.7\n");
  CHECK_THROWS_AS(load_dataset_csv(bad), io_error);  // non-integer label
  detail::write_file(bad, "1.0,nope,1\n");
  CHECK_THROWS_AS(load_dataset_csv(bad), io_error);
}

TEST_CASE("loaders reject missing and corrupted files") {
  CHECK_THROWS_AS(load_float_network("/nonexistent/net.fnet"), io_error);
  CHECK_THROWS_AS(load_curve("/nonexistent/curve.csv"), io_error);
  auto path = tmp("garbage.bin").string();
  detail::write_file(path, "QEVOBFN1\x03");
  CHECK_THROWS_AS(load_float_network(path), io_error);
  detail::write_file(path, "HELLO");
  CHECK_THROWS_AS(load_quant_network(path), io_error);
}

TEST_CASE("experiment config round-trips and rejects unknown keys") {
  ExperimentConfig cfg;
  cfg.topology = "2-5-3";
  cfg.data = "blobs";
  cfg.noise = 0.225;
  cfg.algo = "ga";
  cfg.budget = 777;
  cfg.seed = 123456789;
  cfg.ga_mutation = 0.0625;
  cfg.out_dir = "/tmp/somewhere";
  cfg.checkpoint = "ck.txt";
  auto path = tmp("e.cfg").string();
  save_config(cfg, path);
  ExperimentConfig back = load_config(path);
  CHECK(format_config(back) == format_config(cfg));

  detail::write_file(path, "nonsense = 3\n");
  CHECK_THROWS_AS(load_config(path), io_error);
  detail::write_file(path, "# comment\n\nseed = 9\n");
  CHECK(load_config(path).seed == 9);
}

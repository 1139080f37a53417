#include <catch2/catch_amalgamated.hpp>

#include "qevo/dataset.hpp"
#include "qevo/network.hpp"

using namespace qevo;

namespace {

// network with every layer sharing a [-1,1] codebook, all codes at level 0
QuantNetwork zero_net(const std::vector<int>& dims, int bits) {
  QuantNetwork net;
  net.layers = make_mlp(dims);
  net.aq = ActivationQuantizer(bits);
  Codebook cb = build_codebook({-1.0, 1.0}, bits);
  auto zero = static_cast<std::uint32_t>(code_of_level(0.0, cb));
  for (std::size_t l = 0; l < net.layers.size(); ++l) net.codebooks.push_back(cb);
  net.codes.assign(count_params(net.layers), zero);
  net.refresh_weights();
  return net;
}

void set_level(QuantNetwork& net, std::size_t flat_index, double level) {
  std::size_t off = 0, l = 0;
  while (flat_index >= off + net.layers[l].param_count()) off += net.layers[l++].param_count();
  net.codes[flat_index] = static_cast<std::uint32_t>(code_of_level(level, net.codebooks[l]));
}

}  // namespace

TEST_CASE("count_params totals weights and biases") {
  CHECK(count_params(make_mlp({2, 2, 1})) == 9);
  CHECK(count_params(make_mlp({2, 8, 2})) == 42);
  CHECK_THROWS_AS(count_params({}), std::invalid_argument);
  CHECK_THROWS_AS(make_mlp({5}), std::invalid_argument);
}

TEST_CASE("topology validation catches mismatched layers") {
  std::vector<LayerSpec> bad{LayerSpec::dense(2, 3), LayerSpec::dense(4, 1)};
  CHECK_THROWS_AS(validate_topology(bad), std::invalid_argument);
  std::vector<LayerSpec> conv{LayerSpec::conv2d(1, 4, 4, 2, 2)};
  CHECK_THROWS_AS(validate_topology(conv), std::invalid_argument);  // even kernel
}

TEST_CASE("apply_genome substitutes candidate codes") {
  QuantNetwork net = zero_net({2, 2}, 2);
  SearchDomain domain;
  for (std::size_t i = 0; i < net.codes.size(); ++i)
    domain.candidates.push_back({1, 3});  // levels -2/3 and 2/3
  Genome zeros;
  zeros.choices.assign(net.codes.size(), 0);

  QuantNetwork a = apply_genome(domain, zeros, net);
  for (auto c : a.codes) CHECK(c == 1);
  for (auto c : net.codes) CHECK(c == 2);  // input network untouched

  Genome flip = zeros;
  flip.choices[3] = 1;
  QuantNetwork b = apply_genome(domain, flip, net);
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < a.codes.size(); ++i) diffs += a.codes[i] != b.codes[i];
  CHECK(diffs == 1);
  CHECK(b.codes[3] == 3);

  CHECK(extract_choices(domain, b) == flip);

  Genome wrong;
  wrong.choices.assign(net.codes.size() + 1, 0);
  CHECK_THROWS_AS(apply_genome(domain, wrong, net), std::invalid_argument);
}

TEST_CASE("forward: zero network gives zero logits") {
  QuantNetwork net = zero_net({2, 4, 2}, 4);
  Matrix batch(3, 2);
  batch.at(0, 0) = 0.3;
  batch.at(1, 1) = -0.9;
  batch.at(2, 0) = 1.0;
  Matrix out = forward(net, batch);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("forward: single dense layer, no quantization on the output") {
  QuantNetwork net = zero_net({2, 1}, 2);
  set_level(net, 0, 1.0);
  set_level(net, 1, 1.0);
  net.refresh_weights();
  Matrix batch(1, 2);
  batch.at(0, 0) = 0.5;
  batch.at(0, 1) = 0.25;
  Matrix out = forward(net, batch);
  CHECK(out.at(0, 0) == 0.75);  // raw affine result, not a grid value
}

TEST_CASE("forward: hidden activations pass through the k-bit grid") {
  QuantNetwork net = zero_net({1, 1, 1}, 2);
  set_level(net, 0, 1.0);  // hidden weight
  set_level(net, 2, 1.0);  // output weight
  net.refresh_weights();
  Matrix batch(1, 1);
  batch.at(0, 0) = 0.5;
  ForwardProbe probe;
  Matrix out = forward(net, batch, &probe);
  REQUIRE(probe.hidden.size() == 1);
  CHECK(probe.hidden[0] == 2.0 / 3.0);  // 0.5 quantized up on the k=2 grid
  CHECK(out.at(0, 0) == 2.0 / 3.0);
}

TEST_CASE("forward: probed hidden values always sit on the activation grid") {
  QuantNetwork net = zero_net({2, 5, 3, 2}, 4);
  Rng rng(11);
  for (std::size_t i = 0; i < net.codes.size(); ++i)
    net.codes[i] = static_cast<std::uint32_t>(rng.below(net.codebooks[0].levels.size()));
  net.refresh_weights();
  Matrix batch(16, 2);
  for (double& v : batch.data) v = rng.uniform(-1.0, 1.0);
  ForwardProbe probe;
  forward(net, batch, &probe);
  REQUIRE(!probe.hidden.empty());
  for (double v : probe.hidden) {
    REQUIRE(v >= -1.0);
    REQUIRE(v <= 1.0);
    double m = v / net.aq.delta;
    bool on_grid = std::abs(m - std::round(m)) < 1e-9 || v == 1.0 || v == -1.0;
    REQUIRE(on_grid);
  }
}

TEST_CASE("forward: conv2d cross-correlation with same padding") {
  // identity kernel: center tap 1, elsewhere 0
  QuantNetwork net;
  net.layers = {LayerSpec::conv2d(1, 2, 2, 1, 3, Activation::kIdentity)};
  net.aq = ActivationQuantizer(1);
  net.codebooks = {build_codebook({0.0, 1.0}, 1)};
  net.codes.assign(count_params(net.layers), 0);
  net.codes[4] = 1;  // kernel center (1,1) of the 3x3
  net.refresh_weights();
  Matrix batch(1, 4);
  for (int i = 0; i < 4; ++i) batch.at(0, i) = 0.1 * (i + 1);
  Matrix out = forward(net, batch);
  REQUIRE(out.cols == 4);
  for (int i = 0; i < 4; ++i) CHECK(out.at(0, i) == batch.at(0, i));

  // all-ones kernel on all-ones 2x2 input: every window covers 4 cells
  for (std::size_t i = 0; i + 1 < net.codes.size(); ++i) net.codes[i] = 1;
  net.refresh_weights();
  Matrix ones(1, 4);
  for (double& v : ones.data) v = 1.0;
  Matrix sums = forward(net, ones);
  for (int i = 0; i < 4; ++i) CHECK(sums.at(0, i) == 4.0);
}

TEST_CASE("fitness counts argmax hits with low-index tie break") {
  Dataset xorset = make_xor(4);

  // always-correct two-layer lookup is overkill; a constant net scores the
  // label-0 fraction through the tie break
  QuantNetwork constant = zero_net({2, 2}, 2);
  CHECK(fitness(constant, xorset) == 0.5);

  // logit0 = 0, logit1 = x + y + 1 gets exactly three of four XOR points
  QuantNetwork net = zero_net({2, 2}, 2);
  set_level(net, 2, 1.0);  // w[1][0]
  set_level(net, 3, 1.0);  // w[1][1]
  set_level(net, 5, 1.0);  // bias[1]
  net.refresh_weights();
  CHECK(fitness(net, xorset) == 0.75);

  // an everything-correct network on a single-class set
  Dataset ones;
  ones.inputs = Matrix(5, 2);
  ones.labels.assign(5, 1);
  ones.num_classes = 2;
  CHECK(fitness(net, ones) == 1.0);

  Dataset empty;
  empty.num_classes = 2;
  CHECK_THROWS_AS(fitness(net, empty), std::invalid_argument);

  Dataset wrong = xorset;
  wrong.inputs = Matrix(4, 3);
  CHECK_THROWS_AS(fitness(net, wrong), std::invalid_argument);
}

TEST_CASE("fitness is deterministic and bounded") {
  QuantNetwork net = zero_net({2, 6, 2}, 4);
  Rng rng(3);
  for (std::size_t i = 0; i < net.codes.size(); ++i)
    net.codes[i] = static_cast<std::uint32_t>(rng.below(net.codebooks[0].levels.size()));
  net.refresh_weights();
  Dataset moons = make_moons(64, 0.2, 5);
  double a = fitness(net, moons);
  double b = fitness(net, moons);
  CHECK(a == b);
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
}

TEST_CASE("genome locality: one choice flips at most one code") {
  QuantNetwork net = zero_net({2, 4, 2}, 2);
  std::size_t n = net.codes.size();
  SearchDomain domain;
  for (std::size_t i = 0; i < n; ++i) domain.candidates.push_back({0, 2, 4});
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Genome g;
    g.choices.resize(n);
    for (auto& c : g.choices) c = static_cast<std::uint16_t>(rng.below(3));
    Genome h = g;
    std::size_t pos = rng.below(n);
    h.choices[pos] = static_cast<std::uint16_t>((h.choices[pos] + 1) % 3);
    QuantNetwork a = apply_genome(domain, g, net);
    QuantNetwork b = apply_genome(domain, h, net);
    std::size_t diffs = 0;
    for (std::size_t i = 0; i < n; ++i) diffs += a.codes[i] != b.codes[i];
    CHECK(diffs == 1);
  }
}

TEST_CASE("domain validation") {
  QuantNetwork net = zero_net({2, 2}, 1);  // levels {-1, 1} per layer... bits=1 => 2..3 levels
  SearchDomain ok = full_domain(net);
  CHECK_NOTHROW(validate_domain(ok, net));
  SearchDomain dup = ok;
  dup.candidates[0] = {1, 1};
  CHECK_THROWS_AS(validate_domain(dup, net), std::invalid_argument);
  SearchDomain small = ok;
  small.candidates[2] = {0};
  CHECK_THROWS_AS(validate_domain(small, net), std::invalid_argument);
  SearchDomain oob = ok;
  oob.candidates[1] = {0, 99};
  CHECK_THROWS_AS(validate_domain(oob, net), std::invalid_argument);
}

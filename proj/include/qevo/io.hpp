#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qevo/common.hpp"
#include "qevo/dataset.hpp"
#include "qevo/float_train.hpp"
#include "qevo/network.hpp"
#include "qevo/optimizers.hpp"
#include "qevo/probmodel.hpp"

namespace qevo {

enum class FileFormat { kText, kBinary };

namespace detail {

// Shortest round-trip decimal form; locale independent.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok, const std::string& path) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw io_error(path, "malformed number '" + tok + "'");
  return v;
}

inline long long parse_int(const std::string& tok, const std::string& path) {
  long long v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw io_error(path, "malformed integer '" + tok + "'");
  return v;
}

struct Tokens {
  std::istringstream in;
  std::string path;

  Tokens(std::string text, std::string p) : in(std::move(text)), path(std::move(p)) {}

  std::string next() {
    std::string tok;
    if (!(in >> tok)) throw io_error(path, "unexpected end of file");
    return tok;
  }

  void expect(const std::string& literal) {
    std::string tok = next();
    if (tok != literal) throw io_error(path, "expected '" + literal + "', got '" + tok + "'");
  }

  double real() { return parse_double(next(), path); }
  long long integer() { return parse_int(next(), path); }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(path, "cannot open for writing");
  out << content;
  if (!out) throw io_error(path, "write failed");
}

// Binary primitives, little endian byte order.
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct BinReader {
  const std::string& buf;
  std::size_t pos = 0;
  std::string path;

  std::uint32_t u32() {
    if (pos + 4 > buf.size()) throw io_error(path, "truncated binary file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    if (pos + 8 > buf.size()) throw io_error(path, "truncated binary file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

inline const char* act_name(Activation a) {
  return a == Activation::kReluQuantize ? "reluq" : "identity";
}

inline Activation act_from(const std::string& s, const std::string& path) {
  if (s == "reluq") return Activation::kReluQuantize;
  if (s == "identity") return Activation::kIdentity;
  throw io_error(path, "unknown activation '" + s + "'");
}

inline void write_topology_text(std::string& out, const std::vector<LayerSpec>& layers) {
  out += "layers " + std::to_string(layers.size()) + "\n";
  for (const auto& s : layers) {
    if (s.kind == LayerKind::kDense) {
      out += "dense " + std::to_string(s.in_features) + " " + std::to_string(s.out_features) +
             " " + act_name(s.act) + "\n";
    } else {
      out += "conv2d " + std::to_string(s.in_ch) + " " + std::to_string(s.in_h) + " " +
             std::to_string(s.in_w) + " " + std::to_string(s.out_ch) + " " +
             std::to_string(s.ksize) + " " + act_name(s.act) + "\n";
    }
  }
}

inline std::vector<LayerSpec> read_topology_text(Tokens& t) {
  t.expect("layers");
  auto count = static_cast<std::size_t>(t.integer());
  std::vector<LayerSpec> layers;
  for (std::size_t l = 0; l < count; ++l) {
    std::string kind = t.next();
    if (kind == "dense") {
      int in = static_cast<int>(t.integer());
      int out = static_cast<int>(t.integer());
      layers.push_back(LayerSpec::dense(in, out, act_from(t.next(), t.path)));
    } else if (kind == "conv2d") {
      int ic = static_cast<int>(t.integer());
      int h = static_cast<int>(t.integer());
      int w = static_cast<int>(t.integer());
      int oc = static_cast<int>(t.integer());
      int k = static_cast<int>(t.integer());
      layers.push_back(LayerSpec::conv2d(ic, h, w, oc, k, act_from(t.next(), t.path)));
    } else {
      throw io_error(t.path, "unknown layer kind '" + kind + "'");
    }
  }
  validate_topology(layers);
  return layers;
}

inline void write_topology_bin(std::string& out, const std::vector<LayerSpec>& layers) {
  put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& s : layers) {
    put_u32(out, s.kind == LayerKind::kDense ? 0 : 1);
    put_u32(out, s.act == Activation::kReluQuantize ? 0 : 1);
    for (int v : {s.in_features, s.out_features, s.in_ch, s.in_h, s.in_w, s.out_ch, s.ksize})
      put_u32(out, static_cast<std::uint32_t>(v));
  }
}

inline std::vector<LayerSpec> read_topology_bin(BinReader& r) {
  auto count = r.u32();
  std::vector<LayerSpec> layers(count);
  for (auto& s : layers) {
    s.kind = r.u32() == 0 ? LayerKind::kDense : LayerKind::kConv2d;
    s.act = r.u32() == 0 ? Activation::kReluQuantize : Activation::kIdentity;
    int* fields[] = {&s.in_features, &s.out_features, &s.in_ch, &s.in_h,
                     &s.in_w,        &s.out_ch,       &s.ksize};
    for (int* f : fields) *f = static_cast<int>(r.u32());
  }
  validate_topology(layers);
  return layers;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Network files. Text variants diff cleanly; binary variants are little
// endian with an 8-byte magic prefix.

inline void save_float_network(const FloatNetwork& net, const std::string& path,
                               FileFormat fmt = FileFormat::kText) {
  if (fmt == FileFormat::kText) {
    std::string out = "QEVO fnet 1\n";
    detail::write_topology_text(out, net.layers);
    out += "weights " + std::to_string(net.weights.size()) + "\n";
    for (double w : net.weights) out += detail::fmt_double(w) + "\n";
    detail::write_file(path, out);
  } else {
    std::string out = "QEVOBFN1";
    detail::write_topology_bin(out, net.layers);
    detail::put_u64(out, net.weights.size());
    for (double w : net.weights) detail::put_f64(out, w);
    detail::write_file(path, out);
  }
}

inline FloatNetwork load_float_network(const std::string& path) {
  std::string buf = detail::read_file(path);
  FloatNetwork net;
  if (buf.rfind("QEVOBFN1", 0) == 0) {
    detail::BinReader r{buf, 8, path};
    net.layers = detail::read_topology_bin(r);
    net.weights.resize(r.u64());
    for (double& w : net.weights) w = r.f64();
  } else {
    detail::Tokens t(std::move(buf), path);
    t.expect("QEVO");
    t.expect("fnet");
    t.expect("1");
    net.layers = detail::read_topology_text(t);
    t.expect("weights");
    net.weights.resize(static_cast<std::size_t>(t.integer()));
    for (double& w : net.weights) w = t.real();
  }
  if (net.weights.size() != count_params(net.layers))
    throw io_error(path, "weight count does not match topology");
  return net;
}

inline void save_quant_network(const QuantNetwork& net, const std::string& path,
                               FileFormat fmt = FileFormat::kText) {
  if (fmt == FileFormat::kText) {
    std::string out = "QEVO qnet 1\n";
    out += "bits " + std::to_string(net.aq.bits) + "\n";
    detail::write_topology_text(out, net.layers);
    out += "ranges " + std::to_string(net.codebooks.size()) + "\n";
    for (const auto& cb : net.codebooks)
      out += detail::fmt_double(cb.range.w_min) + " " + detail::fmt_double(cb.range.w_max) + "\n";
    out += "codes " + std::to_string(net.codes.size()) + "\n";
    for (std::size_t i = 0; i < net.codes.size(); ++i) {
      out += std::to_string(net.codes[i]);
      out += (i % 16 == 15 || i + 1 == net.codes.size()) ? '\n' : ' ';
    }
    detail::write_file(path, out);
  } else {
    std::string out = "QEVOBQN1";
    detail::put_u32(out, static_cast<std::uint32_t>(net.aq.bits));
    detail::write_topology_bin(out, net.layers);
    for (const auto& cb : net.codebooks) {
      detail::put_f64(out, cb.range.w_min);
      detail::put_f64(out, cb.range.w_max);
    }
    detail::put_u64(out, net.codes.size());
    for (auto c : net.codes) detail::put_u32(out, c);
    detail::write_file(path, out);
  }
}

inline QuantNetwork load_quant_network(const std::string& path) {
  std::string buf = detail::read_file(path);
  QuantNetwork net;
  int bits = 0;
  std::vector<LayerRange> ranges;
  if (buf.rfind("QEVOBQN1", 0) == 0) {
    detail::BinReader r{buf, 8, path};
    bits = static_cast<int>(r.u32());
    net.layers = detail::read_topology_bin(r);
    ranges.resize(net.layers.size());
    for (auto& rg : ranges) {
      rg.w_min = r.f64();
      rg.w_max = r.f64();
    }
    net.codes.resize(r.u64());
    for (auto& c : net.codes) c = r.u32();
  } else {
    detail::Tokens t(std::move(buf), path);
    t.expect("QEVO");
    t.expect("qnet");
    t.expect("1");
    t.expect("bits");
    bits = static_cast<int>(t.integer());
    net.layers = detail::read_topology_text(t);
    t.expect("ranges");
    ranges.resize(static_cast<std::size_t>(t.integer()));
    if (ranges.size() != net.layers.size()) throw io_error(path, "range count mismatch");
    for (auto& rg : ranges) {
      rg.w_min = t.real();
      rg.w_max = t.real();
    }
    t.expect("codes");
    net.codes.resize(static_cast<std::size_t>(t.integer()));
    for (auto& c : net.codes) c = static_cast<std::uint32_t>(t.integer());
  }
  if (ranges.size() != net.layers.size()) throw io_error(path, "range count mismatch");
  net.aq = ActivationQuantizer(bits);
  for (const auto& rg : ranges) net.codebooks.push_back(build_codebook(rg, bits));
  try {
    validate_network(net);
  } catch (const std::invalid_argument& e) {
    throw io_error(path, e.what());
  }
  net.refresh_weights();
  return net;
}

// ---------------------------------------------------------------------------
// Search domain.

inline void save_domain(const SearchDomain& domain, const std::string& path) {
  std::string out = "QEVO sdom 1\n";
  out += "n " + std::to_string(domain.size()) + "\n";
  for (const auto& cand : domain.candidates) {
    out += std::to_string(cand.size());
    for (auto c : cand) out += " " + std::to_string(c);
    out += "\n";
  }
  detail::write_file(path, out);
}

inline SearchDomain load_domain(const std::string& path) {
  detail::Tokens t(detail::read_file(path), path);
  t.expect("QEVO");
  t.expect("sdom");
  t.expect("1");
  t.expect("n");
  SearchDomain d;
  d.candidates.resize(static_cast<std::size_t>(t.integer()));
  for (auto& cand : d.candidates) {
    cand.resize(static_cast<std::size_t>(t.integer()));
    for (auto& c : cand) c = static_cast<std::uint32_t>(t.integer());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Probability model dump and restart checkpoint.

namespace detail {

inline void write_model_rows(std::string& out, const ProbModel& model) {
  out += "n " + std::to_string(model.size()) + "\n";
  for (const auto& row : model.rows) {
    out += std::to_string(row.size());
    for (double p : row) out += " " + fmt_double(p);
    out += "\n";
  }
}

inline ProbModel read_model_rows(Tokens& t) {
  t.expect("n");
  ProbModel model;
  model.rows.resize(static_cast<std::size_t>(t.integer()));
  for (auto& row : model.rows) {
    row.resize(static_cast<std::size_t>(t.integer()));
    for (double& p : row) p = t.real();
  }
  return model;
}

}  // namespace detail

inline void save_probmodel(const ProbModel& model, const std::string& path) {
  std::string out = "QEVO pmodel 1\n";
  detail::write_model_rows(out, model);
  detail::write_file(path, out);
}

inline ProbModel load_probmodel(const std::string& path) {
  detail::Tokens t(detail::read_file(path), path);
  t.expect("QEVO");
  t.expect("pmodel");
  t.expect("1");
  return detail::read_model_rows(t);
}

inline void save_checkpoint(const EdaCheckpoint& ck, const std::string& path) {
  std::string out = "QEVO ckpt 1\n";
  out += "algo " + ck.algo + "\n";
  out += "cycle " + std::to_string(ck.cycle) + "\n";
  out += "gen " + std::to_string(ck.global_gen) + "\n";
  out += "evals " + std::to_string(ck.evals) + "\n";
  out += "best_fitness " + detail::fmt_double(ck.best_fitness) + "\n";
  out += "best";
  for (auto c : ck.best.choices) out += " " + std::to_string(c);
  out += "\n";
  detail::write_model_rows(out, ck.model);
  detail::write_file(path, out);
}

inline EdaCheckpoint load_checkpoint(const std::string& path) {
  detail::Tokens t(detail::read_file(path), path);
  t.expect("QEVO");
  t.expect("ckpt");
  t.expect("1");
  EdaCheckpoint ck;
  t.expect("algo");
  ck.algo = t.next();
  t.expect("cycle");
  ck.cycle = static_cast<int>(t.integer());
  t.expect("gen");
  ck.global_gen = static_cast<long>(t.integer());
  t.expect("evals");
  ck.evals = static_cast<long>(t.integer());
  t.expect("best_fitness");
  ck.best_fitness = t.real();
  t.expect("best");
  // choices up to the model header token "n"
  std::string tok = t.next();
  while (tok != "n") {
    ck.best.choices.push_back(
        static_cast<std::uint16_t>(detail::parse_int(tok, path)));
    tok = t.next();
  }
  ck.model.rows.resize(static_cast<std::size_t>(t.integer()));
  for (auto& row : ck.model.rows) {
    row.resize(static_cast<std::size_t>(t.integer()));
    for (double& p : row) p = t.real();
  }
  if (ck.model.size() != ck.best.size()) throw io_error(path, "model/genome size mismatch");
  return ck;
}

// ---------------------------------------------------------------------------
// Training curve: one CSV row per generation, streamed as the optimizer runs.

class CurveWriter {
public:
  CurveWriter() = default;
  explicit CurveWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw io_error(path, "cannot open for writing");
    out_ << "generation,evals,best_fitness,pop_best_fitness,cycle,beta\n";
  }

  void add(const GenerationRow& row) {
    out_ << row.generation << ',' << row.evals << ',' << detail::fmt_double(row.best_fitness)
         << ',' << detail::fmt_double(row.pop_best) << ',' << row.cycle << ','
         << detail::fmt_double(row.beta) << '\n';
    if (!out_) throw io_error(path_, "write failed");
  }

  void close() {
    if (out_.is_open()) out_.close();
  }

private:
  std::string path_;
  std::ofstream out_;
};

inline std::vector<GenerationRow> load_curve(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open for reading");
  std::string line;
  if (!std::getline(in, line)) throw io_error(path, "empty curve file");
  std::vector<GenerationRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string fields[6];
    std::size_t start = 0;
    for (int f = 0; f < 6; ++f) {
      std::size_t comma = line.find(',', start);
      if (f < 5 && comma == std::string::npos)
        throw io_error(path, "line " + std::to_string(lineno) + ": expected 6 fields");
      fields[f] = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      start = comma + 1;
    }
    GenerationRow row;
    row.generation = static_cast<long>(detail::parse_int(fields[0], path));
    row.evals = static_cast<long>(detail::parse_int(fields[1], path));
    row.best_fitness = detail::parse_double(fields[2], path);
    row.pop_best = detail::parse_double(fields[3], path);
    row.cycle = static_cast<int>(detail::parse_int(fields[4], path));
    row.beta = detail::parse_double(fields[5], path);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Delimited-text datasets: one example per row, label in the last column.
// Values are stored verbatim; rescaling is the caller's decision.

inline void save_dataset_csv(const Dataset& data, const std::string& path) {
  std::string out;
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.inputs.cols; ++c)
      out += detail::fmt_double(data.inputs.at(r, c)) + ",";
    out += std::to_string(data.labels[r]) + "\n";
  }
  detail::write_file(path, out);
}

inline Dataset load_dataset_csv(const std::string& path, bool rescale = false,
                                std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open for reading");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    for (char& ch : line)
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) vals.push_back(detail::parse_double(tok, path + ":" + std::to_string(lineno)));
    if (vals.size() < 2)
      throw io_error(path, "line " + std::to_string(lineno) + ": need features and a label");
    if (!rows.empty() && vals.size() != rows.front().size() + 1)
      throw io_error(path, "line " + std::to_string(lineno) + ": inconsistent column count");
    double lab = vals.back();
    vals.pop_back();
    if (lab != std::floor(lab) || lab < 0)
      throw io_error(path, "line " + std::to_string(lineno) + ": label must be a non-negative integer");
    labels.push_back(static_cast<int>(lab));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw io_error(path, "no examples");
  Dataset d;
  d.inputs = Matrix(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), d.inputs.row(r));
  d.labels = std::move(labels);
  d.num_classes = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  if (rescale) rescale_features(d.inputs, warnings);
  return d;
}

}  // namespace qevo

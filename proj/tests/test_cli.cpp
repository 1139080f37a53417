#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qevo/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

const std::string cli = QEVO_CLI_PATH;

struct CmdResult {
  int exit_code;
  std::string out;
};

CmdResult run_cmd(const std::string& args) {
  fs::path out_file = fs::temp_directory_path() / "qevo_cli_out.txt";
  std::string cmd = cli + " " + args + " > " + out_file.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::ostringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(rc), ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string summary_value(const fs::path& summary, const std::string& key) {
  std::ifstream in(summary);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq);
    while (!k.empty() && k.back() == ' ') k.pop_back();
    if (k == key) {
      std::string v = line.substr(eq + 1);
      while (!v.empty() && v.front() == ' ') v.erase(v.begin());
      return v;
    }
  }
  FAIL("key not found in summary: " + key);
  return "";
}

}  // namespace

TEST_CASE("staged pipeline via subcommands") {
  fs::path dir = fs::temp_directory_path() / "qevo_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto in_dir = [&](const std::string& f) { return (dir / f).string(); };

  auto tf = run_cmd("train-float --topology 2-6-2 --data xor --epochs 800 --lr 0.3 --batch 4 --seed 5 --out " +
                    in_dir("float.fnet"));
  INFO(tf.out);
  REQUIRE(tf.exit_code == 0);
  CHECK(tf.out.find("train_acc = 1") != std::string::npos);

  auto qz = run_cmd("quantize --net " + in_dir("float.fnet") + " --bits 4 --out " + in_dir("q.qnet"));
  INFO(qz.out);
  REQUIRE(qz.exit_code == 0);

  auto sw = run_cmd("switch --net " + in_dir("q.qnet") + " --s 0.3 --seed 5 --out " +
                    in_dir("switched.qnet") + " --domain " + in_dir("domain.sdom"));
  INFO(sw.out);
  REQUIRE(sw.exit_code == 0);

  std::string opt_base = "optimize --net " + in_dir("switched.qnet") + " --domain " +
                         in_dir("domain.sdom") +
                         " --data xor --test xor --algo eda-cc --seed 1 --gens 8 "
                         "--pop 20 --elite 5 --threshold 1.0 --out-dir ";
  auto with_dir = [&](const std::string& d, const std::string& extra) {
    return opt_base + in_dir(d) + " " + extra;
  };
  auto o1 = run_cmd(with_dir("run1", "--budget 800 --checkpoint " + in_dir("run1.ckpt")));
  INFO(o1.out);
  REQUIRE(o1.exit_code == 0);
  // config echo shows the resolved values
  CHECK(o1.out.find("sigma = 0.95") != std::string::npos);
  CHECK(o1.out.find("algo = eda-cc") != std::string::npos);
  // per-cycle checkpoint was written and resumes cleanly
  REQUIRE(fs::exists(dir / "run1.ckpt"));
  auto resumed = run_cmd(with_dir("run_resumed", "--budget 1200 --resume " + in_dir("run1.ckpt")));
  INFO(resumed.out);
  REQUIRE(resumed.exit_code == 0);

  // identical rerun gives byte-identical outputs
  auto o2 = run_cmd(with_dir("run2", "--budget 800"));
  REQUIRE(o2.exit_code == 0);
  CHECK(slurp(dir / "run1" / "curve.csv") == slurp(dir / "run2" / "curve.csv"));
  CHECK(slurp(dir / "run1" / "final.qnet") == slurp(dir / "run2" / "final.qnet"));

  // eval agrees with the recorded summary
  auto evr = run_cmd("eval --net " + in_dir("run1/final.qnet") + " --data xor");
  REQUIRE(evr.exit_code == 0);
  std::string expected = summary_value(dir / "run1" / "summary.txt", "final_train_acc");
  CHECK(evr.out.find("accuracy = " + expected) != std::string::npos);

  auto rp = run_cmd("report --dir " + in_dir("run1"));
  REQUIRE(rp.exit_code == 0);
  CHECK(rp.out.find("final_train_acc") != std::string::npos);
  CHECK(rp.out.find("rows = ") != std::string::npos);

  fs::remove_all(dir);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cmd("optimize --algo eda --sigma 1.5 --net x --domain y --data xor").exit_code == 2);
  CHECK(run_cmd("frobnicate").exit_code == 2);
  CHECK(run_cmd("eval --net /nonexistent.qnet --data xor").exit_code == 2);
  CHECK(run_cmd("optimize").exit_code == 2);
  CHECK(run_cmd("switch --net /nonexistent.qnet --s 2.0").exit_code == 2);
  auto r = run_cmd("eval --net /nonexistent.qnet --data xor");
  CHECK(r.out.rfind("error:", 0) == 0);  // one-line machine-parseable error
}

TEST_CASE("config-driven experiment plus report") {
  fs::path dir = fs::temp_directory_path() / "qevo_cli_cfg";
  fs::remove_all(dir);
  fs::create_directories(dir);
  qevo::ExperimentConfig cfg;
  cfg.topology = "2-4-2";
  cfg.data = "xor";
  cfg.train_n = 4;
  cfg.test_n = 4;
  cfg.algo = "eda";
  cfg.gens = 5;
  cfg.pop = 10;
  cfg.elite = 3;
  cfg.budget = 200;
  cfg.epochs = 300;
  cfg.lr = 0.3;
  cfg.batch = 4;
  cfg.out_dir = (dir / "out").string();
  qevo::save_config(cfg, (dir / "exp.cfg").string());

  auto r = run_cmd("optimize --config " + (dir / "exp.cfg").string());
  INFO(r.out);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "curve.csv"));
  CHECK(fs::exists(dir / "out" / "final.qnet"));
  CHECK(fs::exists(dir / "out" / "summary.txt"));

  // evaluating the saved network on the saved split reproduces the summary
  auto ev = run_cmd("eval --net " + (dir / "out" / "final.qnet").string() + " --data " +
                    (dir / "out" / "test.csv").string());
  REQUIRE(ev.exit_code == 0);
  CHECK(ev.out.find("accuracy = " + summary_value(dir / "out" / "summary.txt",
                                                  "final_test_acc")) != std::string::npos);

  // flag overrides beat config-file values
  auto r2 = run_cmd("optimize --config " + (dir / "exp.cfg").string() + " --budget 150 --out-dir " +
                    (dir / "out2").string());
  REQUIRE(r2.exit_code == 0);
  CHECK(r2.out.find("budget = 150") != std::string::npos);

  // QEVO_OUT_DIR supplies the default output directory
  qevo::ExperimentConfig env_cfg = cfg;
  env_cfg.out_dir = "qevo-out";  // let the environment decide
  qevo::save_config(env_cfg, (dir / "env.cfg").string());
  fs::path env_dir = dir / "out_env";
  std::string cmd = "QEVO_OUT_DIR=" + env_dir.string() + " " + cli + " optimize --config " +
                    (dir / "env.cfg").string() + " > /dev/null 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  CHECK(fs::exists(env_dir / "summary.txt"));
  fs::remove_all(dir);
}

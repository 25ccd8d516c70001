#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ghn/checkpoint.hpp"
#include "ghn/cli.hpp"
#include "ghn/config.hpp"
#include "synth.hpp"

using namespace ghn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return 0;
}

const char* kTinyConfig = R"(# tiny run on synthetic bars
[network]
architecture = cv[1,3,3,4]-pool-fc[10]

[train]
steps = 12
batch_size = 16
eval_every = 5
stats_every = 4
eval_batch = 50

[data]
train_limit = 200
test_limit = 50
)";

}  // namespace

TEST_CASE("defaults") {
  const auto cfg = parse_config("");
  CHECK(cfg == default_run_config());
  CHECK(cfg.network.weighted_layers() == 4);
  CHECK(cfg.train.learning_rate == 0.1);
  CHECK(cfg.train.batch_size == 64);
  const auto& conv = cfg.network.layers[0];
  CHECK(conv.threshold.mode == ThresholdMode::soft);
  CHECK(conv.threshold.r == 0.05);
  CHECK(conv.threshold.granularity == Granularity::per_filter);
}

TEST_CASE("parse sections, comments and per-layer keys") {
  const auto cfg = parse_config(R"(
# leading comment
[network]
architecture = cv[1,5,5,16]-pool-cv[16,5,5,64]-pool-fc[1024]-fc[1024,10]   # trailing
threshold.mode = hard
threshold.r = 0.2
layer.4.activation = none
[train]
lr = 0.01
precision = r64
[output]
dir = somewhere
)");
  CHECK(cfg.network.layers[0].threshold.mode == ThresholdMode::hard);
  CHECK(cfg.network.layers[0].threshold.r == 0.2);
  CHECK(cfg.network.layers[5].activation == Activation::none);
  CHECK(cfg.network.layers[4].activation == Activation::threshold);
  CHECK(cfg.train.learning_rate == 0.01);
  CHECK(cfg.train.precision == Precision::r64);
  CHECK(cfg.out_dir == "somewhere");
}

TEST_CASE("config errors carry line numbers") {
  CHECK(error_line("[network]\nbogus = 1\n") == 2);
  CHECK(error_line("\n\n[nope]\n") == 3);
  CHECK(error_line("[network]\narchitecture = cv[1,5,5]-pool-fc[10]\n") == 2);
  CHECK(error_line("[train]\nlr = fast\n") == 2);
  CHECK(error_line("[train]\nlr = 0.1\nlr = 0.2\n") == 3);
  CHECK(error_line("lr = 0.1\n") == 1);
  CHECK(error_line("[network]\nthreshold.mode = sometimes\n") == 2);
  CHECK(error_line("[network]\nlayer.9.activation = none\n") == 2);
  try {
    parse_config("[network]\narchitecture = cv[1,5,5]-pool-fc[10]\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cv[1,5,5]") != std::string::npos);
  }
}

TEST_CASE("render round trip") {
  auto cfg = default_run_config();
  CHECK(parse_config(render_config(cfg)) == cfg);

  cfg.train.learning_rate = 0.013;
  cfg.train.precision = Precision::r64;
  cfg.network.init_std = 0.1 / 3;
  cfg.network.layers[2].threshold.r = 0.3;
  cfg.network.layers[5].activation = Activation::none;
  cfg.data.train_limit = 99;
  cfg.out_dir = "x/y";
  CHECK(parse_config(render_config(cfg)) == cfg);

  const auto base = counterpart(default_run_config().network);
  CHECK(base.kind == NetKind::baseline);
  CHECK(base.batch_norm);
  RunConfig bc = default_run_config();
  bc.network = base;
  CHECK(parse_config(render_config(bc)) == bc);
  CHECK(counterpart(base).kind == NetKind::ghn);
}

TEST_CASE("validation") {
  auto cfg = default_run_config();
  cfg.data.dir = "/definitely/not/here";
  CHECK_THROWS(validate(cfg));
  cfg.data.dir.clear();
  CHECK_THROWS(validate(cfg));

  synth::TempDir tmp("val");
  cfg.data.dir = tmp.path().string();
  CHECK_NOTHROW(validate(cfg));
  cfg.data.dataset = DatasetKind::cifar10;
  CHECK_THROWS(validate(cfg));  // 28x28x1 network on 32x32x3 images
}

TEST_CASE("shipped presets parse") {
  const fs::path dir = fs::path(GHN_SOURCE_DIR) / "configs";
  for (const char* name : {"mnist-ghn.cfg", "mnist-ghn-no-threshold.cfg", "mnist-baseline-bn.cfg",
                           "cifar10-ghn.cfg"}) {
    CAPTURE(name);
    RunConfig cfg;
    REQUIRE_NOTHROW(cfg = load_config(dir / name));
    CHECK(cfg.network.classes() == 10);
  }
  CHECK(load_config(dir / "mnist-ghn.cfg").network == default_run_config().network);
  CHECK(load_config(dir / "mnist-ghn-no-threshold.cfg").network.layers[0].threshold.mode ==
        ThresholdMode::off);
  CHECK(load_config(dir / "mnist-baseline-bn.cfg").network.kind == NetKind::baseline);
  const auto cifar = load_config(dir / "cifar10-ghn.cfg");
  CHECK(cifar.data.dataset == DatasetKind::cifar10);
  CHECK(cifar.network.channels == 3);
}

TEST_CASE("surface subcommand") {
  const auto r = run({"surface", "--op", "fuzziness", "--min", "-1", "--max", "2", "--step", "0.01"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "a,b,value");
  std::size_t rows = 0, half = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream ls(line);
    std::string a, b, v;
    std::getline(ls, a, ',');
    std::getline(ls, b, ',');
    std::getline(ls, v, ',');
    if (std::abs(std::stod(a) - 0.5) < 1e-9) {
      ++half;
      CHECK(std::stod(v) == doctest::Approx(0.5));
    }
  }
  CHECK(rows == 301 * 301);
  CHECK(half == 301);

  synth::TempDir tmp("surf");
  CHECK(run({"surface", "--op", "ghd", "--min", "0", "--max", "1", "--step", "0.5", "--out-dir",
             tmp.path().string()})
            .code == 0);
  CHECK(fs::exists(tmp.path() / "surface_ghd.csv"));
  CHECK(run({"surface", "--op", "nonsense"}).code != 0);
}

TEST_CASE("selftest subcommand") {
  const auto r = run({"selftest"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("properties passed") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code != 0);
  const auto r = run({"frobnicate"});
  CHECK(r.code != 0);
  CHECK(!r.err.empty());
  CHECK(run({"eval"}).code != 0);  // --checkpoint is required
  CHECK(run({"train", "--seed", "abc"}).code != 0);
  CHECK(run({"train", "--precision", "r16"}).code != 0);
}

TEST_CASE("train twice with one seed gives identical metrics; eval reads the checkpoint") {
  synth::TempDir tmp("cli");
  const fs::path data = tmp.path() / "data";
  synth::write_bar_mnist(data, 200, 50, 7);
  {
    std::ofstream(tmp.path() / "tiny.cfg") << kTinyConfig;
  }
  auto train_into = [&](const std::string& out, const std::string& seed) {
    return run({"train", "--config", (tmp.path() / "tiny.cfg").string(), "--data-dir",
                data.string(), "--out-dir", (tmp.path() / out).string(), "--seed", seed});
  };
  const auto a = train_into("a", "7");
  INFO(a.err);
  REQUIRE(a.code == 0);
  REQUIRE(train_into("b", "7").code == 0);
  REQUIRE(train_into("c", "8").code == 0);
  for (const char* f : {"metrics.csv", "layer_stats.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(tmp.path() / "a" / f));
    CHECK(slurp(tmp.path() / "a" / f) == slurp(tmp.path() / "b" / f));
  }
  // Checkpoints and config echoes differ only in the recorded output directory.
  CHECK(load_checkpoint(tmp.path() / "a" / "checkpoint.ghn").entries ==
        load_checkpoint(tmp.path() / "b" / "checkpoint.ghn").entries);
  auto echo_a = load_config(tmp.path() / "a" / "config.cfg");
  auto echo_b = load_config(tmp.path() / "b" / "config.cfg");
  echo_b.out_dir = echo_a.out_dir;
  CHECK(echo_a == echo_b);
  CHECK(slurp(tmp.path() / "a" / "metrics.csv") != slurp(tmp.path() / "c" / "metrics.csv"));
  CHECK(slurp(tmp.path() / "a" / "metrics.csv").rfind("step,split,metric,value\n", 0) == 0);

  // The echoed config reproduces the effective run, flags included.
  const auto echo = load_config(tmp.path() / "a" / "config.cfg");
  CHECK(echo.train.seed == 7);
  CHECK(echo.train.steps == 12);

  const auto e = run({"eval", "--config", (tmp.path() / "tiny.cfg").string(), "--data-dir",
                      data.string(), "--out-dir", (tmp.path() / "e").string(), "--checkpoint",
                      (tmp.path() / "a" / "checkpoint.ghn").string()});
  INFO(e.err);
  CHECK(e.code == 0);
  CHECK(e.out.find("accuracy") != std::string::npos);
  CHECK(fs::exists(tmp.path() / "e" / "eval.csv"));

  // GHN_DATA_DIR fills in when neither flag nor file name a directory.
  setenv("GHN_DATA_DIR", data.string().c_str(), 1);
  const auto env = run({"train", "--config", (tmp.path() / "tiny.cfg").string(), "--out-dir",
                        (tmp.path() / "env").string(), "--steps", "2"});
  unsetenv("GHN_DATA_DIR");
  CHECK(env.code == 0);
  CHECK(load_config(tmp.path() / "env" / "config.cfg").train.steps == 2);

  const auto missing = run({"train", "--config", (tmp.path() / "tiny.cfg").string(), "--data-dir",
                            (tmp.path() / "nowhere").string()});
  CHECK(missing.code != 0);
}

TEST_CASE("compare-bn subcommand writes its report") {
  synth::TempDir tmp("cmp");
  const fs::path data = tmp.path() / "data";
  synth::write_bar_mnist(data, 200, 50, 8);
  {
    std::ofstream(tmp.path() / "tiny.cfg") << kTinyConfig;
  }
  const auto r = run({"compare-bn", "--config", (tmp.path() / "tiny.cfg").string(), "--data-dir",
                      data.string(), "--out-dir", (tmp.path() / "o").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("pearson(conv1 mean)") != std::string::npos);
  for (const char* f : {"compare.csv", "correlation.csv", "ghn_metrics.csv", "baseline_metrics.csv",
                        "ghn_layer_stats.csv", "baseline_layer_stats.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(tmp.path() / "o" / f));
  }
}

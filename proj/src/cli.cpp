#include "ghn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ghn/config.hpp"
#include "ghn/ghd.hpp"

namespace ghn {

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> data_dir;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> steps;
  std::optional<std::string> precision;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration file");
  cmd->add_option("--data-dir", o.data_dir, "Dataset directory (falls back to GHN_DATA_DIR)");
  cmd->add_option("--out-dir", o.out_dir, "Directory for every output file");
  cmd->add_option("--seed", o.seed, "Initialization and shuffling seed");
  cmd->add_option("--lr", o.lr, "SGD learning rate");
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
  cmd->add_option("--steps", o.steps, "Training steps");
  cmd->add_option("--precision", o.precision, "r32 or r64")
      ->check(CLI::IsMember({"r32", "r64"}));
}

// flags > file > defaults; GHN_DATA_DIR only fills a data directory that
// neither the flags nor the file set.
RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? default_run_config() : load_config(o.config);
  if (o.data_dir) cfg.data.dir = *o.data_dir;
  if (cfg.data.dir.empty()) {
    if (const char* env = std::getenv("GHN_DATA_DIR")) cfg.data.dir = env;
  }
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.lr) cfg.train.learning_rate = *o.lr;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.steps) cfg.train.steps = *o.steps;
  if (o.precision) cfg.train.precision = parse_precision(*o.precision);
  validate(cfg);
  return cfg;
}

struct Splits {
  Dataset train;
  Dataset test;
};

Splits load_data(const RunConfig& cfg, bool need_train) {
  Splits s;
  const fs::path dir = cfg.data.dir;
  if (cfg.data.dataset == DatasetKind::mnist) {
    if (need_train) s.train = load_mnist_dir(dir, "train");
    s.test = load_mnist_dir(dir, "t10k");
  } else {
    if (need_train) s.train = load_cifar10_dir(dir, true);
    s.test = load_cifar10_dir(dir, false);
  }
  if (need_train && cfg.data.train_limit) s.train = head(s.train, cfg.data.train_limit);
  if (cfg.data.test_limit) s.test = head(s.test, cfg.data.test_limit);
  return s;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p = dir;
  fs::create_directories(p);
  return p;
}

ProgressFn progress_to(std::ostream& out) {
  return [&out](const std::string& s) { out << s << "\n" << std::flush; };
}

template <class T>
int do_train(const RunConfig& cfg, std::ostream& out) {
  const Splits data = load_data(cfg, true);
  const fs::path dir = prepare_out_dir(cfg.out_dir);
  const std::string echo = render_config(cfg);
  Network<T> net(cfg.network, cfg.train.seed);
  const TrainResult r = train(net, data.train, data.test, cfg.train, echo, progress_to(out));
  write_file(dir / "config.cfg", echo);
  write_file(dir / "metrics.csv", scalar_csv(r.metrics));
  write_file(dir / "layer_stats.csv", layer_stats_csv(r.metrics));
  save_checkpoint(r.checkpoint, dir / "checkpoint.ghn");
  if (auto acc = r.metrics.scalar_at("test", "accuracy", r.steps_run)) {
    out << "final test accuracy " << *acc << "\n";
  }
  return 0;
}

template <class T>
int do_eval(const RunConfig& cfg, const std::string& checkpoint_path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  // The checkpoint's own config echo describes the network it holds.
  RunConfig stored = cfg;
  if (!ckpt.config.empty()) stored.network = parse_config(ckpt.config).network;
  Network<T> net(stored.network, cfg.train.seed);
  restore_checkpoint(ckpt, net);
  const Splits data = load_data(cfg, false);
  const EvalResult e = evaluate(net, data.test, cfg.train.eval_batch);
  char line[160];
  std::snprintf(line, sizeof line, "accuracy %.6f  loss %.6f  (%zu/%zu)", e.accuracy, e.loss,
                e.correct, e.total);
  out << line << "\n";
  const fs::path dir = prepare_out_dir(cfg.out_dir);
  Metrics m;
  m.scalars.push_back({ckpt.step, "test", "loss", e.loss});
  m.scalars.push_back({ckpt.step, "test", "accuracy", e.accuracy});
  write_file(dir / "eval.csv", scalar_csv(m));
  return 0;
}

template <class T>
int do_compare(const RunConfig& cfg, std::ostream& out) {
  const Splits data = load_data(cfg, true);
  const fs::path dir = prepare_out_dir(cfg.out_dir);
  const NetworkSpec other = counterpart(cfg.network);
  const bool is_ghn = cfg.network.kind == NetKind::ghn;
  const NetworkSpec& ghn_spec = is_ghn ? cfg.network : other;
  const NetworkSpec& base_spec = is_ghn ? other : cfg.network;
  const CompareReport r =
      compare_bn_experiment<T>(ghn_spec, base_spec, data.train, data.test, cfg.train,
                               progress_to(out));
  write_file(dir / "compare.csv", compare_csv(r));
  write_file(dir / "correlation.csv", correlation_csv(r));
  write_file(dir / "ghn_metrics.csv", scalar_csv(r.ghn_run.metrics));
  write_file(dir / "ghn_layer_stats.csv", layer_stats_csv(r.ghn_run.metrics));
  write_file(dir / "baseline_metrics.csv", scalar_csv(r.base_run.metrics));
  write_file(dir / "baseline_layer_stats.csv", layer_stats_csv(r.base_run.metrics));
  out << "pearson(" << r.layer << " mean) " << r.pearson_mean << "\n";
  out << "pearson(" << r.layer << " max)  " << r.pearson_max << "\n";
  out << "pearson(" << r.layer << " min)  " << r.pearson_min << "\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generalized hamming network experiments", "ghn"};
  app.require_subcommand(1);

  Overrides train_o, eval_o, cmp_o;
  std::string checkpoint;
  auto* train_cmd = app.add_subcommand("train", "Train a network and write metrics");
  add_run_flags(train_cmd, train_o);
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_run_flags(eval_cmd, eval_o);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* cmp_cmd =
      app.add_subcommand("compare-bn", "Train a GHN and its batch-normalized counterpart");
  add_run_flags(cmp_cmd, cmp_o);

  std::string op = "ghd";
  double lo = -1.0, hi = 2.0, step = 0.01;
  std::optional<double> b_lo, b_hi;
  std::optional<std::string> surface_out;
  auto* surf_cmd = app.add_subcommand("surface", "Sample a two-argument surface as CSV");
  surf_cmd->add_option("--op", op, "ghd, fuzziness, mu_of_ghd or dmu_da");
  surf_cmd->add_option("--min", lo, "Lower bound of a (and b)");
  surf_cmd->add_option("--max", hi, "Upper bound of a (and b)");
  surf_cmd->add_option("--step", step, "Grid spacing");
  surf_cmd->add_option("--b-min", b_lo, "Lower bound of b");
  surf_cmd->add_option("--b-max", b_hi, "Upper bound of b");
  surf_cmd->add_option("--out-dir", surface_out, "Write surface_<op>.csv here instead of stdout");

  app.add_subcommand("selftest", "Run the built-in property suite");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      const RunConfig cfg = resolve_config(train_o);
      return cfg.train.precision == Precision::r32 ? do_train<float>(cfg, out)
                                                   : do_train<double>(cfg, out);
    }
    if (eval_cmd->parsed()) {
      const RunConfig cfg = resolve_config(eval_o);
      return cfg.train.precision == Precision::r32 ? do_eval<float>(cfg, checkpoint, out)
                                                   : do_eval<double>(cfg, checkpoint, out);
    }
    if (cmp_cmd->parsed()) {
      const RunConfig cfg = resolve_config(cmp_o);
      return cfg.train.precision == Precision::r32 ? do_compare<float>(cfg, out)
                                                   : do_compare<double>(cfg, out);
    }
    if (surf_cmd->parsed()) {
      const SurfaceKind kind = parse_surface_kind(op);
      const auto points =
          surface_sample(kind, Range{lo, hi}, Range{b_lo.value_or(lo), b_hi.value_or(hi)}, step);
      const std::string csv = surface_csv(points);
      if (surface_out) {
        write_file(prepare_out_dir(*surface_out) / ("surface_" + op + ".csv"), csv);
      } else {
        out << csv;
      }
      return 0;
    }
    return run_selftest(out) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ghn

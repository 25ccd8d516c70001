#include "ghn/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace ghn {

const char* to_string(DatasetKind k) { return k == DatasetKind::mnist ? "mnist" : "cifar10"; }

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "mnist") return DatasetKind::mnist;
  if (s == "cifar10") return DatasetKind::cifar10;
  throw std::invalid_argument("unknown dataset '" + s + "' (expected mnist, cifar10)");
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.network.layers =
      parse_architecture("cv[1,5,5,16]-pool-cv[16,5,5,64]-pool-fc[1024]-fc[1024,10]");
  resolve_shapes(cfg.network);
  return cfg;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("'" + v + "' is not a non-negative integer");
  }
  return out;
}

double to_double(const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("'" + v + "' is not a number");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("'" + v + "' is not a boolean");
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Entry {
  std::size_t line;
  std::string value;
};

// Layer-level keys shared by the global form and the layer.N.* form.
bool apply_layer_key(LayerSpec& l, const std::string& key, const std::string& v) {
  if (key == "activation") l.activation = parse_activation(v);
  else if (key == "threshold.mode") l.threshold.mode = parse_threshold_mode(v);
  else if (key == "threshold.granularity") l.threshold.granularity = parse_granularity(v);
  else if (key == "threshold.r") {
    const double r = to_double(v);
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("threshold.r must lie in [0, 1]");
    l.threshold.r = r;
  } else if (key == "threshold.trainable") l.threshold.trainable = to_bool(v);
  else if (key == "threshold.steepness") {
    const double k = to_double(v);
    if (!(k > 0.0)) throw std::invalid_argument("threshold.steepness must be positive");
    l.threshold.steepness = k;
  } else return false;
  return true;
}

bool is_layer_key(const std::string& key) {
  LayerSpec probe;
  try {
    return apply_layer_key(probe, key, key == "activation"              ? "none"
                                       : key == "threshold.mode"        ? "off"
                                       : key == "threshold.granularity" ? "per_layer"
                                       : key == "threshold.trainable"   ? "true"
                                                                        : "0.5");
  } catch (const std::invalid_argument&) {
    return true;
  }
}

std::string parse_input(const std::string& v, NetworkSpec& net) {
  // HxWxC
  const auto x1 = v.find('x');
  const auto x2 = v.find('x', x1 == std::string::npos ? x1 : x1 + 1);
  if (x1 == std::string::npos || x2 == std::string::npos) {
    throw std::invalid_argument("input must be HxWxC, got '" + v + "'");
  }
  net.height = to_size(v.substr(0, x1));
  net.width = to_size(v.substr(x1 + 1, x2 - x1 - 1));
  net.channels = to_size(v.substr(x2 + 1));
  if (!net.height || !net.width || !net.channels) {
    throw std::invalid_argument("input extents must be positive");
  }
  return v;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::string section;
  std::map<std::string, Entry> values;  // "section/key"
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "network" && section != "train" && section != "data" && section != "output") {
        throw ConfigError(lineno, "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, "expected key = value");
    if (section.empty()) throw ConfigError(lineno, "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(lineno, "empty key");
    const std::string full = section + "/" + key;
    if (values.count(full)) {
      throw ConfigError(lineno, "duplicate key '" + key + "' (first set on line " +
                                    std::to_string(values[full].line) + ")");
    }
    values[full] = {lineno, value};
  }

  auto& net = cfg.network;
  std::size_t arch_line = 0;
  std::string arch;
  std::vector<std::pair<std::string, Entry>> layer_globals;
  std::vector<std::tuple<std::size_t, std::string, Entry>> layer_overrides;

  for (const auto& [full, e] : values) {
    const auto slash = full.find('/');
    const std::string sec = full.substr(0, slash);
    const std::string key = full.substr(slash + 1);
    const std::string& v = e.value;
    try {
      if (sec == "network") {
        if (key == "architecture") { arch = v; arch_line = e.line; }
        else if (key == "kind") net.kind = parse_net_kind(v);
        else if (key == "batch_norm") net.batch_norm = to_bool(v);
        else if (key == "head") net.head = parse_head(v);
        else if (key == "input") parse_input(v, net);
        else if (key == "init_std") {
          net.init_std = to_double(v);
          if (!(net.init_std > 0.0)) throw std::invalid_argument("init_std must be positive");
        } else if (key == "weight_gain") {
          net.weight_gain = to_double(v);
          if (net.weight_gain < 0.0) throw std::invalid_argument("weight_gain must be >= 0");
        } else if (key.rfind("layer.", 0) == 0) {
          const auto dot = key.find('.', 6);
          if (dot == std::string::npos) throw std::invalid_argument("expected layer.N.<key>");
          const std::size_t index = to_size(key.substr(6, dot - 6));
          const std::string sub = key.substr(dot + 1);
          if (index == 0) throw std::invalid_argument("layer indices start at 1");
          if (!is_layer_key(sub)) throw std::invalid_argument("unknown layer key '" + sub + "'");
          layer_overrides.emplace_back(index, sub, e);
        } else if (is_layer_key(key)) {
          layer_globals.emplace_back(key, e);
        } else {
          throw ConfigError(e.line, "unknown key '" + key + "' in [network]");
        }
      } else if (sec == "train") {
        auto& t = cfg.train;
        if (key == "lr") t.learning_rate = to_double(v);
        else if (key == "batch_size") t.batch_size = to_size(v);
        else if (key == "steps") t.steps = to_size(v);
        else if (key == "seed") t.seed = to_size(v);
        else if (key == "eval_every") t.eval_every = to_size(v);
        else if (key == "stats_every") t.stats_every = to_size(v);
        else if (key == "eval_batch") t.eval_batch = to_size(v);
        else if (key == "precision") t.precision = parse_precision(v);
        else throw ConfigError(e.line, "unknown key '" + key + "' in [train]");
      } else if (sec == "data") {
        auto& d = cfg.data;
        if (key == "dataset") d.dataset = parse_dataset_kind(v);
        else if (key == "dir") d.dir = v;
        else if (key == "train_limit") d.train_limit = to_size(v);
        else if (key == "test_limit") d.test_limit = to_size(v);
        else throw ConfigError(e.line, "unknown key '" + key + "' in [data]");
      } else {
        if (key == "dir") cfg.out_dir = v;
        else throw ConfigError(e.line, "unknown key '" + key + "' in [output]");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ConfigError(e.line, key + ": " + ex.what());
    }
  }

  if (!arch.empty()) {
    try {
      net.layers = parse_architecture(arch);
    } catch (const ArchitectureError& ex) {
      throw ConfigError(arch_line, ex.what());
    }
  } else {
    net.layers = default_run_config().network.layers;
    for (auto& l : net.layers) {
      if (l.kind == LayerKind::dense) l.in = 0;
    }
  }

  std::vector<LayerSpec*> weighted;
  for (auto& l : net.layers) {
    if (l.kind != LayerKind::pool) weighted.push_back(&l);
  }
  for (const auto& [key, e] : layer_globals) {
    for (auto* l : weighted) {
      try {
        apply_layer_key(*l, key, e.value);
      } catch (const std::exception& ex) {
        throw ConfigError(e.line, key + ": " + ex.what());
      }
    }
  }
  std::stable_sort(layer_overrides.begin(), layer_overrides.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
  for (const auto& [index, key, e] : layer_overrides) {
    if (index > weighted.size()) {
      throw ConfigError(e.line, "layer." + std::to_string(index) + ": the architecture has " +
                                    std::to_string(weighted.size()) + " weighted layers");
    }
    try {
      apply_layer_key(*weighted[index - 1], key, e.value);
    } catch (const std::exception& ex) {
      throw ConfigError(e.line, key + ": " + ex.what());
    }
  }

  try {
    resolve_shapes(net);
  } catch (const std::exception& ex) {
    throw ConfigError(arch_line, ex.what());
  }
  try {
    cfg.train.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(0, std::string("[train] ") + ex.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.line(), path.string() + ": " + e.what());
  }
}

namespace {

void render_layer_keys(std::ostringstream& o, const std::string& prefix, const LayerSpec& l,
                       const LayerSpec* base) {
  auto emit = [&](const std::string& key, const std::string& v, bool differs) {
    if (!base || differs) o << prefix << key << " = " << v << "\n";
  };
  const auto& t = l.threshold;
  emit("activation", to_string(l.activation), base && l.activation != base->activation);
  emit("threshold.mode", to_string(t.mode), base && t.mode != base->threshold.mode);
  emit("threshold.granularity", to_string(t.granularity),
       base && t.granularity != base->threshold.granularity);
  emit("threshold.r", fmt(t.r), base && t.r != base->threshold.r);
  emit("threshold.trainable", t.trainable ? "true" : "false",
       base && t.trainable != base->threshold.trainable);
  emit("threshold.steepness", fmt(t.steepness), base && t.steepness != base->threshold.steepness);
}

}  // namespace

std::string render_config(const RunConfig& cfg) {
  std::ostringstream o;
  const auto& n = cfg.network;
  o << "[network]\n";
  o << "kind = " << to_string(n.kind) << "\n";
  o << "architecture = " << render_architecture(n.layers) << "\n";
  o << "input = " << n.height << "x" << n.width << "x" << n.channels << "\n";
  o << "batch_norm = " << (n.batch_norm ? "true" : "false") << "\n";
  o << "head = " << to_string(n.head) << "\n";
  o << "init_std = " << fmt(n.init_std) << "\n";
  o << "weight_gain = " << fmt(n.weight_gain) << "\n";
  const LayerSpec* first = nullptr;
  std::size_t wi = 0;
  for (const auto& l : n.layers) {
    if (l.kind == LayerKind::pool) continue;
    ++wi;
    if (!first) {
      first = &l;
      render_layer_keys(o, "", l, nullptr);
    } else {
      render_layer_keys(o, "layer." + std::to_string(wi) + ".", l, first);
    }
  }
  const auto& t = cfg.train;
  o << "\n[train]\n";
  o << "lr = " << fmt(t.learning_rate) << "\n";
  o << "batch_size = " << t.batch_size << "\n";
  o << "steps = " << t.steps << "\n";
  o << "seed = " << t.seed << "\n";
  o << "eval_every = " << t.eval_every << "\n";
  o << "stats_every = " << t.stats_every << "\n";
  o << "eval_batch = " << t.eval_batch << "\n";
  o << "precision = " << to_string(t.precision) << "\n";
  o << "\n[data]\n";
  o << "dataset = " << to_string(cfg.data.dataset) << "\n";
  if (!cfg.data.dir.empty()) o << "dir = " << cfg.data.dir << "\n";
  o << "train_limit = " << cfg.data.train_limit << "\n";
  o << "test_limit = " << cfg.data.test_limit << "\n";
  o << "\n[output]\n";
  o << "dir = " << cfg.out_dir << "\n";
  return o.str();
}

void validate(const RunConfig& cfg) {
  NetworkSpec net = cfg.network;
  resolve_shapes(net);
  cfg.train.validate();
  const bool mnist = cfg.data.dataset == DatasetKind::mnist;
  const std::size_t h = mnist ? 28 : 32, c = mnist ? 1 : 3;
  if (net.height != h || net.width != h || net.channels != c) {
    throw ConfigError(0, std::string(to_string(cfg.data.dataset)) + " images are " +
                             std::to_string(h) + "x" + std::to_string(h) + "x" +
                             std::to_string(c) + ", network input is " +
                             std::to_string(net.height) + "x" + std::to_string(net.width) + "x" +
                             std::to_string(net.channels));
  }
  if (net.classes() != 10) {
    throw ConfigError(0, "classifier emits " + std::to_string(net.classes()) +
                             " classes, dataset has 10");
  }
  if (cfg.data.dir.empty()) throw ConfigError(0, "no data directory given");
  if (!std::filesystem::is_directory(cfg.data.dir)) {
    throw ConfigError(0, "data directory " + cfg.data.dir + " does not exist");
  }
}

NetworkSpec counterpart(const NetworkSpec& spec) {
  NetworkSpec out = spec;
  if (spec.kind == NetKind::ghn) {
    out.kind = NetKind::baseline;
    out.batch_norm = true;
    for (auto& l : out.layers) {
      if (l.kind != LayerKind::pool) l.activation = Activation::relu;
    }
  } else {
    out.kind = NetKind::ghn;
    out.batch_norm = false;
    for (auto& l : out.layers) {
      if (l.kind != LayerKind::pool) {
        l.activation = Activation::threshold;
        l.threshold = ThresholdConfig{};
      }
    }
  }
  return out;
}

}  // namespace ghn

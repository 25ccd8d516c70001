#include "ghn/network.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <random>

namespace ghn {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::threshold: return "threshold";
    case Activation::relu_ghd: return "relu_ghd";
    case Activation::relu: return "relu";
  }
  return "?";
}

const char* to_string(NetKind k) { return k == NetKind::ghn ? "ghn" : "baseline"; }
const char* to_string(Head h) { return h == Head::softmax ? "softmax" : "logistic"; }

Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "threshold") return Activation::threshold;
  if (s == "relu_ghd") return Activation::relu_ghd;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + s +
                              "' (expected none, threshold, relu_ghd, relu)");
}

NetKind parse_net_kind(const std::string& s) {
  if (s == "ghn") return NetKind::ghn;
  if (s == "baseline") return NetKind::baseline;
  throw std::invalid_argument("unknown network kind '" + s + "' (expected ghn, baseline)");
}

Head parse_head(const std::string& s) {
  if (s == "softmax") return Head::softmax;
  if (s == "logistic") return Head::logistic;
  throw std::invalid_argument("unknown head '" + s + "' (expected softmax, logistic)");
}

std::size_t NetworkSpec::weighted_layers() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const auto& l) {
    return l.kind != LayerKind::pool;
  }));
}

std::size_t NetworkSpec::classes() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (it->kind != LayerKind::pool) return it->out;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Architecture strings

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::size_t> parse_args(const std::string& token, const std::string& body) {
  std::vector<std::size_t> args;
  std::size_t start = 0;
  while (start <= body.size()) {
    const std::size_t comma = body.find(',', start);
    const std::string part = trim(body.substr(start, comma == std::string::npos ? std::string::npos
                                                                                : comma - start));
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size() || v == 0) {
      throw ArchitectureError("architecture token '" + token + "': '" + part +
                                  "' is not a positive integer",
                              token);
    }
    args.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return args;
}

}  // namespace

std::vector<LayerSpec> parse_architecture(const std::string& arch) {
  std::vector<LayerSpec> layers;
  const std::string text = trim(arch);
  if (text.empty()) throw ArchitectureError("empty architecture string", "");
  std::size_t start = 0;
  while (start <= text.size()) {
    // '-' separates tokens; brackets never contain '-'.
    const std::size_t dash = text.find('-', start);
    const std::string token =
        trim(text.substr(start, dash == std::string::npos ? std::string::npos : dash - start));
    LayerSpec layer;
    if (token == "pool") {
      layer.kind = LayerKind::pool;
    } else {
      const std::size_t open = token.find('[');
      if (open == std::string::npos || token.back() != ']') {
        throw ArchitectureError("unrecognized architecture token '" + token + "'", token);
      }
      const std::string head = trim(token.substr(0, open));
      const auto args = parse_args(token, token.substr(open + 1, token.size() - open - 2));
      if (head == "cv") {
        if (args.size() != 4) {
          throw ArchitectureError("cv expects 4 values [c_in,kh,kw,c_out], got " +
                                      std::to_string(args.size()) + " in '" + token + "'",
                                  token);
        }
        layer.kind = LayerKind::conv;
        layer.in = args[0];
        layer.kh = args[1];
        layer.kw = args[2];
        layer.out = args[3];
      } else if (head == "fc") {
        if (args.size() != 1 && args.size() != 2) {
          throw ArchitectureError("fc expects [out] or [in,out], got " +
                                      std::to_string(args.size()) + " values in '" + token + "'",
                                  token);
        }
        layer.kind = LayerKind::dense;
        layer.in = args.size() == 2 ? args[0] : 0;
        layer.out = args.back();
      } else {
        throw ArchitectureError("unrecognized architecture token '" + token + "'", token);
      }
    }
    layers.push_back(layer);
    if (dash == std::string::npos) break;
    start = dash + 1;
  }
  return layers;
}

std::string render_architecture(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += "-";
    switch (l.kind) {
      case LayerKind::pool: out += "pool"; break;
      case LayerKind::conv:
        out += "cv[" + std::to_string(l.in) + "," + std::to_string(l.kh) + "," +
               std::to_string(l.kw) + "," + std::to_string(l.out) + "]";
        break;
      case LayerKind::dense:
        out += l.in ? "fc[" + std::to_string(l.in) + "," + std::to_string(l.out) + "]"
                    : "fc[" + std::to_string(l.out) + "]";
        break;
    }
  }
  return out;
}

namespace {

struct Flow {
  bool flat = false;
  std::size_t h = 0, w = 0, c = 0;
  std::size_t width() const { return flat ? c : h * w * c; }
};

[[noreturn]] void compose_error(std::size_t index, const std::string& msg) {
  throw ShapeError("layer " + std::to_string(index + 1) + ": " + msg);
}

Flow step(const LayerSpec& l, Flow f, std::size_t index) {
  switch (l.kind) {
    case LayerKind::conv:
      if (f.flat) compose_error(index, "convolution after a fully connected layer");
      if (l.in != f.c) {
        compose_error(index, "cv expects " + std::to_string(l.in) + " input channels, got " +
                                 std::to_string(f.c));
      }
      try {
        f.h = conv_out_extent(f.h, l.kh, l.stride, l.padding);
        f.w = conv_out_extent(f.w, l.kw, l.stride, l.padding);
      } catch (const ShapeError& e) {
        compose_error(index, e.what());
      }
      f.c = l.out;
      return f;
    case LayerKind::pool:
      if (f.flat) compose_error(index, "pool after a fully connected layer");
      if (l.window > f.h || l.window > f.w) {
        compose_error(index, "pool window larger than " + std::to_string(f.h) + "x" +
                                 std::to_string(f.w) + " input");
      }
      f.h = (f.h - l.window) / l.pool_stride + 1;
      f.w = (f.w - l.window) / l.pool_stride + 1;
      return f;
    case LayerKind::dense:
      if (l.in != f.width()) {
        compose_error(index, "fc expects input width " + std::to_string(l.in) + ", got " +
                                 std::to_string(f.width()));
      }
      f.flat = true;
      f.c = l.out;
      return f;
  }
  return f;
}

}  // namespace

void resolve_shapes(NetworkSpec& spec) {
  if (spec.layers.empty() || spec.weighted_layers() == 0) {
    throw ShapeError("network needs at least one weighted layer");
  }
  if (spec.layers.back().kind != LayerKind::dense) {
    throw ShapeError("layer " + std::to_string(spec.layers.size()) +
                     ": the classifier head must be a fully connected layer");
  }
  if (spec.kind == NetKind::ghn && spec.batch_norm) {
    throw ShapeError("batch normalization applies to baseline networks only");
  }
  Flow f{false, spec.height, spec.width, spec.channels};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    auto& l = spec.layers[i];
    if (l.kind == LayerKind::dense && l.in == 0) l.in = f.width();
    f = step(l, f, i);
  }
}

Shape layer_output_shape(const NetworkSpec& spec, std::size_t index, std::size_t n) {
  Flow f{false, spec.height, spec.width, spec.channels};
  for (std::size_t i = 0; i <= index && i < spec.layers.size(); ++i) f = step(spec.layers[i], f, i);
  return f.flat ? Shape{n, f.c} : Shape{n, f.h, f.w, f.c};
}

double ghn_weight_scale(const NetworkSpec& spec, const LayerSpec& layer) {
  if (spec.kind != NetKind::ghn || spec.weight_gain <= 0.0) return 1.0;
  const std::size_t fan_in = layer.kind == LayerKind::conv ? layer.kh * layer.kw * layer.in : layer.in;
  return spec.weight_gain * std::sqrt(double(fan_in));
}

// ---------------------------------------------------------------------------
// Network

template <class T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  resolve_shapes(spec_);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, spec_.init_std);
  const std::size_t weighted = spec_.weighted_layers();
  std::size_t wi = 0;
  for (const auto& ls : spec_.layers) {
    Layer layer;
    layer.spec = ls;
    if (ls.kind == LayerKind::pool) {
      layer.name = "pool";
      layers_.push_back(std::move(layer));
      continue;
    }
    ++wi;
    const bool last = wi == weighted;
    layer.name = (ls.kind == LayerKind::conv ? "conv" : "fc") + std::to_string(wi);
    const Shape wshape = ls.kind == LayerKind::conv ? Shape{ls.kh, ls.kw, ls.in, ls.out}
                                                    : Shape{ls.in, ls.out};
    Tensor<T> w(wshape);
    for (auto& v : w.vec()) v = static_cast<T>(normal(rng));
    const std::string kernel_name = ls.kind == LayerKind::conv ? ".kernel" : ".weights";
    layer.weight = std::make_unique<Parameter<T>>(layer.name + kernel_name, std::move(w));
    if (spec_.kind == NetKind::baseline) {
      layer.bias = std::make_unique<Parameter<T>>(layer.name + ".bias", Tensor<T>(Shape{ls.out}));
      if (spec_.batch_norm && !last) {
        layer.bn = std::make_unique<BatchNormState<T>>(layer.name + ".bn", ls.out);
      }
    }
    if (!last && ls.activation == Activation::threshold &&
        ls.threshold.mode != ThresholdMode::off) {
      const std::size_t groups = ls.threshold.granularity == Granularity::per_filter ? ls.out : 1;
      const T r0 = static_cast<T>(std::clamp(ls.threshold.r, 0.0, 1.0));
      const bool train = ls.threshold.mode == ThresholdMode::soft && ls.threshold.trainable;
      layer.ratio = std::make_unique<Parameter<T>>(layer.name + ".r",
                                                   Tensor<T>(Shape{groups}, r0), train);
      layer.ratio->clamp_unit = true;
    }
    layers_.push_back(std::move(layer));
  }
}

template <class T>
Var<T> Network<T>::forward(Tape<T>& tape, const Tensor<T>& images, bool training,
                           std::vector<LayerOutput<T>>* trace) {
  if (images.rank() != 4 || images.dim(1) != spec_.height || images.dim(2) != spec_.width ||
      images.dim(3) != spec_.channels) {
    throw ShapeError("layer 1: input batch " + shape_str(images.shape()) + " does not match [n," +
                     std::to_string(spec_.height) + "," + std::to_string(spec_.width) + "," +
                     std::to_string(spec_.channels) + "]");
  }
  const std::size_t n = images.dim(0);
  const std::size_t weighted = spec_.weighted_layers();
  Var<T> x = tape.constant(images);
  std::size_t wi = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& layer = layers_[i];
    const LayerSpec& ls = layer.spec;
    if (ls.kind == LayerKind::pool) {
      x = ops::maxpool2d(x, ls.window, ls.pool_stride);
      continue;
    }
    ++wi;
    const bool last = wi == weighted;
    if (ls.kind == LayerKind::dense && x.shape().size() != 2) {
      x = ops::reshape(x, Shape{n, numel(x.shape()) / n});
    }
    Var<T> w = tape.param(*layer.weight);
    Var<T> h;
    if (spec_.kind == NetKind::ghn) {
      if (spec_.weight_gain > 0.0) w = ops::scale(w, static_cast<T>(ghn_weight_scale(spec_, ls)));
      h = ls.kind == LayerKind::conv ? ghn_conv2d(x, w, ls.stride, ls.padding) : ghn_dense(x, w);
    } else {
      h = ls.kind == LayerKind::conv ? ops::conv2d(x, w, ls.stride, ls.padding) : ops::matmul(x, w);
      h = add_bias(h, tape.param(*layer.bias));
      if (layer.bn) {
        h = batchnorm(h, tape.param(layer.bn->gamma), tape.param(layer.bn->beta), *layer.bn,
                      training);
      }
    }
    if (last) {
      if (trace) trace->push_back({layer.name, h});
      if (spec_.kind != NetKind::ghn) return h;
      // Degree of equivalence: -h for softmax, the complement 1 - h for the
      // membership head. Both rank classes identically.
      return spec_.head == Head::softmax ? ops::negate(h)
                                         : ops::add_constant(ops::negate(h), T(1));
    }
    switch (ls.activation) {
      case Activation::none: x = h; break;
      case Activation::relu: x = ops::relu(h); break;
      case Activation::relu_ghd: x = relu_ghd(h); break;
      case Activation::threshold:
        x = layer.ratio ? double_threshold(h, tape.param(*layer.ratio), ls.threshold) : h;
        break;
    }
    // Statistics describe what the layer emits, after its activation.
    if (trace) trace->push_back({layer.name, x});
  }
  throw ShapeError("network has no classifier layer");
}

template <class T>
Var<T> Network<T>::loss(Var<T> logits, std::span<const int> labels) const {
  if (spec_.head == Head::logistic) return membership_cross_entropy(logits, labels);
  return ops::softmax_cross_entropy(logits, labels);
}

template <class T>
std::vector<Parameter<T>*> Network<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_) {
    if (l.weight) out.push_back(l.weight.get());
    if (l.bias) out.push_back(l.bias.get());
    if (l.bn) {
      out.push_back(&l.bn->gamma);
      out.push_back(&l.bn->beta);
      out.push_back(&l.bn->running_mean);
      out.push_back(&l.bn->running_var);
    }
    if (l.ratio) out.push_back(l.ratio.get());
  }
  return out;
}

template <class T>
Parameter<T>* Network<T>::find(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <class T>
std::vector<std::string> Network<T>::layer_names() const {
  std::vector<std::string> names;
  for (const auto& l : layers_) {
    if (l.spec.kind != LayerKind::pool) names.push_back(l.name);
  }
  return names;
}

template <class T>
std::vector<int> predict(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("predict: logits must be [n, classes]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

template class Network<float>;
template class Network<double>;
template std::vector<int> predict(const Tensor<float>&);
template std::vector<int> predict(const Tensor<double>&);

}  // namespace ghn

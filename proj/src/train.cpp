#include "ghn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ghn {

const char* to_string(Precision p) { return p == Precision::r32 ? "r32" : "r64"; }

Precision parse_precision(const std::string& s) {
  if (s == "r32") return Precision::r32;
  if (s == "r64") return Precision::r64;
  throw std::invalid_argument("unknown precision '" + s + "' (expected r32, r64)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (eval_batch == 0) throw std::invalid_argument("eval_batch must be >= 1");
}

std::vector<double> Metrics::series(const std::string& layer, const std::string& stat) const {
  std::vector<double> out;
  for (const auto& s : layer_stats) {
    if (s.layer == layer && s.stat == stat) out.push_back(s.value);
  }
  return out;
}

std::vector<double> Metrics::scalar_series(const std::string& split,
                                           const std::string& metric) const {
  std::vector<double> out;
  for (const auto& s : scalars) {
    if (s.split == split && s.metric == metric) out.push_back(s.value);
  }
  return out;
}

std::optional<double> Metrics::scalar_at(const std::string& split, const std::string& metric,
                                         std::size_t step) const {
  std::optional<double> best;
  for (const auto& s : scalars) {
    if (s.split == split && s.metric == metric && s.step <= step) best = s.value;
  }
  return best;
}

namespace {

std::string fmt_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string scalar_csv(const Metrics& m) {
  std::string out = "step,split,metric,value\n";
  for (const auto& s : m.scalars) {
    out += std::to_string(s.step) + "," + s.split + "," + s.metric + "," + fmt_value(s.value) + "\n";
  }
  return out;
}

std::string layer_stats_csv(const Metrics& m) {
  std::string out = "step,layer,stat,value\n";
  for (const auto& s : m.layer_stats) {
    out += std::to_string(s.step) + "," + s.layer + "," + s.stat + "," + fmt_value(s.value) + "\n";
  }
  return out;
}

template <class T>
LayerSummary summarize(const Tensor<T>& t) {
  if (t.size() == 0) throw std::invalid_argument("summarize: empty tensor");
  double sum = 0.0;
  double mx = -std::numeric_limits<double>::infinity();
  double mn = std::numeric_limits<double>::infinity();
  for (T v : t.vec()) {
    sum += v;
    mx = std::max(mx, double(v));
    mn = std::min(mn, double(v));
  }
  return {sum / double(t.size()), mx, mn};
}

template <class T>
void record_layer_stats(const std::vector<LayerOutput<T>>& trace, std::size_t step,
                        std::vector<LayerStat>& out, const std::string& only) {
  bool found = only.empty();
  for (const auto& lo : trace) {
    if (!only.empty() && lo.layer != only) continue;
    found = true;
    const LayerSummary s = summarize(lo.value.value());
    out.push_back({step, lo.layer, "mean", s.mean});
    out.push_back({step, lo.layer, "max", s.max});
    out.push_back({step, lo.layer, "min", s.min});
  }
  if (!found) throw std::out_of_range("record_layer_stats: unknown layer id '" + only + "'");
}

template <class T>
void sgd_step(std::span<Parameter<T>* const> params, double lr) {
  for (auto* p : params) {
    if (!p->trainable) continue;
    if (p->grad.size() == 0 || p->grad.shape() != p->value.shape()) {
      throw TrainingError("gradient for '" + p->name + "' has shape " +
                              shape_str(p->grad.shape()) + ", parameter is " +
                              shape_str(p->value.shape()),
                          0);
    }
    if (!p->grad.all_finite()) {
      throw TrainingError("non-finite gradient for parameter '" + p->name + "'", 0);
    }
  }
  for (auto* p : params) {
    if (!p->trainable) continue;
    auto& v = p->value.vec();
    const auto& g = p->grad.vec();
    const T step = static_cast<T>(lr);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= step * g[i];
    if (p->clamp_unit) {
      for (auto& x : v) x = std::clamp(x, T(0), T(1));
    }
  }
}

template <class T>
Tensor<T> to_precision(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return Tensor<T>(t.shape(), std::vector<T>(t.vec().begin(), t.vec().end()));
  }
}

template <class T>
EvalResult evaluate(Network<T>& net, const Dataset& ds, std::size_t batch) {
  if (batch == 0) throw std::invalid_argument("evaluate: batch must be >= 1");
  if (ds.height() != net.spec().height || ds.width() != net.spec().width ||
      ds.channels() != net.spec().channels) {
    throw ShapeError("evaluate: dataset images " + shape_str(ds.images.shape()) +
                     " do not match the network input");
  }
  EvalResult r;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + batch, ds.size()); ++i) idx.push_back(i);
    Batch b = gather(ds, idx);
    Tape<T> tape;
    Var<T> logits = net.forward(tape, to_precision<T>(b.images), false);
    Var<T> loss = net.loss(logits, b.labels);
    loss_sum += double(loss.value().item()) * double(idx.size());
    const auto pred = predict(logits.value());
    for (std::size_t i = 0; i < pred.size(); ++i) r.correct += pred[i] == b.labels[i];
    r.total += idx.size();
  }
  r.accuracy = r.total ? double(r.correct) / double(r.total) : 0.0;
  r.loss = r.total ? loss_sum / double(r.total) : 0.0;
  return r;
}

template <class T>
TrainResult train(Network<T>& net, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg, const std::string& config_echo,
                  const ProgressFn& progress) {
  cfg.validate();
  TrainResult result;
  auto params = net.parameters();
  BatchIterator stream(train_set, cfg.batch_size, true, cfg.seed);
  std::uint64_t checksum = 0xcbf29ce484222325ULL;

  auto run_eval = [&](std::size_t step) {
    const EvalResult e = evaluate(net, test_set, cfg.eval_batch);
    result.metrics.scalars.push_back({step, "test", "loss", e.loss});
    result.metrics.scalars.push_back({step, "test", "accuracy", e.accuracy});
    if (progress) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "step %zu  test accuracy %.4f  loss %.4f", step, e.accuracy,
                    e.loss);
      progress(buf);
    }
  };

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Batch batch = stream.next();
    checksum = batch_checksum(batch, checksum);
    const bool stats = cfg.stats_every > 0 && step % cfg.stats_every == 0;
    std::vector<LayerOutput<T>> trace;
    Tape<T> tape;
    Var<T> logits = net.forward(tape, to_precision<T>(batch.images), true, stats ? &trace : nullptr);
    Var<T> loss = net.loss(logits, batch.labels);
    const double loss_value = loss.value().item();
    if (!std::isfinite(loss_value)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step), step);
    }
    if (stats) {
      record_layer_stats(trace, step, result.metrics.layer_stats);
      for (auto* p : params) {
        if (!p->clamp_unit) continue;
        double sum = 0.0;
        for (T v : p->value.vec()) sum += v;
        const std::string layer = p->name.substr(0, p->name.find('.'));
        result.metrics.layer_stats.push_back({step, layer, "r", sum / double(p->value.size())});
      }
    }
    const auto pred = predict(logits.value());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
    tape.backward(loss);
    try {
      sgd_step<T>(params, cfg.learning_rate);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step), step);
    }
    const std::size_t done = step + 1;
    result.metrics.scalars.push_back({done, "train", "loss", loss_value});
    result.metrics.scalars.push_back(
        {done, "train", "accuracy", double(correct) / double(batch.labels.size())});
    if (done < cfg.steps && cfg.eval_every > 0 && done % cfg.eval_every == 0) run_eval(done);
  }
  if (test_set.size() > 0) run_eval(cfg.steps);
  result.steps_run = cfg.steps;
  result.stream_checksum = checksum;
  result.checkpoint = make_checkpoint(net, cfg.steps, config_echo);
  return result;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw CorrelationError("pearson: series lengths differ");
  if (a.size() < 2) throw CorrelationError("pearson: need at least two points");
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw CorrelationError("pearson: correlation undefined for a constant series");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

template <class T>
CompareReport compare_bn_experiment(const NetworkSpec& ghn_spec, const NetworkSpec& base_spec,
                                    const Dataset& train_set, const Dataset& test_set,
                                    const TrainConfig& cfg, const ProgressFn& progress) {
  CompareReport r;
  auto tagged = [&progress](const char* tag) -> ProgressFn {
    if (!progress) return {};
    return [&progress, tag](const std::string& s) { progress(std::string(tag) + ": " + s); };
  };
  {
    Network<T> net(ghn_spec, cfg.seed);
    r.layer = net.layer_names().front();
    r.ghn_run = train(net, train_set, test_set, cfg, "", tagged("ghn"));
  }
  {
    Network<T> net(base_spec, cfg.seed);
    if (net.layer_names().front() != r.layer) {
      throw ShapeError("compare_bn_experiment: variants disagree on the first layer");
    }
    r.base_run = train(net, train_set, test_set, cfg, "", tagged("baseline"));
  }
  r.ghn_checksum = r.ghn_run.stream_checksum;
  r.base_checksum = r.base_run.stream_checksum;
  for (const auto& s : r.ghn_run.metrics.layer_stats) {
    if (s.layer == r.layer && s.stat == "mean") r.steps.push_back(s.step);
  }
  r.ghn_mean = r.ghn_run.metrics.series(r.layer, "mean");
  r.ghn_max = r.ghn_run.metrics.series(r.layer, "max");
  r.ghn_min = r.ghn_run.metrics.series(r.layer, "min");
  r.base_mean = r.base_run.metrics.series(r.layer, "mean");
  r.base_max = r.base_run.metrics.series(r.layer, "max");
  r.base_min = r.base_run.metrics.series(r.layer, "min");
  // A constant series (the post-ReLU minimum is always 0) has no correlation.
  auto correlate = [](const std::vector<double>& a, const std::vector<double>& b) {
    try {
      return pearson(a, b);
    } catch (const CorrelationError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  r.pearson_mean = correlate(r.ghn_mean, r.base_mean);
  r.pearson_max = correlate(r.ghn_max, r.base_max);
  r.pearson_min = correlate(r.ghn_min, r.base_min);
  for (const auto& s : r.ghn_run.metrics.scalars) {
    if (s.split == "test" && s.metric == "accuracy") {
      r.eval_steps.push_back(s.step);
      r.ghn_accuracy.push_back(s.value);
    }
  }
  r.base_accuracy = r.base_run.metrics.scalar_series("test", "accuracy");
  return r;
}

std::string compare_csv(const CompareReport& r) {
  std::string out = "series,step,ghn,baseline\n";
  auto rows = [&out](const char* name, const std::vector<std::size_t>& steps,
                     const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < steps.size() && i < a.size() && i < b.size(); ++i) {
      out += std::string(name) + "," + std::to_string(steps[i]) + "," + fmt_value(a[i]) + "," +
             fmt_value(b[i]) + "\n";
    }
  };
  rows("mean", r.steps, r.ghn_mean, r.base_mean);
  rows("max", r.steps, r.ghn_max, r.base_max);
  rows("min", r.steps, r.ghn_min, r.base_min);
  rows("accuracy", r.eval_steps, r.ghn_accuracy, r.base_accuracy);
  return out;
}

std::string correlation_csv(const CompareReport& r) {
  return "stat,pearson\nmean," + fmt_value(r.pearson_mean) + "\nmax," + fmt_value(r.pearson_max) +
         "\nmin," + fmt_value(r.pearson_min) + "\n";
}

#define GHN_INSTANTIATE_TRAIN(T)                                                               \
  template LayerSummary summarize(const Tensor<T>&);                                           \
  template void record_layer_stats(const std::vector<LayerOutput<T>>&, std::size_t,            \
                                   std::vector<LayerStat>&, const std::string&);               \
  template void sgd_step(std::span<Parameter<T>* const>, double);                              \
  template Tensor<T> to_precision(const Tensor<float>&);                                       \
  template EvalResult evaluate(Network<T>&, const Dataset&, std::size_t);                      \
  template TrainResult train(Network<T>&, const Dataset&, const Dataset&, const TrainConfig&,  \
                             const std::string&, const ProgressFn&);                           \
  template CompareReport compare_bn_experiment<T>(const NetworkSpec&, const NetworkSpec&,      \
                                                  const Dataset&, const Dataset&,              \
                                                  const TrainConfig&, const ProgressFn&);

GHN_INSTANTIATE_TRAIN(float)
GHN_INSTANTIATE_TRAIN(double)
#undef GHN_INSTANTIATE_TRAIN

}  // namespace ghn

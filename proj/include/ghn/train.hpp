#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ghn/checkpoint.hpp"
#include "ghn/data.hpp"
#include "ghn/network.hpp"

namespace ghn {

enum class Precision { r32, r64 };

const char* to_string(Precision p);
Precision parse_precision(const std::string& s);

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t batch_size = 64;
  std::size_t steps = 1000;
  std::uint64_t seed = 1;
  std::size_t eval_every = 100;   // test accuracy cadence; 0 = only at the end
  std::size_t stats_every = 50;   // layer statistics cadence; 0 = never
  std::size_t eval_batch = 500;
  Precision precision = Precision::r32;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& msg, std::size_t step)
      : std::runtime_error(msg), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct ScalarMetric {
  std::size_t step;
  std::string split;   // train | test
  std::string metric;  // loss | accuracy
  double value;
};

struct LayerStat {
  std::size_t step;
  std::string layer;
  std::string stat;  // mean | max | min | r
  double value;
};

struct Metrics {
  std::vector<ScalarMetric> scalars;
  std::vector<LayerStat> layer_stats;

  /// Values of one (layer, stat) series in step order.
  std::vector<double> series(const std::string& layer, const std::string& stat) const;
  std::vector<double> scalar_series(const std::string& split, const std::string& metric) const;
  /// Most recent value recorded at or before `step`.
  std::optional<double> scalar_at(const std::string& split, const std::string& metric,
                                  std::size_t step) const;
};

/// header `step,split,metric,value`
std::string scalar_csv(const Metrics& m);
/// header `step,layer,stat,value`
std::string layer_stats_csv(const Metrics& m);

struct LayerSummary {
  double mean;
  double max;
  double min;
};

template <class T>
LayerSummary summarize(const Tensor<T>& t);

/// Statistics of every traced layer output, appended to `out` at `step`.
/// `only` restricts to one layer id; throws std::out_of_range if it was not
/// traced.
template <class T>
void record_layer_stats(const std::vector<LayerOutput<T>>& trace, std::size_t step,
                        std::vector<LayerStat>& out, const std::string& only = "");

/// p <- p - lr * g for trainable parameters; clamp_unit parameters are then
/// clamped to [0, 1]. Throws TrainingError naming a parameter whose gradient
/// is non-finite or mis-shaped.
template <class T>
void sgd_step(std::span<Parameter<T>* const> params, double lr);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Full pass in evaluation mode, in chunks of `batch` examples.
template <class T>
EvalResult evaluate(Network<T>& net, const Dataset& ds, std::size_t batch = 500);

template <class T>
Tensor<T> to_precision(const Tensor<float>& t);

struct TrainResult {
  Metrics metrics;
  Checkpoint checkpoint;
  std::uint64_t stream_checksum = 0;
  std::size_t steps_run = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Plain SGD over a seeded shuffled stream. Records train loss/accuracy every
/// step, layer statistics every stats_every steps, and test accuracy/loss
/// every eval_every steps and after the final step.
template <class T>
TrainResult train(Network<T>& net, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg, const std::string& config_echo = "",
                  const ProgressFn& progress = {});

class CorrelationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Sample Pearson correlation. Throws CorrelationError for length mismatch,
/// fewer than two points, or a constant series.
double pearson(std::span<const double> a, std::span<const double> b);

struct CompareReport {
  std::string layer;  // compared layer (first convolution)
  std::vector<std::size_t> steps;
  std::vector<double> ghn_mean, ghn_max, ghn_min;
  std::vector<double> base_mean, base_max, base_min;
  double pearson_mean = 0.0;  // NaN where either series is constant
  double pearson_max = 0.0;
  double pearson_min = 0.0;
  std::vector<std::size_t> eval_steps;
  std::vector<double> ghn_accuracy, base_accuracy;
  std::uint64_t ghn_checksum = 0;
  std::uint64_t base_checksum = 0;
  TrainResult ghn_run;
  TrainResult base_run;
};

/// Trains both variants from the same seed on the same batch stream and
/// correlates the first weighted layer's output statistics.
template <class T>
CompareReport compare_bn_experiment(const NetworkSpec& ghn_spec, const NetworkSpec& base_spec,
                                    const Dataset& train_set, const Dataset& test_set,
                                    const TrainConfig& cfg, const ProgressFn& progress = {});

/// header `series,step,ghn,baseline`; series is mean, max, min or accuracy.
std::string compare_csv(const CompareReport& r);
/// header `stat,pearson`.
std::string correlation_csv(const CompareReport& r);

}  // namespace ghn

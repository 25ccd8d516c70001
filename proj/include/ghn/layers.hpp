#pragma once

// GHN layers. Every GHN neuron emits the generalized hamming distance between
// its input patch and its weights,
//
//   h = mean(x) + mean(w) - (2/L) x.w,
//
// i.e. the analytic bias -(sum x + sum w)/2 is enforced instead of learned.
// Baseline layers (learned bias, optional batch normalization) live here too
// so the two forms can be compared on identical geometry.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ghn/autodiff.hpp"

namespace ghn {

enum class ThresholdMode { off, hard, soft };
enum class Granularity { per_layer, per_filter };

const char* to_string(ThresholdMode m);
const char* to_string(Granularity g);
ThresholdMode parse_threshold_mode(const std::string& s);
Granularity parse_granularity(const std::string& s);

struct ThresholdConfig {
  ThresholdMode mode = ThresholdMode::soft;
  Granularity granularity = Granularity::per_filter;
  double r = 0.05;         // initial ratio, clamped to [0, 1]
  bool trainable = true;   // ignored unless mode == soft
  double steepness = 10.0; // soft mode gate slope k

  friend bool operator==(const ThresholdConfig&, const ThresholdConfig&) = default;
};

/// h[n, f] = mean(x_n) + mean(W[:, f]) - (2/L) x_n . W[:, f]
template <class T>
Var<T> ghn_dense(Var<T> x, Var<T> weights);

/// Convolutional GHD. The patch mean is a ones-kernel convolution over the
/// same padded geometry, so padded zeros count towards it.
template <class T>
Var<T> ghn_conv2d(Var<T> x, Var<T> kernel, std::size_t stride, Padding pad);

/// Maximal |h - 0.5| over the batch: one value per filter (last axis) or a
/// single value for the whole tensor.
template <class T>
std::vector<T> threshold_spread(const Tensor<T>& h, Granularity g);

/// Suppresses outputs inside [0.5 - rO, 0.5 + rO] towards the fixed point 0.5.
/// `r` holds one ratio (per_layer) or one per filter. O is a constant with
/// respect to differentiation. Hard mode gives no gradient to r; soft mode
/// uses the gate 0.5 + d * sigmoid(k (|d| - rO)), d = h - 0.5.
template <class T>
Var<T> double_threshold(Var<T> h, Var<T> r, const ThresholdConfig& cfg);

/// max(0, 0.5 - h): a minimal hamming distance threshold of 0.5.
template <class T>
Var<T> relu_ghd(Var<T> h);

template <class T>
struct BatchNormState {
  Parameter<T> gamma;
  Parameter<T> beta;
  Parameter<T> running_mean;  // not trainable
  Parameter<T> running_var;   // not trainable
  double momentum = 0.9;
  double epsilon = 1e-5;

  BatchNormState() = default;
  BatchNormState(const std::string& prefix, std::size_t features);
};

/// Normalizes each feature (last axis) over all other axes. Training mode
/// uses biased batch statistics and folds them into the running estimates.
template <class T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, bool training);

/// Adds a per-feature bias along the last axis.
template <class T>
Var<T> add_bias(Var<T> x, Var<T> bias);

/// Mean over the batch of sum over classes of binary cross-entropy between
/// mu(z) and the one-hot target.
template <class T>
Var<T> membership_cross_entropy(Var<T> z, std::span<const int> labels);

}  // namespace ghn

#include "ghn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace ghn {

const char* to_string(ThresholdMode m) {
  switch (m) {
    case ThresholdMode::off: return "off";
    case ThresholdMode::hard: return "hard";
    case ThresholdMode::soft: return "soft";
  }
  return "?";
}

const char* to_string(Granularity g) {
  return g == Granularity::per_layer ? "per_layer" : "per_filter";
}

ThresholdMode parse_threshold_mode(const std::string& s) {
  if (s == "off") return ThresholdMode::off;
  if (s == "hard") return ThresholdMode::hard;
  if (s == "soft") return ThresholdMode::soft;
  throw std::invalid_argument("unknown threshold mode '" + s + "' (expected off, hard, soft)");
}

Granularity parse_granularity(const std::string& s) {
  if (s == "per_layer") return Granularity::per_layer;
  if (s == "per_filter") return Granularity::per_filter;
  throw std::invalid_argument("unknown threshold granularity '" + s +
                              "' (expected per_layer, per_filter)");
}

template <class T>
Var<T> ghn_dense(Var<T> x, Var<T> weights) {
  const Shape& xs = x.shape();
  const Shape& ws = weights.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0] || xs[1] == 0) {
    throw ShapeError("ghn_dense: input " + shape_str(xs) + " does not match weights " +
                     shape_str(ws));
  }
  const std::size_t n = xs[0], len = xs[1], filters = ws[1];
  const Shape out{n, filters};
  auto x_mean = ops::broadcast_to(ops::reduce(ops::Reduce::mean, x, {1}, true), out);
  auto w_mean = ops::broadcast_to(ops::reduce(ops::Reduce::mean, weights, {0}, true), out);
  auto dot = ops::scale(ops::matmul(x, weights), static_cast<T>(-2.0 / double(len)));
  return ops::add(ops::add(x_mean, w_mean), dot);
}

template <class T>
Var<T> ghn_conv2d(Var<T> x, Var<T> kernel, std::size_t stride, Padding pad) {
  const Shape& ks = kernel.shape();
  if (ks.size() != 4) throw ShapeError("ghn_conv2d: kernel must be [kh,kw,c_in,c_out]");
  const std::size_t len = ks[0] * ks[1] * ks[2];
  auto dot = ops::conv2d(x, kernel, stride, pad);
  const Shape out = dot.shape();
  auto ones = x.tape->constant(Tensor<T>(Shape{ks[0], ks[1], ks[2], 1}, T(1)));
  auto patch_sum = ops::conv2d(x, ones, stride, pad);
  auto x_mean = ops::broadcast_to(ops::scale(patch_sum, static_cast<T>(1.0 / double(len))), out);
  auto w_mean = ops::reduce(ops::Reduce::mean, kernel, {0, 1, 2}, true);
  auto w_mean_b = ops::broadcast_to(w_mean, out);
  auto scaled = ops::scale(dot, static_cast<T>(-2.0 / double(len)));
  return ops::add(ops::add(x_mean, w_mean_b), scaled);
}

template <class T>
std::vector<T> threshold_spread(const Tensor<T>& h, Granularity g) {
  const std::size_t filters = h.rank() == 0 ? 1 : h.shape().back();
  std::vector<T> spread(g == Granularity::per_filter ? filters : 1, T(0));
  for (std::size_t i = 0; i < h.size(); ++i) {
    const T d = std::abs(h[i] - T(0.5));
    T& slot = spread[g == Granularity::per_filter ? i % filters : 0];
    slot = std::max(slot, d);
  }
  return spread;
}

template <class T>
Var<T> double_threshold(Var<T> h, Var<T> r, const ThresholdConfig& cfg) {
  if (cfg.mode == ThresholdMode::off) return h;
  if (!(cfg.steepness > 0.0)) throw std::invalid_argument("double_threshold: steepness must be > 0");
  const auto& hv = h.value();
  const std::size_t filters = hv.rank() == 0 ? 1 : hv.shape().back();
  const std::size_t groups = cfg.granularity == Granularity::per_filter ? filters : 1;
  if (r.value().size() != groups) {
    throw ShapeError("double_threshold: expected " + std::to_string(groups) +
                     " ratio value(s), got " + std::to_string(r.value().size()));
  }
  const std::vector<T> spread = threshold_spread(hv, cfg.granularity);
  std::vector<T> ratio(groups);
  std::vector<bool> ratio_inside(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const T raw = r.value()[gi];
    ratio[gi] = std::clamp(raw, T(0), T(1));
    ratio_inside[gi] = raw >= T(0) && raw <= T(1);
  }
  auto group_of = [filters, groups](std::size_t i) { return groups == 1 ? 0 : i % filters; };

  Tensor<T> out(hv.shape());
  if (cfg.mode == ThresholdMode::hard) {
    for (std::size_t i = 0; i < hv.size(); ++i) {
      const std::size_t gi = group_of(i);
      const T d = hv[i] - T(0.5);
      out[i] = std::abs(d) <= ratio[gi] * spread[gi] ? T(0.5) : hv[i];
    }
    auto band = std::make_shared<std::vector<T>>(ratio);
    auto width = std::make_shared<std::vector<T>>(spread);
    return h.tape->record(
        std::move(out), {h},
        [h, band, width, group_of](Tape<T>& t, std::span<const T> g) {
          const auto& hv = t.value(h);
          auto gh = t.grad_buffer(h);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t gi = group_of(i);
            if (std::abs(hv[i] - T(0.5)) > (*band)[gi] * (*width)[gi]) gh[i] += g[i];
          }
        },
        "double_threshold_hard");
  }

  const T k = static_cast<T>(cfg.steepness);
  for (std::size_t i = 0; i < hv.size(); ++i) {
    const std::size_t gi = group_of(i);
    const T d = hv[i] - T(0.5);
    const T gate = T(1) / (T(1) + std::exp(-k * (std::abs(d) - ratio[gi] * spread[gi])));
    out[i] = T(0.5) + d * gate;
  }
  auto band = std::make_shared<std::vector<T>>(ratio);
  auto width = std::make_shared<std::vector<T>>(spread);
  auto inside = std::make_shared<std::vector<bool>>(ratio_inside);
  return h.tape->record(
      std::move(out), {h, r},
      [h, r, band, width, inside, group_of, k](Tape<T>& t, std::span<const T> g) {
        const auto& hv = t.value(h);
        auto gh = t.grad_buffer(h);
        auto gr = t.grad_buffer(r);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t gi = group_of(i);
          const T d = hv[i] - T(0.5);
          const T ad = std::abs(d);
          const T gate = T(1) / (T(1) + std::exp(-k * (ad - (*band)[gi] * (*width)[gi])));
          const T slope = gate * (T(1) - gate) * k;
          if (!gh.empty()) gh[i] += g[i] * (gate + ad * slope);
          if (!gr.empty() && (*inside)[gi]) gr[gi] += g[i] * (-d * slope * (*width)[gi]);
        }
      },
      "double_threshold_soft");
}

template <class T>
Var<T> relu_ghd(Var<T> h) {
  return ops::relu(ops::add_constant(ops::negate(h), T(0.5)));
}

template <class T>
BatchNormState<T>::BatchNormState(const std::string& prefix, std::size_t features)
    : gamma(prefix + ".gamma", Tensor<T>(Shape{features}, T(1))),
      beta(prefix + ".beta", Tensor<T>(Shape{features}, T(0))),
      running_mean(prefix + ".running_mean", Tensor<T>(Shape{features}, T(0)), false),
      running_var(prefix + ".running_var", Tensor<T>(Shape{features}, T(1)), false) {}

template <class T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, bool training) {
  const auto& xv = x.value();
  if (xv.rank() < 2) throw ShapeError("batchnorm: expected at least [n, features]");
  const std::size_t features = xv.shape().back();
  if (gamma.value().size() != features || beta.value().size() != features ||
      state.running_mean.value.size() != features) {
    throw ShapeError("batchnorm: parameter size does not match " + std::to_string(features) +
                     " features");
  }
  if (training && xv.dim(0) < 2) {
    throw ShapeError("batchnorm: training mode needs a batch of at least 2");
  }
  const std::size_t count = xv.size() / features;
  std::vector<double> mean(features, 0.0), var(features, 0.0);
  if (training) {
    for (std::size_t i = 0; i < xv.size(); ++i) mean[i % features] += xv[i];
    for (auto& m : mean) m /= double(count);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double d = xv[i] - mean[i % features];
      var[i % features] += d * d;
    }
    for (auto& v : var) v /= double(count);
    const double mom = state.momentum;
    for (std::size_t f = 0; f < features; ++f) {
      auto& rm = state.running_mean.value[f];
      auto& rv = state.running_var.value[f];
      rm = static_cast<T>(mom * rm + (1.0 - mom) * mean[f]);
      rv = static_cast<T>(mom * rv + (1.0 - mom) * var[f]);
    }
  } else {
    for (std::size_t f = 0; f < features; ++f) {
      mean[f] = state.running_mean.value[f];
      var[f] = state.running_var.value[f];
    }
  }
  auto inv_std = std::make_shared<std::vector<T>>(features);
  for (std::size_t f = 0; f < features; ++f) {
    (*inv_std)[f] = static_cast<T>(1.0 / std::sqrt(var[f] + state.epsilon));
  }
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  Tensor<T> out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t f = i % features;
    (*xhat)[i] = static_cast<T>((xv[i] - mean[f]) * (*inv_std)[f]);
    out[i] = gv[f] * (*xhat)[i] + bv[f];
  }
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, features, count, training](Tape<T>& t,
                                                                std::span<const T> g) {
        auto gx = t.grad_buffer(x);
        auto gg = t.grad_buffer(gamma);
        auto gb = t.grad_buffer(beta);
        const auto& gv = t.value(gamma);
        std::vector<double> sum_g(features, 0.0), sum_gx(features, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          sum_g[i % features] += g[i];
          sum_gx[i % features] += double(g[i]) * (*xhat)[i];
        }
        for (std::size_t f = 0; f < features; ++f) {
          if (!gg.empty()) gg[f] += static_cast<T>(sum_gx[f]);
          if (!gb.empty()) gb[f] += static_cast<T>(sum_g[f]);
        }
        if (gx.empty()) return;
        const double m = double(count);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t f = i % features;
          const double scale = double(gv[f]) * (*inv_std)[f];
          if (training) {
            gx[i] += static_cast<T>(scale * (g[i] - sum_g[f] / m - (*xhat)[i] * sum_gx[f] / m));
          } else {
            gx[i] += static_cast<T>(scale * g[i]);
          }
        }
      },
      "batchnorm");
}

template <class T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  const Shape& xs = x.shape();
  if (xs.empty() || bias.value().size() != xs.back()) {
    throw ShapeError("add_bias: bias of size " + std::to_string(bias.value().size()) +
                     " does not match " + shape_str(xs));
  }
  Shape bshape(xs.size(), 1);
  bshape.back() = xs.back();
  return ops::add(x, ops::broadcast_to(ops::reshape(bias, bshape), xs));
}

template <class T>
Var<T> membership_cross_entropy(Var<T> z, std::span<const int> labels) {
  const auto& zv = z.value();
  if (zv.rank() != 2 || zv.dim(0) != labels.size() || labels.empty()) {
    throw ShapeError("membership_cross_entropy: scores " + shape_str(zv.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = zv.dim(0), c = zv.dim(1);
  auto labs = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::out_of_range("membership_cross_entropy: label out of range");
    }
    for (std::size_t j = 0; j < c; ++j) {
      const double u = double(zv[i * c + j]) - 0.5;
      const double y = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
      loss += std::max(u, 0.0) - u * y + std::log1p(std::exp(-std::abs(u)));
    }
  }
  return z.tape->record(
      Tensor<T>::scalar(static_cast<T>(loss / double(n))), {z},
      [z, labs, n, c](Tape<T>& t, std::span<const T> g) {
        const auto& zv = t.value(z);
        auto gz = t.grad_buffer(z);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double mu = 1.0 / (1.0 + std::exp(0.5 - double(zv[i * c + j])));
            const double y = static_cast<int>(j) == (*labs)[i] ? 1.0 : 0.0;
            gz[i * c + j] += static_cast<T>(double(g[0]) * (mu - y) / double(n));
          }
        }
      },
      "membership_cross_entropy");
}

#define GHN_INSTANTIATE_LAYERS(T)                                                          \
  template Var<T> ghn_dense(Var<T>, Var<T>);                                               \
  template Var<T> ghn_conv2d(Var<T>, Var<T>, std::size_t, Padding);                        \
  template std::vector<T> threshold_spread(const Tensor<T>&, Granularity);                 \
  template Var<T> double_threshold(Var<T>, Var<T>, const ThresholdConfig&);                \
  template Var<T> relu_ghd(Var<T>);                                                        \
  template struct BatchNormState<T>;                                                       \
  template Var<T> batchnorm(Var<T>, Var<T>, Var<T>, BatchNormState<T>&, bool);             \
  template Var<T> add_bias(Var<T>, Var<T>);                                                \
  template Var<T> membership_cross_entropy(Var<T>, std::span<const int>);

GHN_INSTANTIATE_LAYERS(float)
GHN_INSTANTIATE_LAYERS(double)
#undef GHN_INSTANTIATE_LAYERS

}  // namespace ghn

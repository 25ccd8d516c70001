#include <doctest.h>

#include <cmath>
#include <random>

#include "ghn/ghd.hpp"
#include "ghn/layers.hpp"

using namespace ghn;

namespace {

template <class T>
Tensor<T> uniform(const Shape& s, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  return t;
}

// Sliding-window GHD: every output is ghd_vec between the (zero padded)
// patch and one filter, computed in double by the algebra module.
Tensor<double> conv_ghd_oracle(const Tensor<float>& x, const Tensor<float>& k) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
  const long pt = long(kh - 1) / 2, pl = long(kw - 1) / 2;
  Tensor<double> out(Shape{n, h, w, co});
  std::vector<double> patch(kh * kw * c), filt(kh * kw * c);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t f = 0; f < co; ++f) {
          std::size_t q = 0;
          for (std::size_t di = 0; di < kh; ++di)
            for (std::size_t dj = 0; dj < kw; ++dj)
              for (std::size_t ch = 0; ch < c; ++ch, ++q) {
                const long yi = long(i + di) - pt, xj = long(j + dj) - pl;
                const bool in = yi >= 0 && xj >= 0 && yi < long(h) && xj < long(w);
                patch[q] = in ? x[((b * h + yi) * w + xj) * c + ch] : 0.0;
                filt[q] = k[((di * kw + dj) * c + ch) * co + f];
              }
          out[((b * h + i) * w + j) * co + f] = ghd_vec(patch, filt);
        }
  return out;
}

template <class T>
Var<T> project(Var<T> y, const Tensor<T>& weights) {
  return ops::sum(ops::mul(y, y.tape->constant(weights)));
}

}  // namespace

TEST_CASE("ghn_dense matches ghd_vec on 100 random configurations") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 5, l = 1 + rng() % 40, f = 1 + rng() % 8;
    const auto x = uniform<float>({n, l}, rng, -0.5, 1.5);
    const auto w = uniform<float>({l, f}, rng, -1.0, 1.0);
    Tape<float> tape;
    const auto h = ghn_dense(tape.constant(x), tape.constant(w)).value();
    REQUIRE(h.shape() == Shape{n, f});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        std::vector<double> xi(l), wj(l);
        for (std::size_t q = 0; q < l; ++q) {
          xi[q] = x[i * l + q];
          wj[q] = w[q * f + j];
        }
        CHECK(std::abs(double(h[i * f + j]) - ghd_vec(xi, wj)) <= 1e-5);
      }
  }
}

TEST_CASE("ghn_conv2d matches the sliding-window oracle on 100 random configurations") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 2, h = 2 + rng() % 7, w = 2 + rng() % 7, c = 1 + rng() % 3;
    const std::size_t kh = 1 + rng() % 4, kw = 1 + rng() % 4, co = 1 + rng() % 4;
    const auto x = uniform<float>({n, h, w, c}, rng, 0.0, 1.0);
    const auto k = uniform<float>({kh, kw, c, co}, rng, -1.0, 1.0);
    Tape<float> tape;
    const auto out = ghn_conv2d(tape.constant(x), tape.constant(k), 1, Padding::same).value();
    const auto ref = conv_ghd_oracle(x, k);
    REQUIRE(out.shape() == ref.shape());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(double(out[i]) - ref[i]) <= 1e-4);
  }
}

TEST_CASE("ghn_dense examples") {
  Tape<double> tape;
  auto one = [&](std::vector<double> x, std::vector<double> w) {
    const std::size_t l = x.size();
    return ghn_dense(tape.constant(Tensor<double>({1, l}, x)),
                     tape.constant(Tensor<double>({l, 1}, w)))
        .value()
        .item();
  };
  CHECK(one({0, 1}, {1, 0}) == doctest::Approx(1.0));
  CHECK(one({0.2, 0.9, -3}, {0.5, 0.5, 0.5}) == doctest::Approx(0.5));
  CHECK(one({1, 0, 1, 1}, {1, 0, 1, 1}) == doctest::Approx(0.0));
}

TEST_CASE("1x1 kernel reduces to scalar ghd") {
  std::mt19937_64 rng(3);
  const auto x = uniform<double>({1, 3, 3, 1}, rng, -1, 2);
  Tape<double> tape;
  const auto h =
      ghn_conv2d(tape.constant(x), tape.constant(Tensor<double>({1, 1, 1, 1}, 0.3)), 1, Padding::same)
          .value();
  for (std::size_t i = 0; i < 9; ++i) CHECK(h[i] == doctest::Approx(ghd(x[i], 0.3)));
}

TEST_CASE("analytic bias identity") {
  // h = -(2/L) (w.x + b) with b = -(sum w + sum x) / 2.
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t l = 1 + rng() % 20;
    const auto x = uniform<float>({1, l}, rng, 0, 1);
    const auto w = uniform<float>({l, 1}, rng, -1, 1);
    double dot = 0, sx = 0, sw = 0;
    for (std::size_t q = 0; q < l; ++q) {
      dot += double(x[q]) * double(w[q]);
      sx += x[q];
      sw += w[q];
    }
    const double b = -(sx + sw) / 2;
    Tape<float> tape;
    const double h = ghn_dense(tape.constant(x), tape.constant(w)).value().item();
    CHECK(std::abs(h - (-2.0 / double(l)) * (dot + b)) <= 1e-5);
  }
}

TEST_CASE("fixed-point absorption") {
  std::mt19937_64 rng(5);
  Tape<double> tape;
  const auto w = uniform<double>({3, 3, 2, 4}, rng, -3, 3);
  const auto h = ghn_conv2d(tape.constant(Tensor<double>({2, 5, 5, 2}, 0.5)), tape.constant(w), 1,
                            Padding::valid)
                     .value();
  for (double v : h.vec()) CHECK(v == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE_TEMPLATE("analytic layer gradients", T, float, double) {
  std::mt19937_64 rng(6);
  const std::size_t l = 7;
  const auto x = uniform<T>({1, l}, rng, 0, 1);
  const auto w = uniform<T>({l, 1}, rng, -1, 1);
  Tape<T> tape;
  auto xv = tape.leaf(x, true), wv = tape.leaf(w, true);
  tape.backward(ops::sum(ghn_dense(xv, wv)));
  const auto gx = tape.grad(xv), gw = tape.grad(wv);
  for (std::size_t q = 0; q < l; ++q) {
    CHECK(double(gw[q]) == doctest::Approx((1 - 2 * double(x[q])) / double(l)).epsilon(1e-5));
    CHECK(double(gx[q]) == doctest::Approx((1 - 2 * double(w[q])) / double(l)).epsilon(1e-5));
  }
}

TEST_CASE_TEMPLATE("GHN dense and conv layers with loss pass grad_check", T, float, double) {
  std::mt19937_64 rng(7);
  const double tol = sizeof(T) == 4 ? 1e-3 : 1e-6;
  const double eps = default_grad_epsilon<T>();
  Parameter<T> x("x", uniform<T>({3, 6}, rng, 0, 1)), w("w", uniform<T>({6, 4}, rng, -1, 1));
  const std::vector<int> labels{2, 0, 3};
  std::vector<Parameter<T>*> ps{&x, &w};
  // Scaled logits keep gradients well above 32-bit rounding noise.
  auto dense = [&](Tape<T>& t) {
    return ops::softmax_cross_entropy(ops::scale(ghn_dense(t.param(x), t.param(w)), T(-4)),
                                      std::span<const int>(labels));
  };
  const auto rd = grad_check<T>(dense, ps, eps);
  INFO("dense worst " << rd.worst);
  CHECK(rd.max_rel_error < tol);

  Parameter<T> img("img", uniform<T>({2, 4, 4, 2}, rng, 0, 1));
  Parameter<T> k("k", uniform<T>({3, 3, 2, 3}, rng, -1, 1));
  const auto r = uniform<T>({2, 4, 4, 3}, rng, -1, 1);
  std::vector<Parameter<T>*> cps{&img, &k};
  const auto rc = grad_check<T>(
      [&](Tape<T>& t) {
        return project(ghn_conv2d(t.param(img), t.param(k), 1, Padding::same), r);
      },
      cps, sizeof(T) == 4 ? 0.25 : eps);
  INFO("conv worst " << rc.worst);
  CHECK(rc.max_rel_error < tol);
}

TEST_CASE("threshold spread") {
  Tensor<double> h(Shape{2, 2}, std::vector<double>{0.1, 0.6, 0.8, 0.45});
  const auto pf = threshold_spread(h, Granularity::per_filter);
  REQUIRE(pf.size() == 2);
  CHECK(pf[0] == doctest::Approx(0.4));
  CHECK(pf[1] == doctest::Approx(0.1));
  const auto pl = threshold_spread(h, Granularity::per_layer);
  REQUIRE(pl.size() == 1);
  CHECK(pl[0] == doctest::Approx(0.4));
}

TEST_CASE("double threshold modes") {
  Tensor<double> hv(Shape{1, 5}, std::vector<double>{0.0, 0.45, 0.5, 0.56, 1.0});
  Tape<double> tape;
  auto h = tape.constant(hv);
  auto r = tape.constant(Tensor<double>({1}, 0.2));  // band 0.5 +- 0.1
  ThresholdConfig cfg;
  cfg.granularity = Granularity::per_layer;

  cfg.mode = ThresholdMode::off;
  CHECK(double_threshold(h, r, cfg).value() == hv);

  cfg.mode = ThresholdMode::hard;
  const auto hard = double_threshold(h, r, cfg);
  CHECK(hard.value().vec() == std::vector<double>{0.0, 0.5, 0.5, 0.5, 1.0});
  // Idempotent at the same band (O is taken from the new input, which keeps
  // its extremes).
  CHECK(double_threshold(hard, r, cfg).value() == hard.value());

  cfg.mode = ThresholdMode::soft;
  cfg.steepness = 1e4;
  const auto soft = double_threshold(h, r, cfg).value();
  for (std::size_t i = 0; i < 5; ++i) CHECK(soft[i] == doctest::Approx(hard.value()[i]).epsilon(1e-6));

  cfg.steepness = 0.0;
  CHECK_THROWS(double_threshold(h, r, cfg));
  cfg.steepness = 10.0;
  CHECK_THROWS_AS(double_threshold(h, tape.constant(Tensor<double>({3}, 0.1)), cfg), ShapeError);
}

TEST_CASE("hard threshold gives no gradient to r") {
  Tape<double> tape;
  auto h = tape.leaf(Tensor<double>({1, 3}, std::vector<double>{0.1, 0.52, 0.9}), true);
  auto r = tape.leaf(Tensor<double>({1}, 0.25), true);
  ThresholdConfig cfg;
  cfg.mode = ThresholdMode::hard;
  cfg.granularity = Granularity::per_layer;
  tape.backward(ops::sum(double_threshold(h, r, cfg)));
  const auto gr = tape.grad(r);
  CHECK((gr.empty() || gr[0] == 0.0));
  const auto gh = tape.grad(h);
  CHECK(gh[0] == 1.0);
  CHECK(gh[1] == 0.0);
  CHECK(gh[2] == 1.0);
}

TEST_CASE_TEMPLATE("soft threshold grad_check away from band edges", T, float, double) {
  std::mt19937_64 rng(8);
  const double tol = sizeof(T) == 4 ? 1e-3 : 1e-6;
  const double eps = sizeof(T) == 4 ? 1e-2 : 1e-6;
  Parameter<T> h("h", uniform<T>({4, 3}, rng, 0.0, 1.0));
  Parameter<T> r("r", Tensor<T>({3}, std::vector<T>{T(0.1), T(0.3), T(0.5)}));
  ThresholdConfig cfg;
  const auto proj = uniform<T>({4, 3}, rng, -1, 1);
  // O = max |h - 0.5| per filter is constant in the derivation; perturbing
  // the maximizing entry moves O, so those coordinates are skipped too.
  const auto spread = threshold_spread(h.value, Granularity::per_filter);
  auto skip = [&](std::size_t p, std::size_t i) {
    if (p != 0) return false;
    const std::size_t f = i % 3;
    const double d = std::abs(double(h.value[i]) - 0.5);
    const double edge = double(r.value[f]) * double(spread[f]);
    return std::abs(d - edge) < 10 * eps || std::abs(d - double(spread[f])) < 10 * eps;
  };
  std::vector<Parameter<T>*> ps{&h, &r};
  const auto res = grad_check<T>(
      [&](Tape<T>& t) {
        return ops::scale(project(double_threshold(t.param(h), t.param(r), cfg), proj), T(10));
      },
      ps, eps, skip);
  INFO("worst " << res.worst);
  CHECK(res.max_rel_error < tol);
}

TEST_CASE("relu_ghd") {
  std::mt19937_64 rng(9);
  const auto hv = uniform<double>({50}, rng, -2, 3);
  Tape<double> tape;
  const auto out = relu_ghd(tape.constant(hv)).value();
  for (std::size_t i = 0; i < hv.size(); ++i) {
    CHECK(out[i] >= 0.0);
    if (hv[i] >= 0.5) CHECK(out[i] == 0.0);
    else CHECK(out[i] == doctest::Approx(0.5 - hv[i]));
  }
}

TEST_CASE("batch normalization") {
  std::mt19937_64 rng(10);
  const std::size_t n = 32, f = 3;
  const auto xv = uniform<double>({n, f}, rng, -4, 9);
  BatchNormState<double> bn("bn", f);
  bn.gamma.value = Tensor<double>({f}, std::vector<double>{2.0, 0.5, 1.0});
  bn.beta.value = Tensor<double>({f}, std::vector<double>{1.0, -1.0, 0.0});
  Tape<double> tape;
  const auto y = batchnorm(tape.constant(xv), tape.param(bn.gamma), tape.param(bn.beta), bn, true)
                     .value();
  for (std::size_t j = 0; j < f; ++j) {
    double m = 0, v = 0, xm = 0, xvar = 0;
    for (std::size_t i = 0; i < n; ++i) {
      m += y[i * f + j];
      xm += xv[i * f + j];
    }
    m /= n;
    xm /= n;
    for (std::size_t i = 0; i < n; ++i) {
      v += (y[i * f + j] - m) * (y[i * f + j] - m);
      xvar += (xv[i * f + j] - xm) * (xv[i * f + j] - xm);
    }
    v /= n;
    xvar /= n;
    CHECK(m == doctest::Approx(bn.beta.value[j]));
    CHECK(v == doctest::Approx(bn.gamma.value[j] * bn.gamma.value[j] * xvar / (xvar + 1e-5)));
    // running = 0.9 * running + 0.1 * batch
    CHECK(bn.running_mean.value[j] == doctest::Approx(0.1 * xm));
    CHECK(bn.running_var.value[j] == doctest::Approx(0.9 + 0.1 * xvar));
  }
  CHECK_FALSE(bn.running_mean.trainable);

  // Evaluation mode uses the running estimates.
  Tape<double> t2;
  const auto e = batchnorm(t2.constant(xv), t2.param(bn.gamma), t2.param(bn.beta), bn, false).value();
  const double expect = bn.gamma.value[0] * (xv[0] - bn.running_mean.value[0]) /
                            std::sqrt(bn.running_var.value[0] + 1e-5) +
                        bn.beta.value[0];
  CHECK(e[0] == doctest::Approx(expect));

  Tape<double> t3;
  CHECK_THROWS(batchnorm(t3.constant(Tensor<double>({1, f}, 1.0)), t3.param(bn.gamma),
                         t3.param(bn.beta), bn, true));
}

TEST_CASE_TEMPLATE("batchnorm, bias and membership loss pass grad_check", T, float, double) {
  std::mt19937_64 rng(11);
  const double tol = sizeof(T) == 4 ? 1e-3 : 1e-6;
  const double eps = default_grad_epsilon<T>();
  BatchNormState<T> bn("bn", 3);
  Parameter<T> x("x", uniform<T>({6, 3}, rng, -2, 2));
  Parameter<T> b("b", uniform<T>({3}, rng, -1, 1));
  const auto proj = uniform<T>({6, 3}, rng, -1, 1);
  std::vector<Parameter<T>*> ps{&x, &bn.gamma, &bn.beta, &b};
  auto f = [&](Tape<T>& t) {
    BatchNormState<T> scratch = bn;  // keep running stats fixed across probes
    auto y = batchnorm(t.param(x), t.param(bn.gamma), t.param(bn.beta), scratch, true);
    return project(add_bias(y, t.param(b)), proj);
  };
  // Normalized outputs sum close to zero against the projection, so 32-bit
  // probes need a wider step to rise above rounding.
  const auto res = grad_check<T>(f, ps, sizeof(T) == 4 ? 2e-2 : eps);
  INFO("worst " << res.worst);
  CHECK(res.max_rel_error < tol);

  Parameter<T> z("z", uniform<T>({4, 5}, rng, -2, 3));
  const std::vector<int> labels{0, 4, 2, 2};
  std::vector<Parameter<T>*> zs{&z};
  const auto rm = grad_check<T>(
      [&](Tape<T>& t) { return membership_cross_entropy(t.param(z), std::span<const int>(labels)); },
      zs, eps);
  CHECK(rm.max_rel_error < tol);
}

TEST_CASE("threshold examples") {
  Tape<double> tape;
  ThresholdConfig cfg;
  cfg.granularity = Granularity::per_layer;
  cfg.mode = ThresholdMode::hard;
  // O = max |h - 0.5| = 1, band 0.5 +- 0.3.
  auto h = tape.constant(Tensor<double>({1, 3}, std::vector<double>{-0.5, 0.6, 0.9}));
  const auto hard = double_threshold(h, tape.constant(Tensor<double>({1}, 0.3)), cfg).value();
  CHECK(hard[1] == 0.5);
  CHECK(hard[2] == 0.9);

  // Soft at r = 0 is near identity once |d| >= 0.5.
  cfg.mode = ThresholdMode::soft;
  auto far = tape.constant(Tensor<double>({1, 4}, std::vector<double>{-1.0, 0.0, 1.0, 1.7}));
  const auto soft = double_threshold(far, tape.constant(Tensor<double>({1}, 0.0)), cfg).value();
  const std::vector<double> in{-1.0, 0.0, 1.0, 1.7};
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(soft[i] - in[i]) < 0.01);

  // Every mode leaves an all-0.5 tensor alone.
  auto fixed = tape.constant(Tensor<double>({2, 3}, 0.5));
  for (auto mode : {ThresholdMode::off, ThresholdMode::hard, ThresholdMode::soft}) {
    cfg.mode = mode;
    CHECK(double_threshold(fixed, tape.constant(Tensor<double>({1}, 0.2)), cfg).value() ==
          Tensor<double>({2, 3}, 0.5));
  }
}

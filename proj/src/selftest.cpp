// Compact property suite behind `ghn selftest`. The doctest suites under
// tests/ cover the same ground in more depth.

#include <cmath>
#include <cstring>
#include <functional>
#include <ostream>
#include <random>

#include "ghn/checkpoint.hpp"
#include "ghn/cli.hpp"
#include "ghn/ghd.hpp"
#include "ghn/layers.hpp"

namespace ghn {

namespace {

using Check = std::function<bool(std::mt19937_64&)>;

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

bool algebra(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    if (!close(ghd(a, b), ghd(b, a), 1e-12)) return false;
    if (!close(ghd(ghd(a, b), c), ghd(a, ghd(b, c)), 1e-9)) return false;
    if (ghd(a, 0.0) != a) return false;
    if (!close(ghd(0.5, a), 0.5, 1e-12)) return false;
    if (!close(ghd(1.0, a), 1.0 - a, 1e-12)) return false;
    if (std::abs(2 * a - 1) > 1e-3 && !close(ghd(a, ghd_inverse(a)), 0.0, 1e-9)) return false;
  }
  return true;
}

bool fuzziness_bounds(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng);
    const double f = fuzziness(a);
    if (f > 0.5 + 1e-12) return false;
    if ((a >= 0.0 && a <= 1.0) != (f >= 0.0)) return false;
  }
  return close(fuzziness(0.5), 0.5, 1e-15);
}

bool distributivity(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  std::uniform_int_distribution<int> size(1, 8), len(1, 16);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = size(rng), n = size(rng), l = len(rng);
    std::vector<std::vector<double>> xs(m, std::vector<double>(l)), ys(n, std::vector<double>(l));
    for (auto& v : xs) for (auto& e : v) e = u(rng);
    for (auto& v : ys) for (auto& e : v) e = u(rng);
    const auto xm = ensemble_mean(xs), ym = ensemble_mean(ys);
    if (!close(ghd_vec(xm, ym), mean_pairwise_ghd(xs, ys), 1e-9)) return false;
  }
  return true;
}

bool membership(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int i = 0; i < 1000; ++i) {
    const double p = u(rng);
    if (!close(membership_mu(membership_mu_inv(p)), p, 1e-9)) return false;
  }
  return close(membership_mu(0.5), 0.5, 1e-15);
}

Tensor<double> random_tensor(const Shape& s, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

bool dense_oracle(std::mt19937_64& rng) {
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 4, l = 1 + rng() % 12, f = 1 + rng() % 5;
    const auto x = random_tensor({n, l}, rng, 0.0, 1.0);
    const auto w = random_tensor({l, f}, rng, -1.0, 1.0);
    Tape<double> tape;
    const auto h = ghn_dense(tape.constant(x), tape.constant(w)).value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        std::vector<double> xi(l), wj(l);
        for (std::size_t k = 0; k < l; ++k) {
          xi[k] = x[i * l + k];
          wj[k] = w[k * f + j];
        }
        if (!close(h[i * f + j], ghd_vec(xi, wj), 1e-12)) return false;
      }
    }
  }
  return true;
}

bool conv_fixed_point(std::mt19937_64& rng) {
  const auto x = random_tensor({2, 6, 6, 3}, rng, -1.0, 2.0);
  Tape<double> tape;
  const auto h = ghn_conv2d(tape.constant(x), tape.constant(Tensor<double>({3, 3, 3, 4}, 0.5)),
                            1, Padding::same)
                     .value();
  for (double v : h.vec()) {
    if (!close(v, 0.5, 1e-12)) return false;
  }
  return true;
}

bool absorption(std::mt19937_64& rng) {
  const auto w = random_tensor({5, 3}, rng, -2.0, 2.0);
  Tape<double> tape;
  const auto h = ghn_dense(tape.constant(Tensor<double>({4, 5}, 0.5)), tape.constant(w));
  for (ThresholdMode mode : {ThresholdMode::off, ThresholdMode::hard, ThresholdMode::soft}) {
    ThresholdConfig cfg;
    cfg.mode = mode;
    cfg.granularity = Granularity::per_layer;
    const auto out = double_threshold(h, tape.constant(Tensor<double>({1}, 0.3)), cfg).value();
    for (double v : out.vec()) {
      if (!close(v, 0.5, 1e-12)) return false;
    }
  }
  return true;
}

bool dense_gradients(std::mt19937_64& rng) {
  Parameter<double> x("x", random_tensor({3, 6}, rng, 0.0, 1.0));
  Parameter<double> w("w", random_tensor({6, 4}, rng, -1.0, 1.0));
  const std::vector<int> labels = {0, 3, 1};
  auto f = [&](Tape<double>& t) {
    return ops::softmax_cross_entropy(ops::negate(ghn_dense(t.param(x), t.param(w))),
                                      std::span<const int>(labels));
  };
  std::vector<Parameter<double>*> ps = {&x, &w};
  return grad_check<double>(f, ps, 1e-6).max_rel_error < 1e-6;
}

bool checkpoint_roundtrip(std::mt19937_64& rng) {
  Checkpoint c;
  c.step = 42;
  c.config = "[train]\nsteps = 42\n";
  CheckpointEntry e{"fc1.weights", DType::f64, {2, 3}, {}};
  const auto t = random_tensor({2, 3}, rng, -1.0, 1.0);
  e.bytes.resize(6 * sizeof(double));
  std::memcpy(e.bytes.data(), t.vec().data(), e.bytes.size());
  c.entries.push_back(e);
  return deserialize(serialize(c)) == c;
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::vector<std::pair<const char*, Check>> checks = {
      {"hamming group axioms, fixed point, complement", algebra},
      {"fuzziness bounds and fuzzy region", fuzziness_bounds},
      {"ensemble distributivity", distributivity},
      {"membership round trip", membership},
      {"dense layer matches element-wise oracle", dense_oracle},
      {"conv layer with 0.5 kernel is constant 0.5", conv_fixed_point},
      {"0.5 inputs are absorbed in every threshold mode", absorption},
      {"dense layer + loss gradients match finite differences", dense_gradients},
      {"checkpoint serialize/deserialize round trip", checkpoint_roundtrip},
  };
  std::mt19937_64 rng(20170611);
  int failed = 0;
  for (const auto& [name, check] : checks) {
    bool ok = false;
    try {
      ok = check(rng);
    } catch (const std::exception& e) {
      out << "  (" << e.what() << ")\n";
    }
    out << (ok ? "PASS  " : "FAIL  ") << name << "\n";
    failed += !ok;
  }
  out << (checks.size() - failed) << "/" << checks.size() << " properties passed\n";
  return failed;
}

}  // namespace ghn

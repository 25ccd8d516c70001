#include "ghn/ghd.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace ghn {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw DomainError(std::string(what) + ": non-finite input");
  }
}

std::size_t grid_count(Range r, double step) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max)) {
    throw DomainError("surface_sample: range bounds must be finite");
  }
  if (r.max < r.min) {
    throw DomainError("surface_sample: empty range");
  }
  // A small slack keeps the upper end when (max - min) / step is integral up
  // to rounding.
  return static_cast<std::size_t>(std::floor((r.max - r.min) / step + 1e-9)) + 1;
}

}  // namespace

const char* to_string(Region r) {
  switch (r) {
    case Region::fuzzy: return "fuzzy";
    case Region::boundary: return "boundary";
    case Region::negative_confident: return "negative_confident";
    case Region::positive_confident: return "positive_confident";
  }
  return "?";
}

double ghd(double a, double b) {
  require_finite(a, "ghd");
  require_finite(b, "ghd");
  return a + b - 2.0 * a * b;
}

double ghd_inverse(double a) {
  require_finite(a, "ghd_inverse");
  const double denom = 2.0 * a - 1.0;
  if (std::abs(denom) <= kSingularTolerance) {
    throw DomainError("ghd_inverse: 0.5 is the singular element and has no finite inverse");
  }
  return a / denom;
}

double fuzziness(double a) {
  require_finite(a, "fuzziness");
  return 2.0 * a * (1.0 - a);
}

Region classify_region(double a) {
  require_finite(a, "classify_region");
  if (std::abs(a) <= kBoundaryTolerance || std::abs(a - 1.0) <= kBoundaryTolerance) {
    return Region::boundary;
  }
  if (a < 0.0) return Region::negative_confident;
  if (a > 1.0) return Region::positive_confident;
  return Region::fuzzy;
}

double ghd_vec(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DomainError("ghd_vec: length mismatch (" + std::to_string(x.size()) + " vs " +
                      std::to_string(y.size()) + ")");
  }
  if (x.empty()) throw DomainError("ghd_vec: vectors must be non-empty");
  double sx = 0.0, sy = 0.0, dot = 0.0;
  for (std::size_t l = 0; l < x.size(); ++l) {
    require_finite(x[l], "ghd_vec");
    require_finite(y[l], "ghd_vec");
    sx += x[l];
    sy += y[l];
    dot += x[l] * y[l];
  }
  const double len = static_cast<double>(x.size());
  return sx / len + sy / len - 2.0 * dot / len;
}

double mean_pairwise_ghd(const std::vector<std::vector<double>>& xs,
                         const std::vector<std::vector<double>>& ys) {
  if (xs.empty() || ys.empty()) throw DomainError("mean_pairwise_ghd: empty ensemble");
  double total = 0.0;
  for (const auto& x : xs) {
    for (const auto& y : ys) total += ghd_vec(x, y);
  }
  return total / static_cast<double>(xs.size() * ys.size());
}

std::vector<double> ensemble_mean(const std::vector<std::vector<double>>& xs) {
  if (xs.empty()) throw DomainError("ensemble_mean: empty ensemble");
  std::vector<double> mean(xs.front().size(), 0.0);
  for (const auto& x : xs) {
    if (x.size() != mean.size()) throw DomainError("ensemble_mean: length mismatch");
    for (std::size_t l = 0; l < x.size(); ++l) mean[l] += x[l];
  }
  for (auto& v : mean) v /= static_cast<double>(xs.size());
  return mean;
}

double membership_mu(double a) {
  require_finite(a, "membership_mu");
  return 1.0 / (1.0 + std::exp(0.5 - a));
}

double membership_mu_inv(double i) {
  require_finite(i, "membership_mu_inv");
  if (i <= 0.0 || i >= 1.0) {
    throw DomainError("membership_mu_inv: argument must lie strictly inside (0, 1)");
  }
  return -std::log(1.0 / i - 1.0) + 0.5;
}

double fuzzy_xor(double i, double j) {
  return membership_mu(ghd(membership_mu_inv(i), membership_mu_inv(j)));
}

SurfaceKind parse_surface_kind(const std::string& name) {
  if (name == "ghd") return SurfaceKind::ghd;
  if (name == "fuzziness") return SurfaceKind::fuzziness;
  if (name == "mu_of_ghd" || name == "mu") return SurfaceKind::mu_of_ghd;
  if (name == "dmu_da") return SurfaceKind::dmu_da;
  throw DomainError("unknown surface '" + name + "' (expected ghd, fuzziness, mu_of_ghd, dmu_da)");
}

std::vector<SurfacePoint> surface_sample(SurfaceKind which, Range a_range, Range b_range,
                                         double step) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw DomainError("surface_sample: step must be positive and finite");
  }
  const std::size_t na = grid_count(a_range, step);
  const std::size_t nb = grid_count(b_range, step);
  std::vector<SurfacePoint> out;
  out.reserve(na * nb);
  for (std::size_t i = 0; i < na; ++i) {
    const double a = a_range.min + static_cast<double>(i) * step;
    for (std::size_t j = 0; j < nb; ++j) {
      const double b = b_range.min + static_cast<double>(j) * step;
      const double h = ghd(a, b);
      double value = 0.0;
      switch (which) {
        case SurfaceKind::ghd: value = h; break;
        case SurfaceKind::fuzziness: value = fuzziness(h); break;
        case SurfaceKind::mu_of_ghd: value = membership_mu(h); break;
        case SurfaceKind::dmu_da: {
          const double m = membership_mu(h);
          value = m * (1.0 - m) * (1.0 - 2.0 * b);
          break;
        }
      }
      out.push_back({a, b, value});
    }
  }
  return out;
}

std::string surface_csv(const std::vector<SurfacePoint>& points) {
  std::string out = "a,b,value\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", p.a, p.b, p.value);
    out += buf;
  }
  return out;
}

}  // namespace ghn

#pragma once

// Generalized hamming distance algebra: a (+) b = a + b - 2ab over the reals.
// Everything here is a pure function and works in double precision.

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ghn {

/// Raised for non-finite inputs, values outside an operation's domain, and
/// the singular element 0.5 which has no finite inverse.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Region { fuzzy, boundary, negative_confident, positive_confident };

const char* to_string(Region r);

inline constexpr double kBoundaryTolerance = 1e-12;
inline constexpr double kSingularTolerance = 1e-12;

double ghd(double a, double b);

/// a / (2a - 1). Throws DomainError near a = 0.5.
double ghd_inverse(double a);

/// F(a) = a (+) a = 2a(1 - a); maximal (0.5) at a = 0.5.
double fuzziness(double a);

/// (0,1) exclusive is fuzzy, 0 and 1 (within 1e-12) are boundary, the rest
/// is negative or positive confident.
Region classify_region(double a);

/// Mean of element-wise GHD, computed as mean(x) + mean(y) - (2/L) x.y.
double ghd_vec(std::span<const double> x, std::span<const double> y);

/// Brute-force mean of ghd_vec over every (x^m, y^n) pair.
double mean_pairwise_ghd(const std::vector<std::vector<double>>& xs,
                         const std::vector<std::vector<double>>& ys);

/// Element-wise arithmetic mean of an ensemble of equal-length vectors.
std::vector<double> ensemble_mean(const std::vector<std::vector<double>>& xs);

/// Logistic membership centred on the fixed point: 1 / (1 + exp(0.5 - a)).
double membership_mu(double a);

/// -ln(1/i - 1) + 0.5, defined on the open interval (0, 1).
double membership_mu_inv(double i);

/// mu(ghd(mu^-1(i), mu^-1(j))).
double fuzzy_xor(double i, double j);

enum class SurfaceKind { ghd, fuzziness, mu_of_ghd, dmu_da };

SurfaceKind parse_surface_kind(const std::string& name);

struct SurfacePoint {
  double a;
  double b;
  double value;
};

struct Range {
  double min;
  double max;
};

/// Samples the chosen function on the grid a_range x b_range (inclusive,
/// spacing `step`). dmu_da is d/da mu(ghd(a, b)) = mu'(h) (1 - 2b).
std::vector<SurfacePoint> surface_sample(SurfaceKind which, Range a_range,
                                         Range b_range, double step);

/// CSV with header `a,b,value`, 12 significant digits.
std::string surface_csv(const std::vector<SurfacePoint>& points);

}  // namespace ghn

#pragma once

#include <span>
#include <vector>

namespace titekit {

/// Shape parameters of a Beta distribution. Effective counts are real-valued,
/// so non-integer shapes are the normal case, not an edge case.
struct BetaParams {
  double a = 1.0;
  double b = 1.0;
};

/// ln B(a, b). Throws std::domain_error unless a, b > 0.
double log_beta(double a, double b);

/// Regularized incomplete beta I_x(a, b), i.e. the Beta(a, b) CDF at x.
///
/// Evaluated with the modified Lentz continued fraction, switching to the
/// symmetric form I_x(a,b) = 1 - I_{1-x}(b,a) when x > (a+1)/(a+b+2).
/// Throws std::domain_error for x outside [0, 1] or non-positive shapes.
double beta_cdf(double x, BetaParams p);

/// Pr(lo < X <= hi) for X ~ Beta(a, b). Requires 0 <= lo < hi <= 1.
double interval_prob(double lo, double hi, BetaParams p);

/// One cell for isotonic regression: `events` out of `n` (both may be real).
struct BinomialCell {
  double events = 0.0;
  double n = 1.0;
};

/// Pool-adjacent-violators: the n-weighted least-squares non-decreasing fit
/// to events/n. Tied pools are left exactly equal.
std::vector<double> pava_isotonic(std::span<const BinomialCell> cells);

}  // namespace titekit

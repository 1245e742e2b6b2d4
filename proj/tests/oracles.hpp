#pragma once

// Reference computations used to check the library. Each one takes a route
// that shares no code with the implementation it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

/// Pr(Bin(n, x) >= k), summed directly.
inline double binomial_upper_tail(int n, int k, double x) {
  double total = 0.0;
  for (int i = k; i <= n; ++i) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
                            i * std::log(x) + (n - i) * std::log1p(-x);
    total += std::exp(log_term);
  }
  return total;
}

/// I_x(a, b) for integer shapes via the binomial-tail identity.
inline double beta_cdf_int(double x, int a, int b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return binomial_upper_tail(a + b - 1, a, x);
}

/// Composite Simpson rule with `panels` (even) intervals.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int panels = 20000) {
  const double h = (hi - lo) / panels;
  double s = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Isotonic fit by the max-min formula: fit_i = max_{s<=i} min_{t>=i} avg(s..t).
inline std::vector<double> isotonic_maxmin(const std::vector<double>& events, const std::vector<double>& n) {
  const std::size_t k = events.size();
  std::vector<double> fit(k);
  for (std::size_t i = 0; i < k; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s <= i; ++s) {
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t t = i; t < k; ++t) {
        double e = 0.0, m = 0.0;
        for (std::size_t r = s; r <= t; ++r) {
          e += events[r];
          m += n[r];
        }
        worst = std::min(worst, e / m);
      }
      best = std::max(best, worst);
    }
    fit[i] = best;
  }
  return fit;
}

/// Small seeded generator for hand-rolled property tests.
struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  bool coin(double p = 0.5) { return uniform() < p; }
  std::mt19937_64 rng;
};

}  // namespace oracle

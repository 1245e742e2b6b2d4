#include "titekit/exact_posterior.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <stdexcept>

namespace titekit {

ExactPosterior::ExactPosterior(PendingData data, double tolerance)
    : data_(std::move(data)), tolerance_(tolerance) {
  // The log-likelihood is concave on (0,1), so golden-section search finds the
  // peak used to keep the integrand in a representable range.
  constexpr double kGolden = 0.6180339887498949;
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double a = hi - kGolden * (hi - lo);
    const double b = lo + kGolden * (hi - lo);
    if (exact_log_likelihood(a, data_) < exact_log_likelihood(b, data_)) {
      lo = a;
    } else {
      hi = b;
    }
  }
  log_peak_ = exact_log_likelihood(0.5 * (lo + hi), data_);
  if (!std::isfinite(log_peak_)) log_peak_ = 0.0;
  total_ = integrate(0.0, 1.0);
  if (!(total_ > 0.0) || !std::isfinite(total_)) {
    throw std::runtime_error("exact posterior normalizer did not converge");
  }
}

double ExactPosterior::density_unnormalized(double p) const {
  const double ll = exact_log_likelihood(p, data_);
  return std::isfinite(ll) ? std::exp(ll - log_peak_) : 0.0;
}

double ExactPosterior::integrate(double lo, double hi) const {
  if (hi <= lo) return 0.0;
  double error = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [this](double p) { return density_unnormalized(p); }, lo, hi, 15, tolerance_, &error);
  if (!std::isfinite(value) || error > 1e-8 * std::max(1.0, std::fabs(value))) {
    throw std::runtime_error("exact posterior quadrature did not converge");
  }
  return value;
}

double ExactPosterior::mass(double lo, double hi) const {
  if (!(lo >= 0.0) || !(hi <= 1.0) || !(lo < hi)) {
    throw std::domain_error("ExactPosterior::mass: need 0 <= lo < hi <= 1");
  }
  return integrate(lo, hi) / total_;
}

double ExactPosterior::cdf(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("ExactPosterior::cdf: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  return integrate(0.0, x) / total_;
}

}  // namespace titekit

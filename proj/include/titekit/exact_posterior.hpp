#pragma once

#include "titekit/patient_data.hpp"

namespace titekit {

/// Posterior of a dose's toxicity probability under a Unif(0,1) prior and the
/// exact pending-data likelihood (no effective-count approximation). Masses are
/// computed by adaptive Gauss-Kronrod quadrature; this is the reference path
/// for measuring how much the closed-form Beta approximation changes decisions.
class ExactPosterior {
 public:
  explicit ExactPosterior(PendingData data, double tolerance = 1e-10);

  double mass(double lo, double hi) const;
  double cdf(double x) const;

 private:
  double integrate(double lo, double hi) const;
  double density_unnormalized(double p) const;

  PendingData data_;
  double tolerance_;
  double log_peak_ = 0.0;
  double total_ = 1.0;
};

}  // namespace titekit

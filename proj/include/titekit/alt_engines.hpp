#pragma once

#include <array>
#include <stdexcept>

#include "titekit/keyboard.hpp"

namespace titekit {

/// Under-dosing, target and over-dosing intervals of the mTPI rule.
struct MtpiIntervals {
  Key under;
  Key target;
  Key over;

  static MtpiIntervals from(const DesignParams& params);
};

/// Unit probability mass of each interval (mass / length) under Beta(ỹ+1, m̃+1).
std::array<double, 3> unit_probability_mass(const EffectiveData& data, const MtpiIntervals& iv);

/// Arg-max UPM; ties go to the target interval, then to the over-dose interval.
Action mtpi_core_action(const std::array<double, 3>& upm);

Decision mtpi_decision(const EffectiveData& data, const MtpiIntervals& iv,
                       const DesignParams& params, DosePosition pos);

struct BoinBoundaries {
  double lambda_e = 0.0;
  double lambda_d = 0.0;
};

/// Closed-form BOIN boundaries. Throws std::invalid_argument unless
/// 0 < phi1 < phi < phi2 < 1.
BoinBoundaries boin_boundaries(double phi, double phi1, double phi2);
inline BoinBoundaries boin_boundaries(double phi) {
  return boin_boundaries(phi, 0.6 * phi, 1.4 * phi);
}

/// Thrown when BOIN is asked to decide with no effective information.
struct InsufficientData : std::domain_error {
  using std::domain_error::domain_error;
};

/// Compares p̃ = ỹ / ñ with the boundaries. Throws InsufficientData if ñ = 0.
Action boin_core_action(const EffectiveData& data, const BoinBoundaries& b);

Decision boin_decision(const EffectiveData& data, const BoinBoundaries& b,
                       const DesignParams& params, DosePosition pos);

}  // namespace titekit

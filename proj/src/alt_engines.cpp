#include "titekit/alt_engines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "titekit/stats.hpp"

namespace titekit {

MtpiIntervals MtpiIntervals::from(const DesignParams& params) {
  params.validate();
  const double lo = params.phi - params.delta1;
  const double hi = params.phi + params.delta2;
  return {{0.0, lo}, {lo, hi}, {hi, 1.0}};
}

std::array<double, 3> unit_probability_mass(const EffectiveData& data, const MtpiIntervals& iv) {
  const BetaParams post{data.y + 1.0, data.m_eff + 1.0};
  std::array<double, 3> upm{};
  const Key* parts[3] = {&iv.under, &iv.target, &iv.over};
  for (int i = 0; i < 3; ++i) {
    upm[i] = interval_prob(parts[i]->lo, parts[i]->hi, post) / parts[i]->width();
  }
  return upm;
}

Action mtpi_core_action(const std::array<double, 3>& upm) {
  constexpr double kTie = 1e-12;
  const double best = std::max({upm[0], upm[1], upm[2]});
  if (upm[1] >= best - kTie) return Action::Stay;
  if (upm[2] >= best - kTie) return Action::DeEscalate;
  return Action::Escalate;
}

Decision mtpi_decision(const EffectiveData& data, const MtpiIntervals& iv,
                       const DesignParams& params, DosePosition pos) {
  const Action core = mtpi_core_action(unit_probability_mass(data, iv));
  return {apply_safety_rules(core, data, params, pos), std::nullopt};
}

BoinBoundaries boin_boundaries(double phi, double phi1, double phi2) {
  if (!(0.0 < phi1 && phi1 < phi && phi < phi2 && phi2 < 1.0)) {
    throw std::invalid_argument("BOIN boundaries need 0 < phi1 < phi < phi2 < 1");
  }
  BoinBoundaries b;
  b.lambda_e = std::log((1.0 - phi1) / (1.0 - phi)) /
               std::log(phi * (1.0 - phi1) / (phi1 * (1.0 - phi)));
  b.lambda_d = std::log((1.0 - phi) / (1.0 - phi2)) /
               std::log(phi2 * (1.0 - phi) / (phi * (1.0 - phi2)));
  return b;
}

Action boin_core_action(const EffectiveData& data, const BoinBoundaries& b) {
  const double n_eff = data.n_eff();
  if (!(n_eff > 0.0)) throw InsufficientData("BOIN decision needs positive effective sample size");
  const double rate = data.y / n_eff;
  if (rate <= b.lambda_e) return Action::Escalate;
  if (rate >= b.lambda_d) return Action::DeEscalate;
  return Action::Stay;
}

Decision boin_decision(const EffectiveData& data, const BoinBoundaries& b,
                       const DesignParams& params, DosePosition pos) {
  return {apply_safety_rules(boin_core_action(data, b), data, params, pos), std::nullopt};
}

}  // namespace titekit

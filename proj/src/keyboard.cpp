#include "titekit/keyboard.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "titekit/exact_posterior.hpp"
#include "titekit/stats.hpp"

namespace titekit {

namespace {
constexpr double kEdgeEps = 1e-9;
constexpr double kTieEps = 1e-12;
}  // namespace

void DesignParams::validate() const {
  if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("phi must lie in (0, 1)");
  if (!(delta1 > 0.0) || !(delta2 > 0.0)) {
    throw std::invalid_argument("delta1 and delta2 must be positive");
  }
  if (!(phi - delta1 > 0.0) || !(phi + delta2 < 1.0)) {
    throw std::invalid_argument("target key (phi - delta1, phi + delta2) must lie inside (0, 1)");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (cohort_size < 1) throw std::invalid_argument("cohort_size must be at least 1");
  if (max_n < 1) throw std::invalid_argument("max_n must be at least 1");
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
  if (min_complete_for_escalation < 0) {
    throw std::invalid_argument("min_complete_for_escalation must be non-negative");
  }
  if (doses < 1) throw std::invalid_argument("doses must be at least 1");
}

std::vector<std::string> DesignParams::warnings() const {
  std::vector<std::string> out;
  if (cohort_size > 0 && max_n % cohort_size != 0) {
    out.push_back("max_n is not a multiple of cohort_size; the last cohort is partial");
  }
  return out;
}

int action_code(Action a) {
  switch (a) {
    case Action::Escalate:
      return 1;
    case Action::Stay:
    case Action::SuspendAccrual:
      return 0;
    case Action::DeEscalate:
    case Action::EliminateAndDeEscalate:
    case Action::TerminateTrial:
      return -1;
  }
  return 0;
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Escalate:
      return "ESCALATE";
    case Action::Stay:
      return "STAY";
    case Action::DeEscalate:
      return "DE-ESCALATE";
    case Action::SuspendAccrual:
      return "SUSPEND ACCRUAL";
    case Action::EliminateAndDeEscalate:
      return "ELIMINATE AND DE-ESCALATE";
    case Action::TerminateTrial:
      return "TERMINATE TRIAL";
  }
  return "?";
}

std::optional<Action> action_from_string(std::string_view text) {
  for (Action a : {Action::Escalate, Action::Stay, Action::DeEscalate, Action::SuspendAccrual,
                   Action::EliminateAndDeEscalate, Action::TerminateTrial}) {
    if (to_string(a) == text) return a;
  }
  return std::nullopt;
}

std::string_view action_token(Action a) {
  switch (a) {
    case Action::Escalate:
      return "escalate";
    case Action::Stay:
      return "stay";
    case Action::DeEscalate:
      return "deescalate";
    case Action::SuspendAccrual:
      return "suspend";
    case Action::EliminateAndDeEscalate:
      return "eliminate";
    case Action::TerminateTrial:
      return "terminate";
  }
  return "?";
}

std::optional<Action> action_from_token(std::string_view token) {
  for (Action a : {Action::Escalate, Action::Stay, Action::DeEscalate, Action::SuspendAccrual,
                   Action::EliminateAndDeEscalate, Action::TerminateTrial}) {
    if (action_token(a) == token) return a;
  }
  return std::nullopt;
}

Keyboard::Keyboard(const DesignParams& params) {
  params.validate();
  const double width = params.delta1 + params.delta2;
  const double target_lo = params.phi - params.delta1;
  const double target_hi = params.phi + params.delta2;

  int left = 0;
  while (target_lo - (left + 1) * width >= -kEdgeEps) ++left;
  int right = 0;
  while (target_hi + (right + 1) * width <= 1.0 + kEdgeEps) ++right;

  for (int k = left; k >= 1; --k) {
    keys_.push_back({std::max(0.0, target_lo - k * width), target_lo - (k - 1) * width});
  }
  target_ = static_cast<int>(keys_.size());
  keys_.push_back({target_lo, target_hi});
  for (int k = 1; k <= right; ++k) {
    keys_.push_back({target_hi + (k - 1) * width, std::min(1.0, target_hi + k * width)});
  }
}

std::vector<double> key_masses(const EffectiveData& data, const Keyboard& kb) {
  const BetaParams post{data.y + 1.0, data.m_eff + 1.0};
  std::vector<double> masses;
  masses.reserve(kb.keys().size());
  for (const Key& key : kb.keys()) masses.push_back(interval_prob(key.lo, key.hi, post));
  return masses;
}

std::vector<double> exact_key_masses(const PendingData& data, const Keyboard& kb) {
  const ExactPosterior post(data);
  std::vector<double> masses;
  masses.reserve(kb.keys().size());
  for (const Key& key : kb.keys()) masses.push_back(post.mass(key.lo, key.hi));
  return masses;
}

int strongest_key(const std::vector<double>& masses, int target_index) {
  double best = -1.0;
  for (double m : masses) best = std::max(best, m);
  int chosen = -1;
  for (int k = 0; k < static_cast<int>(masses.size()); ++k) {
    if (masses[k] < best - kTieEps) continue;
    if (chosen < 0) {
      chosen = k;
      continue;
    }
    const int d_new = std::abs(k - target_index);
    const int d_old = std::abs(chosen - target_index);
    if (d_new < d_old || (d_new == d_old && k > chosen)) chosen = k;
  }
  return chosen;
}

int strongest_key(const EffectiveData& data, const Keyboard& kb) {
  return strongest_key(key_masses(data, kb), kb.target_index());
}

bool exceeds_elimination_cutoff(int n, int y, const DesignParams& params) {
  if (n <= 0) return false;
  const double tail = 1.0 - beta_cdf(params.phi, {y + 1.0, static_cast<double>(n - y) + 1.0});
  return tail > params.eta;
}

Action apply_safety_rules(Action core, const EffectiveData& data, const DesignParams& params,
                          DosePosition pos) {
  if (exceeds_elimination_cutoff(data.n, data.y, params)) {
    return pos.at_lowest ? Action::TerminateTrial : Action::EliminateAndDeEscalate;
  }
  Action action = core;
  if (action == Action::Escalate && pos.at_highest) action = Action::Stay;
  if (action == Action::DeEscalate && pos.at_lowest) action = Action::Stay;
  if (action == Action::Escalate && data.completed() < params.min_complete_for_escalation) {
    action = Action::SuspendAccrual;
  }
  return action;
}

Action keyboard_core_action(int strongest, const Keyboard& kb) {
  if (strongest < kb.target_index()) return Action::Escalate;
  if (strongest == kb.target_index()) return Action::Stay;
  return Action::DeEscalate;
}

Decision keyboard_decision(const EffectiveData& data, const DesignParams& params,
                           const Keyboard& kb, DosePosition pos) {
  const int ks = strongest_key(data, kb);
  return {apply_safety_rules(keyboard_core_action(ks, kb), data, params, pos), ks};
}

Decision keyboard_decision_exact(const PendingData& data, const DesignParams& params,
                                 const Keyboard& kb, DosePosition pos) {
  const int ks = strongest_key(exact_key_masses(data, kb), kb.target_index());
  return {apply_safety_rules(keyboard_core_action(ks, kb), summarize(data), params, pos), ks};
}

}  // namespace titekit

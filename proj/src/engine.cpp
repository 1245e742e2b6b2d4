#include "titekit/engine.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace titekit {

std::string_view to_string(EngineKind kind) {
  switch (kind) {
    case EngineKind::Keyboard:
      return "keyboard";
    case EngineKind::Mtpi:
      return "mtpi";
    case EngineKind::Boin:
      return "boin";
  }
  return "?";
}

EngineKind engine_from_string(std::string_view name) {
  if (name == "keyboard") return EngineKind::Keyboard;
  if (name == "mtpi") return EngineKind::Mtpi;
  if (name == "boin") return EngineKind::Boin;
  throw std::invalid_argument("unknown design '" + std::string(name) +
                              "' (expected keyboard, mtpi or boin)");
}

DoseFindingEngine::DoseFindingEngine(EngineKind kind, const DesignParams& params)
    : kind_(kind),
      params_(params),
      keyboard_(params),
      mtpi_(MtpiIntervals::from(params)),
      boin_(boin_boundaries(params.phi)) {}

Action DoseFindingEngine::core_action(const EffectiveData& data) const {
  switch (kind_) {
    case EngineKind::Keyboard:
      return keyboard_core_action(titekit::strongest_key(data, keyboard_), keyboard_);
    case EngineKind::Mtpi:
      return mtpi_core_action(unit_probability_mass(data, mtpi_));
    case EngineKind::Boin:
      if (!(data.n_eff() > 0.0)) return Action::Stay;
      return boin_core_action(data, boin_);
  }
  return Action::Stay;
}

std::optional<int> DoseFindingEngine::strongest_key(const EffectiveData& data) const {
  if (kind_ != EngineKind::Keyboard) return std::nullopt;
  return titekit::strongest_key(data, keyboard_);
}

Decision DoseFindingEngine::decide(const EffectiveData& data, DosePosition pos) const {
  return {apply_safety_rules(core_action(data), data, params_, pos), strongest_key(data)};
}

std::optional<int> lowest_eliminated(const std::vector<EffectiveData>& per_dose,
                                     const DesignParams& params) {
  for (std::size_t j = 0; j < per_dose.size(); ++j) {
    if (exceeds_elimination_cutoff(per_dose[j].n, per_dose[j].y, params)) {
      return static_cast<int>(j) + 1;
    }
  }
  return std::nullopt;
}

Recommendation recommend(const DoseFindingEngine& engine, const std::vector<EffectiveData>& per_dose,
                         int current_dose, int admissible_top) {
  return recommend(engine, per_dose, current_dose, admissible_top,
                   [&engine](const EffectiveData& d, DosePosition pos) { return engine.decide(d, pos); });
}

Recommendation recommend(const DoseFindingEngine& engine, const std::vector<EffectiveData>& per_dose,
                         int current_dose, int admissible_top, const DecideFn& decide) {
  const int doses = static_cast<int>(per_dose.size());
  if (current_dose < 1 || current_dose > doses) {
    throw std::out_of_range("current dose " + std::to_string(current_dose) + " outside 1.." +
                            std::to_string(doses));
  }
  Recommendation rec;
  rec.current_dose = current_dose;
  rec.admissible_top = std::min(admissible_top, doses);
  if (auto lowest = lowest_eliminated(per_dose, engine.params())) {
    rec.admissible_top = std::min(rec.admissible_top, *lowest - 1);
  }

  if (rec.admissible_top < 1) {
    rec.action = Action::TerminateTrial;
    rec.next_dose = 0;
    return rec;
  }
  if (current_dose > rec.admissible_top) {
    rec.action = Action::EliminateAndDeEscalate;
    rec.next_dose = rec.admissible_top;
    return rec;
  }

  const DosePosition pos{current_dose == 1, current_dose == rec.admissible_top};
  const Decision d = decide(per_dose[current_dose - 1], pos);
  rec.action = d.action;
  rec.strongest_key = d.strongest_key;
  switch (d.action) {
    case Action::Escalate:
      rec.next_dose = current_dose + 1;
      break;
    case Action::DeEscalate:
      rec.next_dose = current_dose - 1;
      break;
    default:
      rec.next_dose = current_dose;
  }
  return rec;
}

}  // namespace titekit

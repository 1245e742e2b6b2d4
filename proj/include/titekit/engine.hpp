#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "titekit/alt_engines.hpp"
#include "titekit/keyboard.hpp"

namespace titekit {

enum class EngineKind { Keyboard, Mtpi, Boin };

std::string_view to_string(EngineKind kind);
/// Accepts "keyboard", "mtpi", "boin". Throws std::invalid_argument otherwise.
EngineKind engine_from_string(std::string_view name);

/// One design bound to its parameters. Immutable, cheap to copy.
class DoseFindingEngine {
 public:
  DoseFindingEngine(EngineKind kind, const DesignParams& params);

  EngineKind kind() const { return kind_; }
  const DesignParams& params() const { return params_; }
  const Keyboard& keyboard() const { return keyboard_; }

  /// Raw escalate/stay/de-escalate signal before safety rules. BOIN with no
  /// effective information maps to Stay.
  Action core_action(const EffectiveData& data) const;
  std::optional<int> strongest_key(const EffectiveData& data) const;

  Decision decide(const EffectiveData& data, DosePosition pos) const;

 private:
  EngineKind kind_;
  DesignParams params_;
  Keyboard keyboard_;
  MtpiIntervals mtpi_;
  BoinBoundaries boin_;
};

/// Outcome of applying a design across the dose ladder at one clock.
struct Recommendation {
  Action action = Action::Stay;
  int current_dose = 1;  ///< 1-based
  int next_dose = 1;     ///< 0 when the trial terminates
  std::optional<int> strongest_key;
  /// Highest dose still admissible after this evaluation (0 = none).
  int admissible_top = 0;
};

/// Elimination scan over every dose (raw counts), then the design's decision
/// at the current dose. `admissible_top` is the highest admissible dose before
/// this evaluation; eliminations are never undone. `per_dose[j]` is dose j+1.
Recommendation recommend(const DoseFindingEngine& engine, const std::vector<EffectiveData>& per_dose,
                         int current_dose, int admissible_top);

/// Same, with the decision at the current dose supplied by `decide` (e.g. the
/// exact-likelihood keyboard rule).
using DecideFn = std::function<Decision(const EffectiveData&, DosePosition)>;
Recommendation recommend(const DoseFindingEngine& engine, const std::vector<EffectiveData>& per_dose,
                         int current_dose, int admissible_top, const DecideFn& decide);

/// Lowest dose whose raw counts meet the elimination rule, if any.
std::optional<int> lowest_eliminated(const std::vector<EffectiveData>& per_dose,
                                     const DesignParams& params);

}  // namespace titekit

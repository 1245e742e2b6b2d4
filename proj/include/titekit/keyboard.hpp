#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "titekit/patient_data.hpp"

namespace titekit {

struct DesignParams {
  double phi = 0.3;     ///< target DLT rate
  double delta1 = 0.05; ///< target key extends phi - delta1 ...
  double delta2 = 0.05; ///< ... to phi + delta2
  double tau = 3.0;     ///< assessment window (months)
  int max_n = 36;
  int cohort_size = 3;
  double eta = 0.95;  ///< elimination cutoff on Pr(p > phi | data)
  int min_complete_for_escalation = 2;
  int doses = 6;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
  /// Non-fatal configuration remarks (e.g. max_n not a multiple of cohort).
  std::vector<std::string> warnings() const;
};

enum class Action {
  Escalate,
  Stay,
  DeEscalate,
  SuspendAccrual,
  EliminateAndDeEscalate,
  TerminateTrial,
};

/// Direction code used by the monotonicity and coherence properties:
/// Escalate -> 1, Stay -> 0, de-escalating actions -> -1. Suspension and
/// termination have no direction and map to 0 and -1 respectively.
int action_code(Action a);
std::string_view to_string(Action a);
std::optional<Action> action_from_string(std::string_view text);
/// Lower-case machine token ("escalate", "deescalate", "suspend", ...).
std::string_view action_token(Action a);
std::optional<Action> action_from_token(std::string_view token);

struct Decision {
  Action action = Action::Stay;
  std::optional<int> strongest_key;  ///< 0-based key index, keyboard only
};

struct Key {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

/// Equal-width probability intervals tiling outward from the target key.
/// Edge remnants narrower than a full key are not keys.
class Keyboard {
 public:
  explicit Keyboard(const DesignParams& params);

  const std::vector<Key>& keys() const { return keys_; }
  int target_index() const { return target_; }
  int size() const { return static_cast<int>(keys_.size()); }

 private:
  std::vector<Key> keys_;
  int target_ = 0;
};

inline Keyboard build_keyboard(const DesignParams& params) { return Keyboard(params); }

/// Arg-max key under Beta(ỹ+1, m̃+1). Ties within 1e-12 go to the key nearest
/// the target, then to the higher index.
int strongest_key(const EffectiveData& data, const Keyboard& kb);
int strongest_key(const std::vector<double>& key_masses, int target_index);

/// Where the current dose sits among admissible doses.
struct DosePosition {
  bool at_lowest = false;
  bool at_highest = false;
};

/// Pr(p > phi | Beta(ỹ+1, n-ỹ+1)) > eta, on raw counts.
bool exceeds_elimination_cutoff(int n, int y, const DesignParams& params);

/// Wraps a design's raw escalate/stay/de-escalate signal with the shared
/// safety rules: elimination, boundary clamping, then suspension when fewer
/// than `min_complete_for_escalation` patients have completed assessment.
Action apply_safety_rules(Action core, const EffectiveData& data, const DesignParams& params,
                          DosePosition pos);

/// Escalate / Stay / DeEscalate from the strongest key alone.
Action keyboard_core_action(int strongest, const Keyboard& kb);

Decision keyboard_decision(const EffectiveData& data, const DesignParams& params,
                           const Keyboard& kb, DosePosition pos);

/// Same rule, but key masses come from the exact pending-data likelihood.
Decision keyboard_decision_exact(const PendingData& data, const DesignParams& params,
                                 const Keyboard& kb, DosePosition pos);

std::vector<double> key_masses(const EffectiveData& data, const Keyboard& kb);
std::vector<double> exact_key_masses(const PendingData& data, const Keyboard& kb);

}  // namespace titekit

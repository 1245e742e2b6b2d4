#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "titekit/conduct/event_log.hpp"

namespace titekit::conduct {

/// Trial state rebuilt from a log prefix. Patient times are design months:
/// entry measured from trial creation, DLT/completion from entry.
struct FoldedTrial {
  std::optional<TrialConfig> config;
  std::optional<Timestamp> created;
  std::optional<Timestamp> last_time;
  std::vector<PatientRecord> records;
  std::map<std::string, std::size_t> patient_index;
  int current_dose = 1;
  /// Highest admissible dose; eliminations found after any event are kept.
  int admissible_top = 0;
  bool closed = false;
  std::optional<int> closed_selection;
  std::size_t events_applied = 0;

  bool terminal(std::size_t i) const {
    return records[i].dlt_time.has_value() || records[i].completion_time.has_value();
  }
};

/// Outcome of validating an event against the state it would extend.
/// `status` follows HTTP: 200 accepted, 409 conflict, 422 invalid.
struct EventCheck {
  int status = 200;
  std::string message;
  std::vector<std::string> warnings;
};

EventCheck check_event(const FoldedTrial& trial, const TrialEvent& event);

/// Applies one event. Throws std::invalid_argument if check_event rejects it.
void apply_event(FoldedTrial& trial, const TrialEvent& event);

/// Folds the events stamped at or before `until` (all when absent). When the
/// log has no TrialCreated, `fallback` supplies the design and the first
/// event's time becomes the trial origin.
FoldedTrial fold(std::span<const TrialEvent> events, std::optional<Timestamp> until = {},
                 const std::optional<TrialConfig>& fallback = {});

struct TrialSnapshot {
  Timestamp at = 0;
  double clock_months = 0.0;
  std::vector<EffectiveData> per_dose;
  int current_dose = 1;
  int admissible_top = 0;
  int patients = 0;
  bool bootstrap = false;  ///< nothing enrolled yet: start at the lowest dose
  Recommendation recommendation;
  std::string justification;
  bool closed = false;
  std::optional<int> selected_dose;
};

/// Recommendation at clock `at` for a folded trial. Pure: nothing is recorded.
TrialSnapshot snapshot(const FoldedTrial& trial, Timestamp at);

Json to_json(const TrialSnapshot& snap, const TrialConfig& config);

}  // namespace titekit::conduct

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "titekit/conduct/snapshot.hpp"
#include "titekit/simulator.hpp"

namespace titekit::conduct {

struct ReplayStep {
  std::int64_t event_id = 0;  ///< event at which the decision was taken
  TrialSnapshot snapshot;     ///< state just before that event
  std::optional<Action> recorded_action;
  std::optional<int> recorded_dose;
  bool mismatch = false;
};

struct ReplayResult {
  std::vector<ReplayStep> steps;
  FoldedTrial final_state;
  std::optional<MtdSelection> selection;
};

/// Re-derives every decision in a log. Decision instants are the recorded
/// DoseDecisionRecorded events when there are any, otherwise each enrollment
/// that opens a new cohort. The MTD is selected from the raw counts at the end.
/// Throws std::invalid_argument (message names the event_id) on an event that
/// does not fit the state before it.
ReplayResult replay(std::span<const TrialEvent> events, const std::optional<TrialConfig>& fallback = {});

}  // namespace titekit::conduct

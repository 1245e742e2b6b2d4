#include "titekit/conduct/replay.hpp"

#include <algorithm>
#include <stdexcept>

namespace titekit::conduct {

ReplayResult replay(std::span<const TrialEvent> events, const std::optional<TrialConfig>& fallback) {
  ReplayResult out;
  FoldedTrial& t = out.final_state;
  if (events.empty()) return out;
  if (events.front().kind != EventKind::TrialCreated) {
    if (!fallback) throw std::invalid_argument("log has no TrialCreated event and no design was given");
    t = fold({}, {}, fallback);
    t.created = events.front().timestamp;
  }

  const bool recorded = std::any_of(events.begin(), events.end(), [](const TrialEvent& e) {
    return e.kind == EventKind::DoseDecisionRecorded;
  });

  for (const auto& e : events) {
    bool instant = false;
    if (recorded) {
      instant = e.kind == EventKind::DoseDecisionRecorded;
    } else if (e.kind == EventKind::PatientEnrolled && t.config) {
      const auto enrolled = t.records.size();
      instant = enrolled > 0 && enrolled % static_cast<std::size_t>(t.config->params.cohort_size) == 0;
    }
    if (instant && t.config) {
      ReplayStep step;
      step.event_id = e.event_id;
      step.snapshot = snapshot(t, e.timestamp);
      if (e.kind == EventKind::DoseDecisionRecorded) {
        step.recorded_action = e.action;
        step.recorded_dose = e.dose;
        const Recommendation& r = step.snapshot.recommendation;
        step.mismatch = *e.action != r.action || *e.dose != r.next_dose;
      }
      out.steps.push_back(std::move(step));
    }
    try {
      apply_event(t, e);
    } catch (const std::invalid_argument& ex) {
      throw std::invalid_argument("event_id " + std::to_string(e.event_id) + ": " + ex.what());
    }
  }

  if (t.config) {
    std::vector<DoseCount> counts(t.config->params.doses);
    for (const auto& r : t.records) {
      ++counts[r.dose_level - 1].n;
      if (r.dlt_time) ++counts[r.dose_level - 1].y;
    }
    out.selection = select_mtd(counts, t.admissible_top, t.config->params.phi);
  }
  return out;
}

}  // namespace titekit::conduct

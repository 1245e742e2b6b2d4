#include "titekit/conduct/snapshot.hpp"

#include <algorithm>
#include <stdexcept>

#include "titekit/decision_table.hpp"

namespace titekit::conduct {

namespace {

EventCheck reject(int status, std::string message) { return {status, std::move(message), {}}; }

// Raw per-dose counts as recorded so far, for the elimination scan.
std::vector<EffectiveData> recorded_counts(const FoldedTrial& t) {
  std::vector<EffectiveData> out(t.config->params.doses);
  for (const auto& r : t.records) {
    auto& d = out[r.dose_level - 1];
    ++d.n;
    if (r.dlt_time) ++d.y;
  }
  for (auto& d : out) d.m_eff = d.n - d.y;
  return out;
}

std::string dose_text(int dose) { return "dose " + std::to_string(dose); }

}  // namespace

EventCheck check_event(const FoldedTrial& t, const TrialEvent& e) {
  if (t.closed) return reject(409, "trial is closed");
  if (t.last_time && e.timestamp < *t.last_time) {
    return reject(409, "timestamp " + format_timestamp(e.timestamp) + " precedes the last event (" +
                           format_timestamp(*t.last_time) + ")");
  }
  if (e.kind == EventKind::TrialCreated) {
    if (t.config && t.events_applied > 0) return reject(422, "trial already created");
    if (!e.config) return reject(422, "TrialCreated needs a trial configuration");
    return {};
  }
  if (!t.config) return reject(422, "log must begin with TrialCreated");
  if (t.created && e.timestamp < *t.created) return reject(409, "event precedes trial creation");

  const DesignParams& p = t.config->params;
  EventCheck ok;
  auto find_patient = [&](const std::string& id) -> std::optional<std::size_t> {
    auto it = t.patient_index.find(id);
    if (it == t.patient_index.end()) return std::nullopt;
    return it->second;
  };

  switch (e.kind) {
    case EventKind::TrialCreated:
      break;
    case EventKind::PatientEnrolled: {
      if (!e.patient_id || !e.dose) return reject(422, "PatientEnrolled needs patient_id and dose");
      if (find_patient(*e.patient_id)) return reject(422, "patient " + *e.patient_id + " already enrolled");
      if (*e.dose < 1 || *e.dose > p.doses) {
        return reject(422, "dose " + std::to_string(*e.dose) + " outside 1.." + std::to_string(p.doses));
      }
      if (*e.dose > t.admissible_top) ok.warnings.push_back(dose_text(*e.dose) + " has been eliminated");
      const int enrolled = static_cast<int>(t.records.size());
      if (enrolled >= p.max_n) ok.warnings.push_back("maximum sample size already reached");
      if (enrolled > 0 && enrolled % p.cohort_size == 0) {
        const TrialSnapshot s = snapshot(t, e.timestamp);
        if (s.recommendation.action == Action::SuspendAccrual) {
          ok.warnings.push_back("enrollment while accrual is suspended");
        }
      }
      return ok;
    }
    case EventKind::DltObserved:
    case EventKind::AssessmentCompleted: {
      if (!e.patient_id) return reject(422, std::string(to_string(e.kind)) + " needs patient_id");
      const auto idx = find_patient(*e.patient_id);
      if (!idx) return reject(422, "unknown patient " + *e.patient_id);
      if (t.terminal(*idx)) return reject(422, "patient " + *e.patient_id + " already has an outcome");
      const double since_entry =
          months_between(*t.created, e.timestamp) - t.records[*idx].entry_time;
      if (e.kind == EventKind::DltObserved) {
        if (since_entry <= 0.0) return reject(422, "DLT must occur after enrollment");
        if (since_entry > p.tau + kClockEps) {
          return reject(422, "DLT for patient " + *e.patient_id + " falls outside the assessment window");
        }
      } else if (since_entry < p.tau - kClockEps) {
        ok.warnings.push_back("assessment recorded complete before the window elapsed");
      }
      return ok;
    }
    case EventKind::DoseDecisionRecorded:
      if (!e.action || !e.dose) return reject(422, "DoseDecisionRecorded needs action and dose");
      if (*e.dose < 1 || *e.dose > p.doses) {
        return reject(422, "dose " + std::to_string(*e.dose) + " outside 1.." + std::to_string(p.doses));
      }
      if (*e.dose > t.admissible_top) ok.warnings.push_back(dose_text(*e.dose) + " has been eliminated");
      return ok;
    case EventKind::TrialClosed:
      if (e.selected_dose && (*e.selected_dose < 1 || *e.selected_dose > p.doses)) {
        return reject(422, "selected dose outside the ladder");
      }
      return ok;
  }
  return ok;
}

void apply_event(FoldedTrial& t, const TrialEvent& e) {
  const EventCheck check = check_event(t, e);
  if (check.status != 200) throw std::invalid_argument(check.message);

  switch (e.kind) {
    case EventKind::TrialCreated:
      t.config = e.config;
      t.created = e.timestamp;
      t.admissible_top = t.config->params.doses;
      break;
    case EventKind::PatientEnrolled: {
      PatientRecord r;
      r.id = *e.patient_id;
      r.dose_level = *e.dose;
      r.entry_time = months_between(*t.created, e.timestamp);
      t.patient_index[r.id] = t.records.size();
      t.records.push_back(std::move(r));
      t.current_dose = *e.dose;
      break;
    }
    case EventKind::DltObserved:
    case EventKind::AssessmentCompleted: {
      PatientRecord& r = t.records[t.patient_index.at(*e.patient_id)];
      const double since_entry = months_between(*t.created, e.timestamp) - r.entry_time;
      if (e.kind == EventKind::DltObserved) {
        r.dlt_time = std::min(since_entry, t.config->params.tau);
      } else {
        r.completion_time = std::max(since_entry, 0.0);
      }
      break;
    }
    case EventKind::DoseDecisionRecorded:
      t.current_dose = *e.dose;
      break;
    case EventKind::TrialClosed:
      t.closed = true;
      t.closed_selection = e.selected_dose;
      break;
  }
  t.last_time = e.timestamp;
  ++t.events_applied;
  if (auto lowest = lowest_eliminated(recorded_counts(t), t.config->params)) {
    t.admissible_top = std::min(t.admissible_top, *lowest - 1);
  }
}

FoldedTrial fold(std::span<const TrialEvent> events, std::optional<Timestamp> until,
                 const std::optional<TrialConfig>& fallback) {
  FoldedTrial t;
  const bool has_created = !events.empty() && events.front().kind == EventKind::TrialCreated;
  if (!has_created && fallback) {
    t.config = fallback;
    t.admissible_top = fallback->params.doses;
    if (!events.empty()) t.created = events.front().timestamp;
  }
  for (const auto& e : events) {
    if (until && e.timestamp > *until) break;
    apply_event(t, e);
  }
  return t;
}

TrialSnapshot snapshot(const FoldedTrial& t, Timestamp at) {
  if (!t.config || !t.created) throw std::invalid_argument("snapshot needs a created trial");
  const TrialConfig& cfg = *t.config;
  const DoseFindingEngine engine(cfg.engine, cfg.params);

  TrialSnapshot s;
  s.at = at;
  s.clock_months = months_between(*t.created, at);
  s.current_dose = t.current_dose;
  s.admissible_top = t.admissible_top;
  s.patients = static_cast<int>(t.records.size());
  s.closed = t.closed;
  s.selected_dose = t.closed_selection;

  const auto ladder =
      observe_ladder(t.records, cfg.params.doses, s.clock_months, cfg.weights, cfg.params.tau);
  for (const auto& d : ladder) s.per_dose.push_back(summarize(d));

  if (t.records.empty()) {
    s.bootstrap = true;
    s.recommendation.action = Action::Stay;
    s.recommendation.current_dose = 1;
    s.recommendation.next_dose = 1;
    s.recommendation.admissible_top = t.admissible_top;
    s.justification = "no patients enrolled: start at dose 1";
    return s;
  }
  s.recommendation = recommend(engine, s.per_dose, t.current_dose, t.admissible_top);
  s.admissible_top = s.recommendation.admissible_top;
  if (s.recommendation.action == Action::TerminateTrial) {
    s.justification = "lowest dose meets the elimination rule";
  } else if (s.recommendation.action == Action::EliminateAndDeEscalate &&
             t.current_dose > s.admissible_top) {
    s.justification = dose_text(t.current_dose) + " or a lower dose meets the elimination rule";
  } else {
    s.justification = justification(engine, s.per_dose[t.current_dose - 1]);
  }
  return s;
}

Json to_json(const TrialSnapshot& s, const TrialConfig& cfg) {
  auto label = [&](int dose) -> Json {
    if (dose < 1 || dose > static_cast<int>(cfg.dose_labels.size())) return nullptr;
    return cfg.dose_labels[dose - 1];
  };
  Json per_dose = Json::array();
  for (std::size_t j = 0; j < s.per_dose.size(); ++j) {
    Json d = to_json(s.per_dose[j]);
    d["dose"] = static_cast<int>(j) + 1;
    d["label"] = label(static_cast<int>(j) + 1);
    d["eliminated"] = static_cast<int>(j) + 1 > s.admissible_top;
    per_dose.push_back(std::move(d));
  }
  const Recommendation& r = s.recommendation;
  Json rec{{"action", std::string(action_token(r.action))},
           {"action_text", std::string(to_string(r.action))},
           {"current_dose", r.current_dose},
           {"next_dose", r.next_dose == 0 ? Json(nullptr) : Json(r.next_dose)},
           {"next_dose_label", label(r.next_dose)},
           {"strongest_key", r.strongest_key ? Json(*r.strongest_key) : Json(nullptr)},
           {"justification", s.justification},
           {"bootstrap", s.bootstrap},
           {"advisory", true}};
  return {{"at", format_timestamp(s.at)},
          {"clock_months", s.clock_months},
          {"current_dose", s.current_dose},
          {"admissible_top", s.admissible_top},
          {"patients", s.patients},
          {"suspended", r.action == Action::SuspendAccrual},
          {"closed", s.closed},
          {"selected_dose", s.selected_dose ? Json(*s.selected_dose) : Json(nullptr)},
          {"per_dose", std::move(per_dose)},
          {"recommendation", std::move(rec)}};
}

}  // namespace titekit::conduct

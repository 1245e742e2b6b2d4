#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "titekit/conduct/timestamp.hpp"
#include "titekit/engine.hpp"
#include "titekit/json_io.hpp"

namespace titekit::conduct {

inline constexpr int kSchemaVersion = 1;

/// Design chosen when a trial is created.
struct TrialConfig {
  EngineKind engine = EngineKind::Keyboard;
  DesignParams params;
  WeightScheme weights = UniformWeight{};
  std::vector<std::string> dose_labels;
  std::optional<std::string> idempotency_key;
};

enum class EventKind {
  TrialCreated,
  PatientEnrolled,
  DltObserved,
  AssessmentCompleted,
  DoseDecisionRecorded,
  TrialClosed,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view name);

struct TrialEvent {
  std::int64_t event_id = 0;
  EventKind kind = EventKind::TrialCreated;
  Timestamp timestamp = 0;
  std::optional<TrialConfig> config;       ///< TrialCreated
  std::optional<std::string> patient_id;   ///< patient events
  std::optional<int> dose;                 ///< PatientEnrolled, DoseDecisionRecorded
  std::optional<Action> action;            ///< DoseDecisionRecorded
  std::optional<int> selected_dose;        ///< TrialClosed (absent: no MTD)
  std::optional<std::string> actor;        ///< who recorded it, if known
};

/// Thrown for malformed events. `line` is 1-based when parsing a log.
struct EventFormatError : std::invalid_argument {
  EventFormatError(const std::string& what, std::size_t line = 0)
      : std::invalid_argument(line ? "line " + std::to_string(line) + ": " + what : what),
        line(line) {}
  std::size_t line;
};

Json to_json(const TrialConfig& config);
/// Throws std::invalid_argument on invalid design parameters.
TrialConfig trial_config_from_json(const Json& j);

Json to_json(const TrialEvent& event);
/// With `require_id` false the event_id and version fields may be absent
/// (the shape clients POST).
TrialEvent event_from_json(const Json& j, bool require_id = true);

/// Parses NDJSON text. Blank lines are skipped. With `tolerate_torn_tail`, an
/// unterminated or unparsable final line is dropped instead of reported;
/// `valid_bytes` then receives the length of the intact prefix.
std::vector<TrialEvent> parse_ndjson(std::string_view text, bool tolerate_torn_tail = false,
                                     std::size_t* valid_bytes = nullptr);

/// Append-only NDJSON file, one event per line, fsync'd before append returns.
/// Not synchronized; callers serialize writes.
class EventLog {
 public:
  /// Loads an existing log. A torn final line (crash mid-write) is truncated
  /// away; corruption anywhere else throws EventFormatError.
  static EventLog open(const std::filesystem::path& path);
  /// Creates a new log; throws if the file already exists.
  static EventLog create(const std::filesystem::path& path);

  const std::vector<TrialEvent>& events() const { return events_; }
  const std::filesystem::path& path() const { return path_; }

  /// Assigns the next event_id, writes and syncs the line, then records it.
  const TrialEvent& append(TrialEvent event);

 private:
  explicit EventLog(std::filesystem::path path) : path_(std::move(path)) {}
  std::filesystem::path path_;
  std::vector<TrialEvent> events_;
};

}  // namespace titekit::conduct

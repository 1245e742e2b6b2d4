#include "titekit/conduct/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

namespace titekit::conduct {

namespace {

constexpr EventKind kAllKinds[] = {EventKind::TrialCreated,        EventKind::PatientEnrolled,
                                   EventKind::DltObserved,         EventKind::AssessmentCompleted,
                                   EventKind::DoseDecisionRecorded, EventKind::TrialClosed};

[[noreturn]] void fail(const std::string& what) { throw EventFormatError(what); }

const Json& need(const Json& j, const char* key) {
  if (!j.contains(key)) fail(std::string("missing field '") + key + "'");
  return j.at(key);
}

std::string need_string(const Json& j, const char* key) {
  const Json& v = need(j, key);
  if (!v.is_string() || v.get<std::string>().empty()) {
    fail(std::string("field '") + key + "' must be a non-empty string");
  }
  return v.get<std::string>();
}

int need_int(const Json& j, const char* key) {
  const Json& v = need(j, key);
  if (!v.is_number_integer()) fail(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::system_error(errno, std::generic_category(), "write " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
}

void sync_directory(const std::filesystem::path& dir) {
  const int fd = ::open(dir.empty() ? "." : dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::TrialCreated:
      return "TrialCreated";
    case EventKind::PatientEnrolled:
      return "PatientEnrolled";
    case EventKind::DltObserved:
      return "DltObserved";
    case EventKind::AssessmentCompleted:
      return "AssessmentCompleted";
    case EventKind::DoseDecisionRecorded:
      return "DoseDecisionRecorded";
    case EventKind::TrialClosed:
      return "TrialClosed";
  }
  return "?";
}

std::optional<EventKind> event_kind_from_string(std::string_view name) {
  for (EventKind k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

Json to_json(const TrialConfig& c) {
  Json j{{"engine", std::string(to_string(c.engine))},
         {"design", to_json(c.params)},
         {"weights", to_json(c.weights)},
         {"dose_labels", c.dose_labels}};
  if (c.idempotency_key) j["idempotency_key"] = *c.idempotency_key;
  return j;
}

TrialConfig trial_config_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("trial configuration must be a JSON object");
  static const std::set<std::string> allowed{"engine", "design", "weights", "dose_labels",
                                             "idempotency_key"};
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument("unknown field '" + key + "' in trial");
  }
  TrialConfig c;
  if (j.contains("engine")) {
    if (!j.at("engine").is_string()) throw std::invalid_argument("'engine' must be a string");
    c.engine = engine_from_string(j.at("engine").get<std::string>());
  }
  c.params = design_params_from_json(j.contains("design") ? j.at("design") : Json::object());
  if (j.contains("weights")) c.weights = weight_scheme_from_json(j.at("weights"));
  if (j.contains("dose_labels")) {
    const Json& labels = j.at("dose_labels");
    if (!labels.is_array()) throw std::invalid_argument("'dose_labels' must be an array of strings");
    for (const auto& l : labels) {
      if (!l.is_string()) throw std::invalid_argument("'dose_labels' must be an array of strings");
      c.dose_labels.push_back(l.get<std::string>());
    }
    if (static_cast<int>(c.dose_labels.size()) != c.params.doses) {
      if (!(j.contains("design") && j.at("design").contains("doses"))) {
        c.params.doses = static_cast<int>(c.dose_labels.size());
        c.params.validate();
      } else {
        throw std::invalid_argument("dose_labels has " + std::to_string(c.dose_labels.size()) +
                                    " entries but design.doses is " +
                                    std::to_string(c.params.doses));
      }
    }
  } else {
    for (int d = 1; d <= c.params.doses; ++d) c.dose_labels.push_back(std::to_string(d));
  }
  if (j.contains("idempotency_key")) {
    if (!j.at("idempotency_key").is_string()) {
      throw std::invalid_argument("'idempotency_key' must be a string");
    }
    c.idempotency_key = j.at("idempotency_key").get<std::string>();
  }
  return c;
}

Json to_json(const TrialEvent& e) {
  Json j{{"v", kSchemaVersion},
         {"event_id", e.event_id},
         {"kind", std::string(to_string(e.kind))},
         {"timestamp", format_timestamp(e.timestamp)}};
  if (e.config) j["trial"] = to_json(*e.config);
  if (e.patient_id) j["patient_id"] = *e.patient_id;
  if (e.dose) j["dose"] = *e.dose;
  if (e.action) j["action"] = std::string(action_token(*e.action));
  if (e.kind == EventKind::TrialClosed) {
    j["selected_dose"] = e.selected_dose ? Json(*e.selected_dose) : Json(nullptr);
  }
  if (e.actor) j["actor"] = *e.actor;
  return j;
}

TrialEvent event_from_json(const Json& j, bool require_id) {
  if (!j.is_object()) fail("event must be a JSON object");
  TrialEvent e;
  if (require_id || j.contains("v")) {
    const int v = need_int(j, "v");
    if (v != kSchemaVersion) fail("unsupported schema version " + std::to_string(v));
  }
  if (require_id || j.contains("event_id")) {
    const Json& id = need(j, "event_id");
    if (!id.is_number_integer() || id.get<std::int64_t>() < 1) {
      fail("field 'event_id' must be a positive integer");
    }
    e.event_id = id.get<std::int64_t>();
  }
  const std::string kind = need_string(j, "kind");
  const auto parsed_kind = event_kind_from_string(kind);
  if (!parsed_kind) fail("unknown event kind '" + kind + "'");
  e.kind = *parsed_kind;
  const std::string ts = need_string(j, "timestamp");
  const auto parsed_ts = parse_timestamp(ts);
  if (!parsed_ts) fail("malformed timestamp '" + ts + "'");
  e.timestamp = *parsed_ts;
  if (j.contains("actor")) {
    if (!j.at("actor").is_string()) fail("field 'actor' must be a string");
    e.actor = j.at("actor").get<std::string>();
  }

  std::set<std::string> allowed{"v", "event_id", "kind", "timestamp", "actor"};
  switch (e.kind) {
    case EventKind::TrialCreated:
      allowed.insert("trial");
      try {
        e.config = trial_config_from_json(need(j, "trial"));
      } catch (const EventFormatError&) {
        throw;
      } catch (const std::invalid_argument& ex) {
        fail(std::string("invalid trial configuration: ") + ex.what());
      }
      break;
    case EventKind::PatientEnrolled:
      allowed.insert({"patient_id", "dose"});
      e.patient_id = need_string(j, "patient_id");
      e.dose = need_int(j, "dose");
      break;
    case EventKind::DltObserved:
    case EventKind::AssessmentCompleted:
      allowed.insert("patient_id");
      e.patient_id = need_string(j, "patient_id");
      break;
    case EventKind::DoseDecisionRecorded: {
      allowed.insert({"action", "dose"});
      const std::string token = need_string(j, "action");
      e.action = action_from_token(token);
      if (!e.action) fail("unknown action '" + token + "'");
      e.dose = need_int(j, "dose");
      break;
    }
    case EventKind::TrialClosed:
      allowed.insert("selected_dose");
      if (j.contains("selected_dose") && !j.at("selected_dose").is_null()) {
        e.selected_dose = need_int(j, "selected_dose");
      }
      break;
  }
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail("unexpected field '" + key + "' for " + kind);
  }
  return e;
}

std::vector<TrialEvent> parse_ndjson(std::string_view text, bool tolerate_torn_tail,
                                     std::size_t* valid_bytes) {
  std::vector<TrialEvent> events;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::size_t good = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool terminated = nl != std::string_view::npos;
    const std::size_t end = terminated ? nl : text.size();
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    const bool last = !terminated || end + 1 >= text.size();
    const std::size_t next = terminated ? end + 1 : text.size();
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      pos = next;
      if (terminated) good = pos;
      continue;
    }
    try {
      if (!terminated && tolerate_torn_tail) throw EventFormatError("unterminated final line");
      const Json j = Json::parse(line);
      TrialEvent e = event_from_json(j, true);
      if (!events.empty() && e.event_id <= events.back().event_id) {
        throw EventFormatError("event_id " + std::to_string(e.event_id) + " is not increasing");
      }
      events.push_back(std::move(e));
      good = next;
    } catch (const std::exception& ex) {
      if (tolerate_torn_tail && last) break;
      const std::string what = dynamic_cast<const Json::exception*>(&ex)
                                   ? std::string("invalid JSON")
                                   : std::string(ex.what());
      throw EventFormatError(what, line_no);
    }
    pos = next;
  }
  if (valid_bytes) *valid_bytes = good;
  return events;
}

EventLog EventLog::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open event log " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::size_t valid = 0;
  EventLog log(path);
  log.events_ = parse_ndjson(text, true, &valid);
  if (valid < text.size()) std::filesystem::resize_file(path, valid);
  return log;
}

EventLog EventLog::create(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
  if (fd < 0) throw std::system_error(errno, std::generic_category(), "create " + path.string());
  ::fsync(fd);
  ::close(fd);
  sync_directory(path.parent_path());
  return EventLog(path);
}

const TrialEvent& EventLog::append(TrialEvent event) {
  event.event_id = events_.empty() ? 1 : events_.back().event_id + 1;
  const std::string line = to_json(event).dump() + "\n";
  const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND);
  if (fd < 0) throw std::system_error(errno, std::generic_category(), "open " + path_.string());
  try {
    write_all(fd, line, path_);
    if (::fsync(fd) != 0) throw std::system_error(errno, std::generic_category(), "fsync");
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  events_.push_back(std::move(event));
  return events_.back();
}

}  // namespace titekit::conduct

#include "titekit/conduct/service.hpp"

#include <random>
#include <set>
#include <sstream>

#include "httplib.h"
#include "titekit/decision_table.hpp"

namespace titekit::conduct {

namespace {

ServiceResponse json_response(int status, const Json& body) { return {status, body.dump(2) + "\n"}; }

ServiceResponse error(int status, const std::string& message) {
  return json_response(status, Json{{"error", message}});
}

std::optional<Json> parse_body(const std::string& body) {
  try {
    return Json::parse(body);
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

std::string new_trial_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  std::ostringstream out;
  out << std::hex << rng();
  std::string id = out.str();
  while (id.size() < 16) id.insert(id.begin(), '0');
  return "t" + id.substr(0, 12);
}

bool valid_trial_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_';
    if (!ok) return false;
  }
  return true;
}

Json snapshot_json(const std::string& trial_id, const FoldedTrial& folded, Timestamp at) {
  Json j = to_json(snapshot(folded, at), *folded.config);
  j["trial_id"] = trial_id;
  return j;
}

}  // namespace

ConductService::ConductService(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {
  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ndjson") continue;
    const std::string id = entry.path().stem().string();
    auto trial = std::make_shared<Trial>(EventLog::open(entry.path()));
    try {
      trial->folded = fold(trial->log.events());
    } catch (const std::invalid_argument& ex) {
      throw std::runtime_error("event log " + entry.path().string() + " is inconsistent: " + ex.what());
    }
    if (!trial->folded.config) {
      throw std::runtime_error("event log " + entry.path().string() + " has no TrialCreated event");
    }
    if (trial->folded.config->idempotency_key) idempotency_[*trial->folded.config->idempotency_key] = id;
    trials_.emplace(id, std::move(trial));
  }
}

ConductService::~ConductService() = default;

std::size_t ConductService::trial_count() const {
  std::lock_guard lock(registry_mutex_);
  return trials_.size();
}

std::shared_ptr<ConductService::Trial> ConductService::find(const std::string& trial_id) const {
  std::lock_guard lock(registry_mutex_);
  auto it = trials_.find(trial_id);
  return it == trials_.end() ? nullptr : it->second;
}

ServiceResponse ConductService::create_trial(const std::string& body,
                                             const std::optional<std::string>& idempotency_key,
                                             const std::optional<std::string>& actor) {
  auto parsed = parse_body(body);
  if (!parsed || !parsed->is_object()) return error(400, "request body must be a JSON object");
  Json j = *parsed;

  Timestamp created = now_utc();
  if (j.contains("created_at")) {
    const Json& c = j.at("created_at");
    const auto ts = c.is_string() ? parse_timestamp(c.get<std::string>()) : std::nullopt;
    if (!ts) return error(422, "'created_at' must be an ISO-8601 UTC timestamp");
    created = *ts;
    j.erase("created_at");
  }
  TrialConfig config;
  try {
    config = trial_config_from_json(j);
  } catch (const std::invalid_argument& ex) {
    return error(422, ex.what());
  }
  if (idempotency_key) config.idempotency_key = idempotency_key;

  std::lock_guard lock(registry_mutex_);
  if (config.idempotency_key) {
    auto it = idempotency_.find(*config.idempotency_key);
    if (it != idempotency_.end()) {
      return json_response(409, Json{{"error", "idempotency key already used"}, {"trial_id", it->second}});
    }
  }
  std::string id = new_trial_id();
  while (trials_.count(id) || std::filesystem::exists(dir_ / (id + ".ndjson"))) id = new_trial_id();

  TrialEvent event;
  event.kind = EventKind::TrialCreated;
  event.timestamp = created;
  event.config = config;
  event.actor = actor;

  auto trial = std::make_shared<Trial>(EventLog::create(dir_ / (id + ".ndjson")));
  const TrialEvent& stored = trial->log.append(event);
  apply_event(trial->folded, stored);
  trials_.emplace(id, trial);
  if (config.idempotency_key) idempotency_[*config.idempotency_key] = id;
  return json_response(201, Json{{"trial_id", id},
                                 {"event_id", stored.event_id},
                                 {"created_at", format_timestamp(created)},
                                 {"trial", to_json(config)}});
}

ServiceResponse ConductService::append_event(const std::string& trial_id, const std::string& body,
                                             const std::optional<std::string>& actor) {
  auto trial = find(trial_id);
  if (!trial) return error(404, "no trial '" + trial_id + "'");
  auto parsed = parse_body(body);
  if (!parsed || !parsed->is_object()) return error(400, "request body must be a JSON object");
  if (parsed->contains("event_id")) return error(422, "event_id is assigned by the server");

  TrialEvent event;
  try {
    event = event_from_json(*parsed, false);
  } catch (const std::invalid_argument& ex) {
    return error(422, ex.what());
  }
  if (event.kind == EventKind::TrialCreated) return error(422, "trials are created with POST /trials");
  if (actor && !event.actor) event.actor = actor;

  std::unique_lock lock(trial->mutex);
  const EventCheck check = check_event(trial->folded, event);
  if (check.status != 200) return error(check.status, check.message);
  const TrialEvent& stored = trial->log.append(event);
  apply_event(trial->folded, stored);
  return json_response(200, Json{{"event_id", stored.event_id}, {"warnings", check.warnings}});
}

ServiceResponse ConductService::recommendation(const std::string& trial_id,
                                               const std::optional<std::string>& at) const {
  auto trial = find(trial_id);
  if (!trial) return error(404, "no trial '" + trial_id + "'");
  Timestamp when = now_utc();
  if (at) {
    const auto ts = parse_timestamp(*at);
    if (!ts) return error(400, "malformed 'at' timestamp '" + *at + "'");
    when = *ts;
  }
  std::shared_lock lock(trial->mutex);
  if (when < *trial->folded.created) return error(400, "'at' precedes trial creation");
  const FoldedTrial prefix = fold(trial->log.events(), when);
  return json_response(200, snapshot_json(trial_id, prefix, when));
}

ServiceResponse ConductService::state(const std::string& trial_id) const {
  auto trial = find(trial_id);
  if (!trial) return error(404, "no trial '" + trial_id + "'");
  std::shared_lock lock(trial->mutex);
  const FoldedTrial& f = trial->folded;
  Json j = snapshot_json(trial_id, f, *f.last_time);
  j["events"] = f.events_applied;
  j["trial"] = to_json(*f.config);
  j["created_at"] = format_timestamp(*f.created);
  return json_response(200, j);
}

ServiceResponse ConductService::events(const std::string& trial_id) const {
  auto trial = find(trial_id);
  if (!trial) return error(404, "no trial '" + trial_id + "'");
  std::shared_lock lock(trial->mutex);
  Json out = Json::array();
  for (const auto& e : trial->log.events()) out.push_back(to_json(e));
  return json_response(200, out);
}

ServiceResponse ConductService::tables(const std::map<std::string, std::string>& query) const {
  static const std::set<std::string> known{"design", "phi",   "delta1", "delta2", "cohort",
                                           "max_n",  "eta",   "doses",  "format"};
  for (const auto& [key, value] : query) {
    if (!known.count(key)) return error(400, "unknown query parameter '" + key + "'");
  }
  try {
    auto number = [&](const char* key, double& out) {
      auto it = query.find(key);
      if (it == query.end()) return;
      std::size_t used = 0;
      out = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(std::string("bad value for ") + key);
    };
    auto integer = [&](const char* key, int& out) {
      auto it = query.find(key);
      if (it == query.end()) return;
      std::size_t used = 0;
      out = std::stoi(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(std::string("bad value for ") + key);
    };
    DesignParams p;
    number("phi", p.phi);
    number("delta1", p.delta1);
    number("delta2", p.delta2);
    number("eta", p.eta);
    integer("cohort", p.cohort_size);
    integer("max_n", p.max_n);
    integer("doses", p.doses);
    p.validate();
    if (p.max_n > 100) return error(400, "max_n above 100 is not supported for tables");
    const EngineKind design = engine_from_string(query.count("design") ? query.at("design") : "keyboard");
    const TableFormat format = table_format_from_string(query.count("format") ? query.at("format") : "json");
    const std::string text = render_table(generate_table(design, p), format);
    const char* type = format == TableFormat::Json  ? "application/json"
                       : format == TableFormat::Csv ? "text/csv"
                                                    : "text/markdown; charset=utf-8";
    return {200, text, type};
  } catch (const TableConsistencyError& ex) {
    return error(500, ex.what());
  } catch (const std::invalid_argument& ex) {
    return error(400, ex.what());
  } catch (const std::out_of_range&) {
    return error(400, "numeric query parameter out of range");
  }
}

ServiceResponse ConductService::health() const {
  return json_response(200, Json{{"status", "ok"}, {"trials", trial_count()}});
}

void install_routes(httplib::Server& server, ConductService& service) {
  auto send = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  auto header = [](const httplib::Request& req, const char* name) -> std::optional<std::string> {
    if (!req.has_header(name)) return std::nullopt;
    return req.get_header_value(name);
  };
  auto guarded = [send](auto handler) {
    return [send, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const std::exception& ex) {
        send(res, error(500, std::string("internal error: ") + ex.what()));
      }
    };
  };

  server.Post("/trials", guarded([&service, send, header](const httplib::Request& req, httplib::Response& res) {
    send(res, service.create_trial(req.body, header(req, "Idempotency-Key"), header(req, "X-Actor")));
  }));
  server.Post(R"(/trials/([^/]+)/events)",
              guarded([&service, send, header](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                if (!valid_trial_id(id)) return send(res, error(404, "no trial '" + id + "'"));
                send(res, service.append_event(id, req.body, header(req, "X-Actor")));
              }));
  server.Get(R"(/trials/([^/]+)/recommendation)",
             guarded([&service, send](const httplib::Request& req, httplib::Response& res) {
               std::optional<std::string> at;
               if (req.has_param("at")) at = req.get_param_value("at");
               send(res, service.recommendation(req.matches[1], at));
             }));
  server.Get(R"(/trials/([^/]+)/state)", guarded([&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.state(req.matches[1]));
             }));
  server.Get(R"(/trials/([^/]+)/events)",
             guarded([&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.events(req.matches[1]));
             }));
  server.Get("/tables", guarded([&service, send](const httplib::Request& req, httplib::Response& res) {
               std::map<std::string, std::string> query;
               for (const auto& [key, value] : req.params) query[key] = value;
               send(res, service.tables(query));
             }));
  server.Get("/health", guarded([&service, send](const httplib::Request&, httplib::Response& res) {
               send(res, service.health());
             }));
}

}  // namespace titekit::conduct

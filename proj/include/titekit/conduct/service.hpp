#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "titekit/conduct/event_log.hpp"
#include "titekit/conduct/snapshot.hpp"

namespace httplib {
class Server;
}

namespace titekit::conduct {

struct ServiceResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Trial registry backed by one NDJSON log per trial in `data_dir`. Writes to a
/// trial are serialized; reads fold the log and never touch the file.
class ConductService {
 public:
  /// Opens (creating if needed) `data_dir` and loads every *.ndjson log in it.
  explicit ConductService(std::filesystem::path data_dir);
  ~ConductService();

  ServiceResponse create_trial(const std::string& body, const std::optional<std::string>& idempotency_key,
                               const std::optional<std::string>& actor);
  ServiceResponse append_event(const std::string& trial_id, const std::string& body,
                               const std::optional<std::string>& actor);
  /// `at` defaults to the current wall clock.
  ServiceResponse recommendation(const std::string& trial_id, const std::optional<std::string>& at) const;
  ServiceResponse state(const std::string& trial_id) const;
  ServiceResponse events(const std::string& trial_id) const;
  ServiceResponse tables(const std::map<std::string, std::string>& query) const;
  ServiceResponse health() const;

  std::size_t trial_count() const;

 private:
  struct Trial {
    explicit Trial(EventLog l) : log(std::move(l)) {}
    mutable std::shared_mutex mutex;
    EventLog log;
    FoldedTrial folded;
  };

  std::shared_ptr<Trial> find(const std::string& trial_id) const;

  std::filesystem::path dir_;
  mutable std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Trial>> trials_;
  std::map<std::string, std::string> idempotency_;
};

/// Routes:
///   POST /trials                          create (Idempotency-Key honoured)
///   POST /trials/{id}/events              append one event
///   GET  /trials/{id}/recommendation?at=  advisory recommendation, read-only
///   GET  /trials/{id}/state               snapshot at the last event
///   GET  /trials/{id}/events              full log as a JSON array
///   GET  /tables?design&phi&...&format    decision table
///   GET  /health
/// The X-Actor header, when present, is stored on appended events.
void install_routes(httplib::Server& server, ConductService& service);

}  // namespace titekit::conduct

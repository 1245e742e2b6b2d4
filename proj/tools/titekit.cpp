// titekit: decision tables, single decisions, simulation, log replay and the
// conduct server. Exit codes: 0 success, 1 internal error, 2 user error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"
#include "titekit/alt_engines.hpp"
#include "titekit/conduct/replay.hpp"
#include "titekit/conduct/service.hpp"
#include "titekit/decision_table.hpp"
#include "titekit/json_io.hpp"
#include "titekit/simulator.hpp"
#include "titekit/stats.hpp"

namespace {

using namespace titekit;
namespace tc = titekit::conduct;

struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed(double x, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << x;
  return out.str();
}
std::string prob(double p) { return fixed(p, 4); }
std::string threshold(double t) { return fixed(t, 2); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& ex) {
    throw UserError(path + ": invalid JSON (" + ex.what() + ")");
  }
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UserError(std::string("bad number '") + item + "' in " + what);
    out.push_back(v);
  }
  return out;
}

/// Options shared by every command that builds a design.
struct DesignOptions {
  std::string design = "keyboard";
  DesignParams params;
  std::string weights = "uniform";

  void add(CLI::App* cmd, bool ladder) {
    cmd->add_option("--design", design, "keyboard, mtpi or boin")->capture_default_str();
    cmd->add_option("--phi", params.phi, "target toxicity probability")->capture_default_str();
    cmd->add_option("--delta1", params.delta1, "target key half-width below phi")->capture_default_str();
    cmd->add_option("--delta2", params.delta2, "target key half-width above phi")->capture_default_str();
    cmd->add_option("--eta", params.eta, "elimination posterior cutoff")->capture_default_str();
    cmd->add_option("--min-complete", params.min_complete_for_escalation,
                    "completed patients required before escalating")
        ->capture_default_str();
    if (ladder) {
      cmd->add_option("--cohort", params.cohort_size, "cohort size")->capture_default_str();
      cmd->add_option("--max-n", params.max_n, "maximum sample size")->capture_default_str();
      cmd->add_option("--doses", params.doses, "number of dose levels")->capture_default_str();
    }
  }

  EngineKind engine() const {
    try {
      return engine_from_string(design);
    } catch (const std::invalid_argument& ex) {
      throw UserError(ex.what());
    }
  }
};

void print_warnings(const DesignParams& p) {
  for (const auto& w : p.warnings()) std::cerr << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------

struct TableCmd {
  DesignOptions design;
  std::string format = "markdown";
  std::string output;

  void run() const {
    const DesignParams p = design.params;
    p.validate();
    print_warnings(p);
    if (p.max_n > 100) throw UserError("tables support max_n up to 100");
    const std::string text =
        render_table(generate_table(design.engine(), p), table_format_from_string(format));
    if (output.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(output, std::ios::binary);
      if (!out) throw UserError("cannot write " + output);
      out << text;
    }
  }
};

// ---------------------------------------------------------------------------

struct DecideCmd {
  DesignOptions design;
  int n = 0;
  int y = 0;
  std::optional<double> m_eff;
  int pending = 0;
  std::string followups;
  std::string dlt_times;
  double tau = 3.0;
  bool lowest = false;
  bool highest = false;
  bool exact = false;
  std::string format = "text";

  void run() const {
    DesignParams p = design.params;
    p.tau = tau;
    p.validate();
    print_warnings(p);
    const DoseFindingEngine engine(design.engine(), p);
    if (n < 0 || y < 0 || y > n) throw UserError("need 0 <= y <= n");

    PendingData pd{n, y, n - y, {}};
    EffectiveData data;
    if (!followups.empty()) {
      if (m_eff) throw UserError("give either --m-eff or --followups, not both");
      const WeightScheme scheme = weight_scheme_from_string(design.weights);
      const auto times = parse_list(dlt_times, "--dlt-times");
      const WeightModel w(scheme, tau, times);
      for (double u : parse_list(followups, "--followups")) {
        if (!(u >= 0.0 && u < tau)) throw UserError("pending follow-up times must lie in [0, tau)");
        pd.pending_weights.push_back(w(u));
      }
      pd.m = n - y - static_cast<int>(pd.pending_weights.size());
      if (pd.m < 0) throw UserError("more pending patients than non-DLT patients");
      data = summarize(pd);
    } else if (m_eff) {
      if (exact) throw UserError("--exact needs --followups");
      if (pending < 0 || pending > n - y) throw UserError("--pending must lie in [0, n - y]");
      if (!(*m_eff >= n - y - pending - 1e-12 && *m_eff <= n - y + 1e-12)) {
        throw UserError("--m-eff must lie in [n - y - pending, n - y]");
      }
      data = EffectiveData{n, y, pending, *m_eff};
    } else {
      if (exact) throw UserError("--exact needs --followups");
      if (pending != 0) throw UserError("--pending needs --m-eff (or give --followups)");
      data = complete_data(n, y);
    }

    const DosePosition pos{lowest, highest};
    Decision d;
    std::vector<double> masses;
    if (engine.kind() == EngineKind::Keyboard) {
      if (exact) {
        masses = exact_key_masses(pd, engine.keyboard());
        d = keyboard_decision_exact(pd, p, engine.keyboard(), pos);
      } else {
        masses = key_masses(data, engine.keyboard());
        d = engine.decide(data, pos);
      }
    } else {
      if (exact) throw UserError("--exact applies to the keyboard design only");
      d = engine.decide(data, pos);
    }
    const std::string why = justification(engine, data);
    const double tail = n > 0 ? 1.0 - beta_cdf(p.phi, {y + 1.0, n - y + 1.0}) : 0.0;
    const bool eliminate = exceeds_elimination_cutoff(n, y, p);

    if (format == "json") {
      Json j{{"design", std::string(to_string(engine.kind()))},
             {"data", to_json(data)},
             {"action", std::string(action_token(d.action))},
             {"action_text", std::string(to_string(d.action))},
             {"justification", why},
             {"elimination", {{"posterior_above_phi", tail}, {"eta", p.eta}, {"eliminate", eliminate}}},
             {"strongest_key", d.strongest_key ? Json(*d.strongest_key + 1) : Json(nullptr)}};
      if (!masses.empty()) {
        Json keys = Json::array();
        const auto& kb = engine.keyboard().keys();
        for (std::size_t k = 0; k < kb.size(); ++k) {
          keys.push_back({{"lo", kb[k].lo}, {"hi", kb[k].hi}, {"mass", masses[k]}});
        }
        j["keys"] = keys;
      }
      std::cout << j.dump(2) << "\n";
      return;
    }

    std::cout << "design: " << to_string(engine.kind()) << " (phi " << threshold(p.phi) << ")\n";
    std::cout << "data: n=" << data.n << " y=" << data.y << " pending=" << data.pending
              << " m_eff=" << prob(data.m_eff) << "\n";
    if (!masses.empty()) {
      const auto& kb = engine.keyboard().keys();
      for (std::size_t k = 0; k < kb.size(); ++k) {
        std::cout << "  key " << k + 1 << " (" << prob(kb[k].lo) << ", " << prob(kb[k].hi)
                  << "]: " << prob(masses[k])
                  << (static_cast<int>(k) == engine.keyboard().target_index() ? "  target" : "")
                  << (d.strongest_key && *d.strongest_key == static_cast<int>(k) ? "  strongest" : "")
                  << "\n";
      }
    } else if (engine.kind() == EngineKind::Mtpi) {
      const auto upm = unit_probability_mass(data, MtpiIntervals::from(p));
      std::cout << "UPM under/target/over: " << prob(upm[0]) << " " << prob(upm[1]) << " "
                << prob(upm[2]) << "\n";
    } else if (engine.kind() == EngineKind::Boin) {
      const auto b = boin_boundaries(p.phi);
      std::cout << "p_hat: " << (data.n_eff() > 0 ? prob(data.y / data.n_eff()) : std::string("n/a"))
                << "  boundaries: " << prob(b.lambda_e) << " / " << prob(b.lambda_d) << "\n";
    }
    std::cout << "elimination: Pr(p > " << threshold(p.phi) << " | n, y) = " << prob(tail)
              << (eliminate ? " > " : " <= ") << threshold(p.eta) << "\n";
    std::cout << "decision: " << to_string(d.action) << "\n";
    std::cout << "table cell: " << why << "\n";
  }
};

// ---------------------------------------------------------------------------

struct SimulateCmd {
  DesignOptions design;
  std::string scenario_file;
  std::string tox;
  std::string accrual;
  int reps = 1000;
  std::uint64_t seed = 20240601;
  unsigned threads = 0;
  bool exact = false;
  bool wait_complete = false;
  std::string format = "text";

  void run() const {
    Scenario sc;
    if (!scenario_file.empty()) {
      try {
        sc = scenario_from_json(read_json_file(scenario_file));
      } catch (const std::invalid_argument& ex) {
        throw UserError(scenario_file + ": " + ex.what());
      }
    } else if (!tox.empty()) {
      sc.tox_probs = parse_list(tox, "--tox");
    } else {
      throw UserError("give --scenario or --tox");
    }
    if (!accrual.empty()) sc.accrual = accrual_from_string(accrual);
    sc.validate();
    if (reps < 1) throw UserError("--reps must be positive");

    std::uint64_t master = seed;
    if (const char* env = std::getenv("TITEKIT_SEED")) {
      try {
        master = std::stoull(env);
      } catch (const std::exception&) {
        throw UserError("TITEKIT_SEED must be an unsigned integer");
      }
    }

    TrialDesign d;
    d.engine = design.engine();
    d.params = design.params;
    d.params.doses = sc.doses();
    d.params.tau = sc.tau;
    d.params.max_n = sc.max_n;
    d.params.cohort_size = sc.cohort_size;
    d.weights = weight_scheme_from_string(design.weights);
    d.exact_likelihood = exact;
    d.wait_for_complete = wait_complete;
    print_warnings(d.params);

    const OperatingCharacteristics oc = run_oc(sc, d, reps, master, threads);
    if (format == "json") {
      Json j = to_json(oc);
      j["scenario"] = to_json(sc);
      j["design"] = {{"engine", std::string(to_string(d.engine))},
                     {"params", to_json(d.params)},
                     {"weights", to_json(d.weights)},
                     {"exact_likelihood", d.exact_likelihood},
                     {"wait_for_complete", d.wait_for_complete}};
      std::cout << j.dump(2) << "\n";
      return;
    }
    if (format == "csv") {
      std::cout << "metric";
      for (int j = 1; j <= sc.doses(); ++j) std::cout << ",dose" << j;
      std::cout << "\n";
      auto row = [&](const char* name, const std::vector<double>& v, int digits) {
        std::cout << name;
        for (double x : v) std::cout << "," << fixed(x, digits);
        std::cout << "\n";
      };
      row("tox_prob", sc.tox_probs, 4);
      row("selection_pct", oc.selection_pct, 2);
      row("allocation_pct", oc.allocation_pct, 2);
      row("dlt_rate", oc.dlt_rate, 4);
      std::cout << "mean_duration," << fixed(oc.mean_duration, 2) << "\n";
      std::cout << "stop_pct," << fixed(oc.stop_pct, 2) << "\n";
      std::cout << "poor_allocation_pct," << fixed(oc.poor_allocation_pct, 2) << "\n";
      std::cout << "overdose_pct," << fixed(oc.overdose_pct, 2) << "\n";
      return;
    }
    std::cout << "design " << to_string(d.engine) << ", " << reps << " replicates, seed " << master
              << ", " << to_string(sc.accrual) << " accrual\n";
    auto row = [&](const char* name, const std::vector<double>& v, int digits) {
      std::cout << std::left << std::setw(16) << name << std::right;
      for (double x : v) std::cout << std::setw(9) << fixed(x, digits);
      std::cout << "\n";
    };
    std::cout << std::left << std::setw(16) << "dose" << std::right;
    for (int j = 1; j <= sc.doses(); ++j) std::cout << std::setw(9) << (j == oc.true_mtd ? "*" : "") + std::to_string(j);
    std::cout << "\n";
    row("tox prob", sc.tox_probs, 4);
    row("selection %", oc.selection_pct, 2);
    row("allocation %", oc.allocation_pct, 2);
    row("DLT rate", oc.dlt_rate, 4);
    std::cout << "mean duration    " << fixed(oc.mean_duration, 2) << " months\n";
    std::cout << "early stop %     " << fixed(oc.stop_pct, 2) << "\n";
    std::cout << "poor allocation% " << fixed(oc.poor_allocation_pct, 2) << "\n";
    std::cout << "overdose %       " << fixed(oc.overdose_pct, 2) << "\n";
  }
};

// ---------------------------------------------------------------------------

struct ReplayCmd {
  DesignOptions design;
  std::string log_file;
  std::string format = "text";

  int run() const {
    std::vector<tc::TrialEvent> events;
    try {
      events = tc::parse_ndjson(read_file(log_file));
    } catch (const tc::EventFormatError& ex) {
      throw UserError(log_file + ": " + ex.what());
    }
    std::optional<tc::TrialConfig> fallback;
    if (events.empty() || events.front().kind != tc::EventKind::TrialCreated) {
      tc::TrialConfig c;
      c.engine = design.engine();
      c.params = design.params;
      c.weights = weight_scheme_from_string(design.weights);
      for (int d = 1; d <= c.params.doses; ++d) c.dose_labels.push_back(std::to_string(d));
      fallback = c;
    }
    tc::ReplayResult r;
    try {
      r = tc::replay(events, fallback);
    } catch (const std::invalid_argument& ex) {
      throw UserError(log_file + ": " + ex.what());
    }

    int mismatches = 0;
    for (const auto& s : r.steps) mismatches += s.mismatch ? 1 : 0;

    if (format == "json") {
      Json steps = Json::array();
      for (const auto& s : r.steps) {
        Json j = tc::to_json(s.snapshot, *r.final_state.config);
        j["event_id"] = s.event_id;
        j["recorded_action"] = s.recorded_action ? Json(std::string(action_token(*s.recorded_action))) : Json(nullptr);
        j["recorded_dose"] = s.recorded_dose ? Json(*s.recorded_dose) : Json(nullptr);
        j["mismatch"] = s.mismatch;
        steps.push_back(std::move(j));
      }
      Json out{{"steps", steps}, {"mismatches", mismatches}};
      out["selected_dose"] = r.selection ? Json(r.selection->dose) : Json(nullptr);
      out["estimate"] = r.selection ? Json(r.selection->estimate) : Json(nullptr);
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (r.steps.empty()) {
      std::cout << "no decisions\n";
    }
    for (const auto& s : r.steps) {
      const auto& snap = s.snapshot;
      const auto& cur = snap.per_dose[snap.current_dose - 1];
      const auto& rec = snap.recommendation;
      std::cout << tc::format_timestamp(snap.at) << "  t=" << threshold(snap.clock_months) << "  dose "
                << snap.current_dose << "  (n=" << cur.n << " y=" << cur.y << " c=" << cur.pending
                << " m=" << threshold(cur.m_eff) << ")  " << to_string(rec.action);
      if (rec.next_dose > 0 && rec.next_dose != snap.current_dose) std::cout << " -> dose " << rec.next_dose;
      if (s.mismatch) {
        std::cout << "  MISMATCH: recorded " << to_string(*s.recorded_action) << " dose " << *s.recorded_dose;
      }
      std::cout << "\n";
    }
    if (!events.empty()) {
      if (r.selection) {
        std::cout << "SELECT MTD: dose " << r.selection->dose << " (estimate " << prob(r.selection->estimate)
                  << ")\n";
      } else {
        std::cout << "SELECT MTD: none\n";
      }
    }
    if (mismatches > 0) std::cout << mismatches << " recorded decision(s) differ from the design\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

struct ServeCmd {
  std::string host = "127.0.0.1";
  int port = 8420;
  std::string data_dir = "./trials";

  void run() const {
    tc::ConductService service(data_dir);
    httplib::Server server;
    tc::install_routes(server, service);
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cerr << "titekit serving " << service.trial_count() << " trial(s) from " << data_dir << " on http://"
              << host << ":" << port << "\n";
    if (!server.listen(host, port)) throw UserError("cannot listen on " + host + ":" + std::to_string(port));
    g_server = nullptr;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"titekit: time-to-event dose-finding designs"};
  app.require_subcommand(1);

  TableCmd table;
  auto* table_cmd = app.add_subcommand("table", "print the decision table of a design");
  table.design.add(table_cmd, true);
  table_cmd->add_option("--format", table.format, "markdown, csv or json")->capture_default_str();
  table_cmd->add_option("-o,--output", table.output, "write to a file instead of stdout");

  DecideCmd decide;
  auto* decide_cmd = app.add_subcommand("decide", "one decision at the current dose");
  decide.design.add(decide_cmd, false);
  decide_cmd->add_option("--n", decide.n, "patients treated at the dose")->required();
  decide_cmd->add_option("--y", decide.y, "DLTs observed at the dose")->required();
  decide_cmd->add_option("--m-eff", decide.m_eff, "effective number of non-DLT patients");
  decide_cmd->add_option("--pending", decide.pending, "pending patients (with --m-eff)");
  decide_cmd->add_option("--followups", decide.followups,
                         "comma-separated follow-up times (months) of pending patients");
  decide_cmd->add_option("--dlt-times", decide.dlt_times,
                         "comma-separated observed DLT times, for adaptive weights");
  decide_cmd->add_option("--weights", decide.design.weights, "uniform, piecewise or adaptive")
      ->capture_default_str();
  decide_cmd->add_option("--tau", decide.tau, "assessment window (months)")->capture_default_str();
  decide_cmd->add_flag("--lowest", decide.lowest, "current dose is the lowest admissible");
  decide_cmd->add_flag("--highest", decide.highest, "current dose is the highest admissible");
  decide_cmd->add_flag("--exact", decide.exact, "keyboard: use the exact pending-data likelihood");
  decide_cmd->add_option("--format", decide.format, "text or json")->capture_default_str();

  SimulateCmd simulate;
  auto* sim_cmd = app.add_subcommand("simulate", "operating characteristics by simulation");
  simulate.design.add(sim_cmd, false);
  sim_cmd->add_option("--scenario", simulate.scenario_file, "scenario JSON file");
  sim_cmd->add_option("--tox", simulate.tox, "comma-separated true toxicity probabilities");
  sim_cmd->add_option("--weights", simulate.design.weights, "uniform, piecewise or adaptive")
      ->capture_default_str();
  sim_cmd->add_option("--accrual", simulate.accrual, "deterministic or exponential");
  sim_cmd->add_option("--reps", simulate.reps, "replicates")->capture_default_str();
  sim_cmd->add_option("--seed", simulate.seed, "master seed (TITEKIT_SEED overrides)")->capture_default_str();
  sim_cmd->add_option("--threads", simulate.threads, "worker threads (0 = all cores)");
  sim_cmd->add_flag("--exact", simulate.exact, "keyboard: exact pending-data likelihood");
  sim_cmd->add_flag("--wait-complete", simulate.wait_complete, "wait for complete data before deciding");
  sim_cmd->add_option("--format", simulate.format, "text, csv or json")->capture_default_str();

  ReplayCmd replay;
  auto* replay_cmd = app.add_subcommand("replay", "re-derive the decisions of an NDJSON event log");
  replay_cmd->add_option("log", replay.log_file, "event log")->required();
  replay.design.add(replay_cmd, true);
  replay_cmd->add_option("--weights", replay.design.weights, "used when the log has no TrialCreated")
      ->capture_default_str();
  replay_cmd->add_option("--format", replay.format, "text or json")->capture_default_str();

  ServeCmd serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the trial conduct HTTP service");
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port)->capture_default_str();
  serve_cmd->add_option("--data-dir", serve.data_dir)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*table_cmd) table.run();
    if (*decide_cmd) decide.run();
    if (*sim_cmd) simulate.run();
    if (*replay_cmd) return replay.run();
    if (*serve_cmd) serve.run();
    return 0;
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

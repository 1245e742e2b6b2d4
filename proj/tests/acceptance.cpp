// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "titekit/conduct/replay.hpp"
#include "titekit/decision_table.hpp"
#include "titekit/simulator.hpp"
#include "titekit/stats.hpp"

using namespace titekit;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int failures = 0;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void report(const char* name, bool pass, double seconds, double limit, const std::string& detail) {
  const bool ok = pass && seconds < limit;
  if (!ok) ++failures;
  std::printf("%s  %-28s %7.2fs (limit %gs)  %s\n", ok ? "PASS" : "FAIL", name, seconds, limit,
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// --- Decision table ------------------------------------------------------

// A region is an action up to an upper m̃ threshold (kInf for the last one).
// 'E' escalate, 'S' stay, 'D' de-escalate, 'U' suspend, 'X' eliminate.
struct Region {
  char action;
  double upper;
};

struct ReferenceRow {
  int n, y, c_lo, c_hi;
  std::vector<Region> regions;
};

// Reference rows for phi 0.3, cohort 3, up to 12 patients. Three cells are corrected for
// typesetting slips: (6,1,4-5) stay reads "1.88 < m̃ > 3.07", (9,1,7-8) escalation
// reads "m̃ ≤ 3.07" with stay bounded by 3.08, and (9,2,0) reads Stay although
// complete data 2/9 lies below every key boundary of the neighbours.
const std::vector<ReferenceRow> kReference{
    {3, 0, 0, 1, {{'E', kInf}}},
    {3, 0, 2, 3, {{'U', kInf}}},
    {3, 1, 0, 0, {{'S', kInf}}},
    {3, 1, 1, 2, {{'D', 1.88}, {'S', kInf}}},
    {3, 2, 0, 1, {{'D', kInf}}},
    {3, 3, 0, 0, {{'X', kInf}}},
    {6, 0, 0, 6, {{'E', kInf}}},
    {6, 1, 0, 1, {{'E', kInf}}},
    {6, 1, 2, 3, {{'S', 3.07}, {'E', kInf}}},
    {6, 1, 4, 5, {{'D', 1.88}, {'S', 3.07}, {'E', kInf}}},
    {6, 2, 0, 0, {{'S', kInf}}},
    {6, 2, 1, 4, {{'D', 3.75}, {'S', kInf}}},
    {6, 3, 0, 3, {{'D', kInf}}},
    {6, 4, 0, 2, {{'X', kInf}}},
    {9, 0, 0, 9, {{'E', kInf}}},
    {9, 1, 0, 4, {{'E', kInf}}},
    {9, 1, 5, 6, {{'S', 3.07}, {'E', kInf}}},
    {9, 1, 7, 8, {{'D', 1.88}, {'S', 3.07}, {'E', kInf}}},
    {9, 2, 0, 0, {{'E', kInf}}},
    {9, 2, 1, 3, {{'S', 6.15}, {'E', kInf}}},
    {9, 2, 4, 7, {{'D', 3.75}, {'S', 6.15}, {'E', kInf}}},
    {9, 3, 0, 0, {{'S', kInf}}},
    {9, 3, 1, 6, {{'D', 5.63}, {'S', kInf}}},
    {9, 4, 0, 5, {{'D', kInf}}},
    {9, 5, 0, 4, {{'X', kInf}}},
    {12, 0, 0, 12, {{'E', kInf}}},
    {12, 1, 0, 7, {{'E', kInf}}},
    {12, 1, 8, 9, {{'S', 3.07}, {'E', kInf}}},
    {12, 1, 10, 11, {{'D', 1.88}, {'S', 3.07}, {'E', kInf}}},
    {12, 2, 0, 3, {{'E', kInf}}},
    {12, 2, 4, 6, {{'S', 6.15}, {'E', kInf}}},
    {12, 2, 7, 10, {{'D', 3.75}, {'S', 6.15}, {'E', kInf}}},
    {12, 3, 0, 3, {{'S', kInf}}},
    {12, 3, 4, 9, {{'D', 5.63}, {'S', kInf}}},
    {12, 4, 0, 0, {{'S', kInf}}},
    {12, 4, 1, 8, {{'D', 7.50}, {'S', kInf}}},
    {12, 5, 0, 7, {{'D', kInf}}},
    {12, 7, 0, 5, {{'X', kInf}}},
};

char action_letter(Action a) {
  switch (a) {
    case Action::Escalate: return 'E';
    case Action::Stay: return 'S';
    case Action::DeEscalate: return 'D';
    case Action::SuspendAccrual: return 'U';
    case Action::EliminateAndDeEscalate: return 'X';
    case Action::TerminateTrial: return 'T';
  }
  return '?';
}

void check_table() {
  Stopwatch sw;
  DesignParams p;
  p.max_n = 12;
  const DecisionTable t = generate_table(EngineKind::Keyboard, p);
  const double secs = sw.seconds();

  int mismatches = 0;
  double worst = 0.0;
  std::string first_problem;
  auto problem = [&](const ReferenceRow& e, const std::string& why) {
    ++mismatches;
    if (first_problem.empty()) {
      first_problem = "(" + std::to_string(e.n) + "," + std::to_string(e.y) + "," + std::to_string(e.c_lo) +
                      "-" + std::to_string(e.c_hi) + "): " + why;
    }
  };
  if (t.rows.size() != kReference.size()) {
    problem(kReference.front(), "row count " + std::to_string(t.rows.size()));
  }
  for (std::size_t i = 0; i < std::min(t.rows.size(), kReference.size()); ++i) {
    const TableRow& g = t.rows[i];
    const ReferenceRow& e = kReference[i];
    if (g.n != e.n || g.y_lo != e.y || g.c_lo != e.c_lo || g.c_hi != e.c_hi) {
      problem(e, "row layout differs");
      continue;
    }
    if (g.regions.size() != e.regions.size()) {
      problem(e, "region count differs");
      continue;
    }
    for (std::size_t k = 0; k < e.regions.size(); ++k) {
      // A caveat row still escalates; the table footnote carries the
      // two-completions rule for those rows, as the reference table does.
      if (action_letter(g.regions[k].action) != e.regions[k].action) problem(e, "classification differs");
      if (std::isfinite(e.regions[k].upper)) {
        if (!g.regions[k].upper) {
          problem(e, "missing threshold");
          continue;
        }
        const double err = std::fabs(*g.regions[k].upper - e.regions[k].upper);
        worst = std::max(worst, err);
        if (err > 0.01) problem(e, fmt("threshold %.4f", *g.regions[k].upper));
      }
    }
  }
  report("decision_table", mismatches == 0, secs, 5.0,
         std::to_string(t.rows.size()) + " rows, " + std::to_string(mismatches) + " mismatches" +
             fmt(", worst threshold error %.4f", worst) +
             (first_problem.empty() ? "" : ", first: " + first_problem));
}

// --- Approximation error bound -------------------------------------------

void check_approximation_bound() {
  Stopwatch sw;
  constexpr int kGrid = 10000;
  double max_gap = 0.0;
  double worst_excess = -kInf;
  for (int i = 1; i <= kGrid; ++i) {
    const double p = 0.4 * i / kGrid;
    const double bound = approximation_error_bound(p);
    const double log1mp = std::log1p(-p);
    double row_max = 0.0;
    for (int j = 0; j < kGrid; ++j) {
      const double w = double(j) / (kGrid - 1);
      row_max = std::max(row_max, std::fabs((1 - w * p) - std::exp(w * log1mp)));
    }
    max_gap = std::max(max_gap, row_max);
    worst_excess = std::max(worst_excess, row_max - bound);
  }
  report("approximation_bound", max_gap < 0.0255 && worst_excess <= 1e-12, sw.seconds(), 30.0,
         fmt("max gap %.6f (< 0.0255), max excess over bound %.2e (<= 1e-12)", max_gap, worst_excess));
}

// --- Worked example -------------------------------------------------------

void check_worked_example() {
  Stopwatch sw;
  // Months of 30 days. Patients arrive every 15 days from day 15; DLT days are
  // 145, 330, 370, 400, 420 for patients 4, 16, 17, 20, 21.
  Scenario sc;
  sc.tox_probs = {0.1, 0.2, 0.3, 0.4};
  sc.tau = 3;
  sc.max_n = 21;
  TrialDesign d;
  d.params.doses = 4;
  d.params.tau = 3;
  d.params.max_n = 21;
  std::vector<double> gaps(21, 0.5);
  std::vector<std::optional<double>> dlt(21);
  dlt[3] = (145.0 - 120) / 30;
  dlt[15] = (330.0 - 300) / 30;
  dlt[16] = (370.0 - 315) / 30;
  dlt[19] = (400.0 - 360) / 30;
  dlt[20] = (420.0 - 375) / 30;
  ScriptedPatients script(gaps, dlt);
  SimulationOptions opts;
  opts.record_trace = true;
  const TrialResult r = simulate_trial(sc, d, script, opts);

  std::vector<std::pair<Action, int>> seq;
  double deesc_day = -1;
  for (const auto& e : r.trace) {
    if (!seq.empty() && e.action == Action::SuspendAccrual && seq.back().first == Action::SuspendAccrual) continue;
    seq.emplace_back(e.action, e.next_dose);
    if (e.action == Action::DeEscalate && deesc_day < 0) deesc_day = e.clock * 30;
  }
  const std::vector<std::pair<Action, int>> expected{
      {Action::SuspendAccrual, 1}, {Action::Escalate, 2}, {Action::DeEscalate, 1}, {Action::Escalate, 2},
      {Action::Stay, 2},           {Action::Escalate, 3}, {Action::DeEscalate, 2}};
  std::string got;
  for (const auto& [a, dose] : seq) got += std::string(action_token(a)) + ":" + std::to_string(dose) + " ";

  // The shipped log replays to the same decisions.
  std::ifstream in(std::filesystem::path(TITEKIT_DATA_DIR) / "worked_example.ndjson");
  std::stringstream text;
  text << in.rdbuf();
  const auto replayed = conduct::replay(conduct::parse_ndjson(text.str()));
  bool replay_ok = replayed.selection && replayed.selection->dose == 2 && !replayed.steps.empty();
  for (const auto& s : replayed.steps) replay_ok = replay_ok && !s.mismatch;

  const bool pass = seq == expected && std::fabs(deesc_day - 165) < 1e-6 && r.selection && r.selection->dose == 2 &&
                    std::fabs(r.selection->estimate - 0.25) < 1e-12 && std::fabs(r.duration - 14) <= 0.25 &&
                    replay_ok;
  report("worked_example_replay", pass, sw.seconds(), 1.0,
         got + fmt("| de-escalation day %.1f, MTD dose %.0f at %.4f, duration %.3f months", deesc_day,
                   r.selection ? r.selection->dose : 0, r.selection ? r.selection->estimate : 0, r.duration) +
             (replay_ok ? ", log replay consistent" : ", log replay MISMATCH"));
}

// --- Scenario 1 -----------------------------------------------------------

Scenario scenario1() {
  Scenario sc;
  sc.tox_probs = {0.13, 0.28, 0.41, 0.50, 0.60, 0.70};
  sc.tau = 3;
  sc.accrual_rate = 2;
  sc.accrual = AccrualModel::Exponential;
  sc.late_fraction = 0.5;
  sc.max_n = 36;
  return sc;
}

TrialDesign design_for(const Scenario& sc) {
  TrialDesign d;
  d.params.doses = sc.doses();
  d.params.tau = sc.tau;
  d.params.max_n = sc.max_n;
  d.params.cohort_size = sc.cohort_size;
  return d;
}

void check_scenario1() {
  Stopwatch sw;
  const Scenario sc = scenario1();
  const auto oc = run_oc(sc, design_for(sc), 10000, 42);
  const double sel = oc.selection_pct[1];
  const bool sel_ok = std::fabs(sel - 58.2) <= 3.0;
  const bool dur_ok = std::fabs(oc.mean_duration - 22.9) <= 1.5;
  const bool od_ok = std::fabs(oc.overdose_pct - 25.0) <= 4.0;
  auto verdict = [](bool ok) { return std::string(ok ? " ok" : " OUT"); };
  report("scenario_1_operating_chars", sel_ok && dur_ok && od_ok, sw.seconds(), 120.0,
         fmt("dose-2 selection %.2f%% (58.2 +/- 3)", sel) + verdict(sel_ok) +
             fmt(", duration %.2f months (22.9 +/- 1.5)", oc.mean_duration) + verdict(dur_ok) +
             fmt(", overdose %.2f%% (25.0 +/- 4)", oc.overdose_pct) + verdict(od_ok));
}

// --- Exact versus approximate likelihood ----------------------------------

void check_exact_vs_approximate() {
  Stopwatch sw;
  DesignParams params;
  params.max_n = 12;
  const Keyboard kb(params);
  const DosePosition middle{};
  oracle::Gen g(20240108);
  constexpr int kStates = 10000;
  int agree = 0;
  double worst_margin = 0.0;
  for (int s = 0; s < kStates; ++s) {
    PendingData data;
    data.n = g.integer(1, 12);
    data.y = g.integer(0, data.n);
    const int pending = g.integer(0, data.n - data.y);
    data.m = data.n - data.y - pending;
    for (int i = 0; i < pending; ++i) data.pending_weights.push_back(g.uniform());
    const Decision approx = keyboard_decision(summarize(data), params, kb, middle);
    const Decision exact = keyboard_decision_exact(data, params, kb, middle);
    if (approx.action == exact.action) {
      ++agree;
      continue;
    }
    // Disagreement: how far apart were the two candidate keys under the exact posterior?
    const auto masses = exact_key_masses(data, kb);
    const double margin = masses[*exact.strongest_key] - masses[*approx.strongest_key];
    worst_margin = std::max(worst_margin, margin);
  }
  const double rate = 100.0 * agree / kStates;
  report("exact_vs_approximate", rate >= 97.0 && worst_margin <= 0.02, sw.seconds(), 60.0,
         fmt("agreement %.2f%% (>= 97), %.0f disagreements, widest mass margin %.4f (<= 0.02)", rate,
             kStates - agree, worst_margin));
}

// --- Properties -----------------------------------------------------------

void check_properties() {
  Stopwatch sw;
  std::vector<std::string> broken;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok && std::find(broken.begin(), broken.end(), what) == broken.end()) broken.push_back(what);
  };
  DesignParams params;
  params.max_n = 30;
  const DoseFindingEngine keyboard(EngineKind::Keyboard, params);
  const DoseFindingEngine mtpi(EngineKind::Mtpi, params);
  const DosePosition middle{};
  oracle::Gen g(7);

  // Monotonicity: resolving pending patients as non-DLT never lowers the action.
  for (int s = 0; s < 20000; ++s) {
    const int n = g.integer(1, 30);
    const int y = g.integer(0, n);
    const int c = g.integer(0, n - y);
    const int m = n - y - c;
    const EffectiveData observed{n, y, c, m + g.uniform() * c};
    const EffectiveData resolved{n, y, 0, double(n - y)};
    for (const auto* e : {&keyboard, &mtpi}) {
      expect(action_code(e->decide(observed, middle).action) <= action_code(e->decide(resolved, middle).action),
             "monotonicity");
    }
  }

  // Long-memory coherence and monotonicity in m̃, exhaustive on a 0.05 grid.
  for (int n = 1; n <= 30; ++n) {
    for (int y = 0; y <= n; ++y) {
      for (int c = 0; c <= n - y; ++c) {
        const int m = n - y - c;
        int prev = -2;
        for (int k = 0; k <= 20 * c; ++k) {
          const EffectiveData d{n, y, c, m + k * 0.05};
          for (const auto* e : {&keyboard, &mtpi}) {
            const Action a = e->decide(d, middle).action;
            const double rate = d.n_eff() > 0 ? y / d.n_eff() : 0.0;
            if (d.n_eff() > 0 && rate > params.phi) expect(a != Action::Escalate, "coherence (escalation)");
            if (d.n_eff() > 0 && rate < params.phi) {
              expect(a != Action::DeEscalate && a != Action::EliminateAndDeEscalate, "coherence (de-escalation)");
            }
          }
          const int code = action_code(keyboard.core_action(d));
          expect(code >= prev, "monotone in m_eff");
          prev = code;
        }
      }
    }
  }

  // Pending = 0 reduces to the complete-data designs.
  for (int n = 1; n <= 30; ++n) {
    for (int y = 0; y <= n; ++y) {
      std::vector<PatientRecord> recs;
      for (int i = 0; i < n; ++i) {
        PatientRecord r;
        r.entry_time = 0.1 * i;
        if (i < y) r.dlt_time = 1.0;
        recs.push_back(r);
      }
      const EffectiveData eff = effective_data(recs, 100.0, UniformWeight{}, params.tau);
      const EffectiveData plain = complete_data(n, y);
      expect(eff.n == plain.n && eff.y == plain.y && eff.pending == 0 && eff.m_eff == plain.m_eff, "pending=0 data");
      for (const auto* e : {&keyboard, &mtpi}) {
        expect(e->decide(eff, middle).action == e->decide(plain, middle).action, "pending=0 decision");
      }
      const int k = keyboard.keyboard().size();
      std::vector<double> masses(k);
      for (int i = 0; i < k; ++i) {
        const Key key = keyboard.keyboard().keys()[i];
        masses[i] = oracle::beta_cdf_int(key.hi, y + 1, n - y + 1) - oracle::beta_cdf_int(key.lo, y + 1, n - y + 1);
      }
      const int best = int(std::max_element(masses.begin(), masses.end()) - masses.begin());
      const int target = keyboard.keyboard().target_index();
      const Action plain_keyboard = best > target ? Action::DeEscalate : best < target ? Action::Escalate : Action::Stay;
      expect(keyboard.core_action(plain) == plain_keyboard, "pending=0 plain keyboard");
    }
  }

  // Weight functions: anchored and non-decreasing.
  const std::vector<double> dlt_times{0.4, 1.1, 2.5, 2.9};
  const double tau = 3.0;
  for (const WeightScheme& scheme : {WeightScheme{UniformWeight{}}, WeightScheme{PiecewiseWeight{{0.2, 0.3, 0.5}}},
                                     WeightScheme{AdaptiveWeight{}}}) {
    const WeightModel w(scheme, tau, dlt_times);
    expect(std::fabs(w(0.0)) < 1e-12, "weight anchor at 0");
    expect(std::fabs(w(tau) - 1.0) < 1e-12, "weight anchor at tau");
    double prev = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      const double v = w(tau * i / 1000);
      expect(v >= prev - 1e-12, "weight monotone");
      prev = v;
    }
  }

  // PAVA: idempotent and mean preserving.
  for (int s = 0; s < 5000; ++s) {
    std::vector<BinomialCell> cells(g.integer(1, 8));
    for (auto& cell : cells) {
      cell.n = g.integer(1, 12);
      cell.events = g.integer(0, int(cell.n));
    }
    const auto fit = pava_isotonic(cells);
    std::vector<BinomialCell> refit(cells.size());
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      refit[i] = {fit[i] * cells[i].n, cells[i].n};
      before += cells[i].events;
      after += fit[i] * cells[i].n;
    }
    const auto again = pava_isotonic(refit);
    for (std::size_t i = 0; i < cells.size(); ++i) expect(std::fabs(again[i] - fit[i]) < 1e-12, "PAVA idempotence");
    expect(std::fabs(before - after) < 1e-9, "PAVA mean preservation");
  }

  // Snapshot replay: deterministic, and every crash prefix recovers to the prefix fold.
  std::ifstream in(std::filesystem::path(TITEKIT_DATA_DIR) / "worked_example.ndjson");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto events = conduct::parse_ndjson(text);
  const auto& config = *events.front().config;
  const conduct::Timestamp query = events.back().timestamp + 30 * conduct::kMillisPerDay;
  const auto first = conduct::replay(events);
  const auto second = conduct::replay(events);
  expect(first.steps.size() == second.steps.size(), "replay determinism");
  for (std::size_t i = 0; i < std::min(first.steps.size(), second.steps.size()); ++i) {
    expect(conduct::to_json(first.steps[i].snapshot, config) == conduct::to_json(second.steps[i].snapshot, config),
           "replay determinism");
  }
  const auto dir = std::filesystem::temp_directory_path() / ("titekit-acceptance-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto path = dir / "trial.ndjson";
  std::size_t first_line_end = text.find('\n') + 1;
  for (std::size_t cut = first_line_end; cut <= text.size(); ++cut) {
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << text.substr(0, cut);
    }
    const auto log = conduct::EventLog::open(path);
    const std::size_t complete = std::count(text.begin(), text.begin() + cut, '\n');
    expect(log.events().size() == complete, "crash-prefix recovery");
    if (log.events().size() != complete) continue;
    const auto recovered = conduct::to_json(conduct::snapshot(conduct::fold(log.events()), query), config);
    const auto expected =
        conduct::to_json(conduct::snapshot(conduct::fold(std::span(events).first(complete)), query), config);
    expect(recovered == expected, "crash-prefix recovery");
  }
  std::filesystem::remove_all(dir);

  std::string detail = broken.empty() ? "all properties hold" : "broken:";
  for (const auto& b : broken) detail += " [" + b + "]";
  report("property_suite", broken.empty(), sw.seconds(), 120.0, detail);
}

// --- Large-sample concentration -------------------------------------------

void check_concentration() {
  Stopwatch sw;
  Scenario sc = scenario1();
  sc.max_n = 300;
  const TrialDesign d = design_for(sc);
  constexpr int kReps = 500;
  SimulationOptions opts;
  opts.keep_records = true;
  double share_total = 0.0;
  int stopped = 0;
  for (int rep = 0; rep < kReps; ++rep) {
    const TrialResult r = simulate_trial(sc, d, replicate_seed(4242, rep), opts);
    if (r.early_stopped) ++stopped;
    std::vector<PatientRecord> recs = r.records;
    std::stable_sort(recs.begin(), recs.end(),
                     [](const PatientRecord& a, const PatientRecord& b) { return a.entry_time < b.entry_time; });
    int on_target = 0;
    for (std::size_t i = recs.size() > 100 ? recs.size() - 100 : 0; i < recs.size(); ++i) {
      const double p = sc.tox_probs[recs[i].dose_level - 1];
      if (p > 0.25 && p < 0.35) ++on_target;
    }
    // A trial stopped short counts its missing patients as off target.
    share_total += on_target / 100.0;
  }
  const double share = 100.0 * share_total / kReps;
  report("large_n_concentration", share >= 90.0, sw.seconds(), 600.0,
         fmt("%.2f%% of the final 100 patients on doses with p in (0.25, 0.35) (>= 90), %.0f early stops", share,
             stopped));
}

}  // namespace

int main() {
  check_table();
  check_approximation_bound();
  check_worked_example();
  check_scenario1();
  check_exact_vs_approximate();
  check_properties();
  check_concentration();
  std::printf("%d criteria failed\n", failures);
  return failures ? 1 : 0;
}

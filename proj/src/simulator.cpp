#include "titekit/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include "titekit/stats.hpp"

namespace titekit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(AccrualModel model) {
  return model == AccrualModel::Exponential ? "exponential" : "deterministic";
}

AccrualModel accrual_from_string(std::string_view name) {
  if (name == "deterministic") return AccrualModel::Deterministic;
  if (name == "exponential") return AccrualModel::Exponential;
  throw std::invalid_argument("unknown accrual model '" + std::string(name) +
                              "' (expected deterministic or exponential)");
}

void Scenario::validate() const {
  if (tox_probs.empty()) throw std::invalid_argument("scenario needs at least one dose");
  for (std::size_t j = 0; j < tox_probs.size(); ++j) {
    if (!(tox_probs[j] >= 0.0 && tox_probs[j] < 1.0)) {
      throw std::invalid_argument("toxicity probabilities must lie in [0, 1)");
    }
    if (j > 0 && tox_probs[j] < tox_probs[j - 1]) {
      throw std::invalid_argument("toxicity probabilities must be non-decreasing in dose");
    }
  }
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (!(accrual_rate > 0.0)) throw std::invalid_argument("accrual rate must be positive");
  if (!(late_fraction > 0.0 && late_fraction < 1.0)) {
    throw std::invalid_argument("late_fraction must lie in (0, 1)");
  }
  if (max_n < 1) throw std::invalid_argument("max_n must be at least 1");
  if (cohort_size < 1) throw std::invalid_argument("cohort_size must be at least 1");
  if (start_dose < 1 || start_dose > doses()) {
    throw std::invalid_argument("start_dose outside the dose ladder");
  }
}

double Weibull::cdf(double t) const {
  if (t <= 0.0) return 0.0;
  return -std::expm1(-std::pow(t / scale, shape));
}

double Weibull::quantile(double q) const {
  if (!(q >= 0.0 && q < 1.0)) throw std::domain_error("Weibull::quantile: q outside [0, 1)");
  return scale * std::pow(-std::log1p(-q), 1.0 / shape);
}

Weibull weibull_calibrate(double p, double tau, double late_fraction) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("weibull_calibrate: p must lie in (0, 1)");
  if (!(tau > 0.0)) throw std::invalid_argument("weibull_calibrate: tau must be positive");
  if (!(late_fraction > 0.0 && late_fraction < 1.0)) {
    throw std::invalid_argument("weibull_calibrate: late_fraction must lie in (0, 1)");
  }
  // (tau/scale)^k = -ln(1-p) and (tau/(2 scale))^k = -ln(1-(1-lf)p); the ratio gives 2^-k.
  const double at_tau = -std::log1p(-p);
  const double at_half = -std::log1p(-(1.0 - late_fraction) * p);
  const double shape = std::log2(at_tau / at_half);
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw std::invalid_argument("weibull_calibrate: no Weibull matches these constraints");
  }
  return {shape, tau / std::pow(at_tau, 1.0 / shape)};
}

void validate(const Scenario& scenario, const TrialDesign& design) {
  scenario.validate();
  design.params.validate();
  titekit::validate(design.weights);
  if (design.params.doses != scenario.doses()) {
    throw std::invalid_argument("design has " + std::to_string(design.params.doses) +
                                " doses but scenario has " + std::to_string(scenario.doses()));
  }
  if (std::fabs(design.params.tau - scenario.tau) > 1e-12) {
    throw std::invalid_argument("design and scenario disagree on the assessment window");
  }
  if (design.params.max_n != scenario.max_n || design.params.cohort_size != scenario.cohort_size) {
    throw std::invalid_argument("design and scenario disagree on max_n or cohort_size");
  }
  if (design.exact_likelihood && design.engine != EngineKind::Keyboard) {
    throw std::invalid_argument("exact-likelihood decisions are implemented for keyboard only");
  }
}

// ---------------------------------------------------------------------------

RandomPatients::RandomPatients(const Scenario& scenario, std::uint64_t seed)
    : scenario_(scenario), rng_(seed) {
  for (double p : scenario.tox_probs) {
    if (p > 0.0) {
      dlt_time_models_.emplace_back(weibull_calibrate(p, scenario.tau, scenario.late_fraction));
    } else {
      dlt_time_models_.emplace_back(std::nullopt);
    }
  }
}

double RandomPatients::next_gap() {
  if (scenario_.accrual == AccrualModel::Deterministic) return 1.0 / scenario_.accrual_rate;
  return std::exponential_distribution<double>(scenario_.accrual_rate)(rng_);
}

std::optional<double> RandomPatients::outcome(int dose) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const auto& model = dlt_time_models_.at(dose - 1);
  if (!model || u >= scenario_.tox_probs[dose - 1]) return std::nullopt;
  // Conditional on u < p, u is uniform on (0, p), so F^{-1}(u) is the DLT time.
  return std::max(model->quantile(u), 1e-9 * scenario_.tau);
}

ScriptedPatients::ScriptedPatients(std::vector<double> gaps,
                                   std::vector<std::optional<double>> dlt_times)
    : gaps_(std::move(gaps)), dlt_times_(std::move(dlt_times)) {}

double ScriptedPatients::next_gap() {
  if (next_gap_ >= gaps_.size()) throw std::out_of_range("scripted patients exhausted");
  return gaps_[next_gap_++];
}

std::optional<double> ScriptedPatients::outcome(int) {
  if (next_outcome_ >= dlt_times_.size()) throw std::out_of_range("scripted outcomes exhausted");
  return dlt_times_[next_outcome_++];
}

// ---------------------------------------------------------------------------

std::optional<MtdSelection> select_mtd(const std::vector<DoseCount>& counts, int admissible_top,
                                       double phi) {
  std::vector<int> tried;
  std::vector<BinomialCell> cells;
  const int top = std::min<int>(admissible_top, static_cast<int>(counts.size()));
  for (int j = 0; j < top; ++j) {
    if (counts[j].n <= 0) continue;
    tried.push_back(j + 1);
    cells.push_back({static_cast<double>(counts[j].y), static_cast<double>(counts[j].n)});
  }
  if (tried.empty()) return std::nullopt;
  const std::vector<double> est = pava_isotonic(cells);

  double best = kInf;
  for (double e : est) best = std::min(best, std::fabs(e - phi));
  constexpr double kTie = 1e-12;
  std::optional<MtdSelection> below;
  std::optional<MtdSelection> at_or_above;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (std::fabs(est[i] - phi) > best + kTie) continue;
    if (est[i] < phi) {
      below = MtdSelection{tried[i], est[i]};  // keeps the highest
    } else if (!at_or_above) {
      at_or_above = MtdSelection{tried[i], est[i]};  // keeps the lowest
    }
  }
  return below ? below : at_or_above;
}

int true_mtd(const std::vector<double>& tox_probs, const DesignParams& params) {
  const double lo = params.phi - params.delta1;
  const double hi = params.phi + params.delta2;
  int in_key = 0;
  int closest = 0;
  for (int j = 0; j < static_cast<int>(tox_probs.size()); ++j) {
    const double dist = std::fabs(tox_probs[j] - params.phi);
    if (closest == 0 || dist < std::fabs(tox_probs[closest - 1] - params.phi)) closest = j + 1;
    if (tox_probs[j] > lo && tox_probs[j] < hi &&
        (in_key == 0 || dist < std::fabs(tox_probs[in_key - 1] - params.phi))) {
      in_key = j + 1;
    }
  }
  return in_key != 0 ? in_key : closest;
}

// ---------------------------------------------------------------------------

TrialResult simulate_trial(const Scenario& sc, const TrialDesign& design, PatientSource& patients,
                           const SimulationOptions& options) {
  validate(sc, design);
  const DoseFindingEngine engine(design.engine, design.params);
  const int doses = sc.doses();
  const double tau = sc.tau;

  TrialResult res;
  res.patients.assign(doses, 0);
  res.dlts.assign(doses, 0);
  std::vector<PatientRecord> records;
  records.reserve(sc.max_n);

  int dose = sc.start_dose;
  int top = doses;

  auto last_ascertainment = [&] {
    double t = 0.0;
    for (const auto& r : records) t = std::max(t, ascertainment_time(r, tau));
    return t;
  };
  auto next_ascertainment_after = [&](double clock) {
    double t = kInf;
    for (const auto& r : records) {
      const double a = ascertainment_time(r, tau);
      if (a > clock + kClockEps) t = std::min(t, a);
    }
    return t;
  };
  auto evaluate = [&](double clock) {
    const auto ladder = observe_ladder(records, doses, clock, design.weights, tau);
    std::vector<EffectiveData> eff;
    eff.reserve(ladder.size());
    for (const auto& d : ladder) eff.push_back(summarize(d));
    Recommendation rec;
    if (design.exact_likelihood) {
      rec = recommend(engine, eff, dose, top, [&](const EffectiveData&, DosePosition pos) {
        return keyboard_decision_exact(ladder[dose - 1], design.params, engine.keyboard(), pos);
      });
    } else {
      rec = recommend(engine, eff, dose, top);
    }
    if (options.record_trace) {
      res.trace.push_back({clock, dose, std::move(eff), rec.action, rec.next_dose, rec.strongest_key});
    }
    return rec;
  };
  auto finish = [&](double end_clock) {
    for (const auto& r : records) {
      ++res.patients[r.dose_level - 1];
      if (r.dlt_time && *r.dlt_time <= tau + kClockEps) ++res.dlts[r.dose_level - 1];
    }
    res.duration = records.empty() ? 0.0 : end_clock - records.front().entry_time;
    if (options.keep_records) res.records = std::move(records);
  };

  double last_entry = 0.0;
  for (int i = 0; i < sc.max_n; ++i) {
    double arrival = last_entry + patients.next_gap();
    if (i > 0 && i % sc.cohort_size == 0) {
      double clock = arrival;
      if (design.wait_for_complete) clock = std::max(clock, last_ascertainment());
      for (;;) {
        const Recommendation rec = evaluate(clock);
        top = rec.admissible_top;
        if (rec.action == Action::TerminateTrial) {
          res.early_stopped = true;
          finish(clock);
          return res;
        }
        if (rec.action == Action::SuspendAccrual) {
          const double t = next_ascertainment_after(clock);
          // Nothing left to wait for: the completion requirement cannot be met, so stay.
          if (!std::isfinite(t)) break;
          clock = t;
          continue;
        }
        dose = rec.next_dose;
        break;
      }
      arrival = clock;
    }
    records.push_back({std::to_string(i + 1), dose, arrival, patients.outcome(dose), std::nullopt});
    last_entry = arrival;
  }

  const double end = last_ascertainment();
  std::vector<DoseCount> counts(doses);
  std::vector<EffectiveData> complete(doses);
  for (const auto& r : records) {
    auto& c = counts[r.dose_level - 1];
    ++c.n;
    if (r.dlt_time) ++c.y;
  }
  for (int j = 0; j < doses; ++j) complete[j] = complete_data(counts[j].n, counts[j].y);
  if (auto lowest = lowest_eliminated(complete, design.params)) top = std::min(top, *lowest - 1);
  res.selection = select_mtd(counts, top, design.params.phi);
  finish(end);
  return res;
}

TrialResult simulate_trial(const Scenario& scenario, const TrialDesign& design, std::uint64_t seed,
                           const SimulationOptions& options) {
  RandomPatients patients(scenario, seed);
  return simulate_trial(scenario, design, patients, options);
}

std::uint64_t replicate_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64(master_seed ^ splitmix64(index));
}

OperatingCharacteristics run_oc(const Scenario& scenario, const TrialDesign& design, int replicates,
                                std::uint64_t master_seed, unsigned threads) {
  if (replicates < 1) throw std::invalid_argument("replicates must be at least 1");
  validate(scenario, design);
  const int doses = scenario.doses();

  struct Summary {
    int selected = 0;  // 0 = none
    std::vector<int> patients;
    std::vector<int> dlts;
    double duration = 0.0;
  };
  std::vector<Summary> summaries(replicates);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int r = next++; r < replicates; r = next++) {
      try {
        const TrialResult t = simulate_trial(scenario, design, replicate_seed(master_seed, r));
        summaries[r] = {t.selection ? t.selection->dose : 0, t.patients, t.dlts, t.duration};
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = replicates;
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(replicates));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  OperatingCharacteristics oc;
  oc.selection_pct.assign(doses, 0.0);
  oc.allocation_pct.assign(doses, 0.0);
  oc.dlt_rate.assign(doses, 0.0);
  oc.true_mtd = true_mtd(scenario.tox_probs, design.params);
  oc.replicates = replicates;
  oc.master_seed = master_seed;
  oc.accrual = scenario.accrual;

  std::vector<double> pts(doses, 0.0);
  std::vector<double> dlts(doses, 0.0);
  double total_pts = 0.0;
  int stops = 0;
  int poor = 0;
  int overdose = 0;
  for (const auto& s : summaries) {
    if (s.selected == 0) {
      ++stops;
    } else {
      oc.selection_pct[s.selected - 1] += 1.0;
    }
    int above = 0;
    for (int j = 0; j < doses; ++j) {
      pts[j] += s.patients[j];
      dlts[j] += s.dlts[j];
      total_pts += s.patients[j];
      if (j + 1 > oc.true_mtd) above += s.patients[j];
    }
    if (s.patients[oc.true_mtd - 1] < 6) ++poor;
    if (above > scenario.max_n / 2.0) ++overdose;
    oc.mean_duration += s.duration;
  }
  const double reps = replicates;
  for (int j = 0; j < doses; ++j) {
    oc.selection_pct[j] *= 100.0 / reps;
    oc.allocation_pct[j] = total_pts > 0.0 ? 100.0 * pts[j] / total_pts : 0.0;
    oc.dlt_rate[j] = pts[j] > 0.0 ? dlts[j] / pts[j] : std::numeric_limits<double>::quiet_NaN();
  }
  oc.mean_duration /= reps;
  oc.stop_pct = 100.0 * stops / reps;
  oc.poor_allocation_pct = 100.0 * poor / reps;
  oc.overdose_pct = 100.0 * overdose / reps;
  return oc;
}

}  // namespace titekit

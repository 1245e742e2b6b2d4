#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "titekit/engine.hpp"
#include "titekit/patient_data.hpp"

namespace titekit {

enum class AccrualModel { Deterministic, Exponential };

std::string_view to_string(AccrualModel model);
AccrualModel accrual_from_string(std::string_view name);

/// Simulation truth for one fixed scenario.
struct Scenario {
  std::vector<double> tox_probs;  ///< per dose, non-decreasing, each in [0, 1)
  double tau = 3.0;               ///< months
  double accrual_rate = 2.0;      ///< patients per month
  AccrualModel accrual = AccrualModel::Deterministic;
  double late_fraction = 0.5;  ///< share of DLTs falling in (tau/2, tau]
  int max_n = 36;
  int cohort_size = 3;
  int start_dose = 1;

  int doses() const { return static_cast<int>(tox_probs.size()); }
  void validate() const;
};

/// Weibull time-to-DLT with F(tau) = p and F(tau/2) = (1 - late_fraction) p.
struct Weibull {
  double shape = 1.0;
  double scale = 1.0;

  double cdf(double t) const;
  /// Time t with F(t) = q, for q in [0, 1).
  double quantile(double q) const;
};

Weibull weibull_calibrate(double p, double tau, double late_fraction);

struct TrialDesign {
  EngineKind engine = EngineKind::Keyboard;
  DesignParams params;
  WeightScheme weights = UniformWeight{};
  /// Keyboard only: strongest key from the exact pending-data likelihood.
  bool exact_likelihood = false;
  /// Wait for every pending outcome before each decision (non-TITE baseline).
  bool wait_for_complete = false;
};

/// Throws std::invalid_argument if the design cannot run on the scenario.
void validate(const Scenario& scenario, const TrialDesign& design);

/// Supplies patients in enrollment order. Each patient takes exactly one
/// next_gap() call followed by one outcome() call, so a seeded source yields
/// the same patients to every design it is paired with.
class PatientSource {
 public:
  virtual ~PatientSource() = default;
  /// Time from the previous enrollment (or from time 0) to this arrival.
  virtual double next_gap() = 0;
  /// DLT time from entry if the patient experiences a DLT at `dose`.
  virtual std::optional<double> outcome(int dose) = 0;
};

/// Random arrivals and Weibull DLT times drawn from the scenario. One latent
/// uniform per patient decides toxicity at every dose (U < p_j), so outcomes
/// are monotone across doses.
class RandomPatients final : public PatientSource {
 public:
  RandomPatients(const Scenario& scenario, std::uint64_t seed);
  double next_gap() override;
  std::optional<double> outcome(int dose) override;

 private:
  const Scenario& scenario_;
  std::vector<std::optional<Weibull>> dlt_time_models_;
  std::mt19937_64 rng_;
};

/// Fixed arrivals and outcomes, indexed by enrollment order.
class ScriptedPatients final : public PatientSource {
 public:
  ScriptedPatients(std::vector<double> gaps, std::vector<std::optional<double>> dlt_times);
  double next_gap() override;
  std::optional<double> outcome(int dose) override;

 private:
  std::vector<double> gaps_;
  std::vector<std::optional<double>> dlt_times_;
  std::size_t next_gap_ = 0;
  std::size_t next_outcome_ = 0;
};

struct TraceEntry {
  double clock = 0.0;
  int dose = 1;
  std::vector<EffectiveData> per_dose;
  Action action = Action::Stay;
  int next_dose = 1;
  std::optional<int> strongest_key;
};

struct MtdSelection {
  int dose = 0;  ///< 1-based
  double estimate = 0.0;
};

struct TrialResult {
  std::optional<MtdSelection> selection;
  std::vector<int> patients;  ///< per dose
  std::vector<int> dlts;      ///< per dose
  double duration = 0.0;      ///< months
  bool early_stopped = false;
  std::vector<PatientRecord> records;
  std::vector<TraceEntry> trace;
};

struct SimulationOptions {
  bool record_trace = false;
  bool keep_records = false;
};

TrialResult simulate_trial(const Scenario& scenario, const TrialDesign& design,
                           PatientSource& patients, const SimulationOptions& options = {});
TrialResult simulate_trial(const Scenario& scenario, const TrialDesign& design, std::uint64_t seed,
                           const SimulationOptions& options = {});

struct DoseCount {
  int n = 0;
  int y = 0;
};

/// Isotonic estimates over tried doses up to `admissible_top`; the dose closest
/// to phi wins. Ties (within 1e-12) go to the highest dose estimated below phi,
/// otherwise the lowest dose at or above phi.
std::optional<MtdSelection> select_mtd(const std::vector<DoseCount>& counts, int admissible_top,
                                       double phi);

/// Dose whose probability lies in the target key and is closest to phi;
/// without one, the dose closest to phi. Ties go to the lower dose.
int true_mtd(const std::vector<double>& tox_probs, const DesignParams& params);

struct OperatingCharacteristics {
  std::vector<double> selection_pct;
  std::vector<double> allocation_pct;
  std::vector<double> dlt_rate;  ///< pooled observed DLT rate per dose
  double mean_duration = 0.0;
  double stop_pct = 0.0;
  double poor_allocation_pct = 0.0;
  double overdose_pct = 0.0;
  int true_mtd = 0;
  int replicates = 0;
  std::uint64_t master_seed = 0;
  AccrualModel accrual = AccrualModel::Deterministic;
};

/// Seed of replicate `index`: splitmix64(master ^ splitmix64(index)).
std::uint64_t replicate_seed(std::uint64_t master_seed, std::uint64_t index);

/// Runs `replicates` independent trials (threads = 0 uses the hardware count).
/// Results depend only on (scenario, design, replicates, master_seed).
OperatingCharacteristics run_oc(const Scenario& scenario, const TrialDesign& design, int replicates,
                                std::uint64_t master_seed, unsigned threads = 0);

}  // namespace titekit

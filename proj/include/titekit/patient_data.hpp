#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace titekit {

/// Tolerance used when comparing clock values (months).
inline constexpr double kClockEps = 1e-9;

/// One enrolled subject. Times are in the trial's clock unit (months), with
/// `dlt_time` and `completion_time` measured from `entry_time`.
struct PatientRecord {
  std::string id;
  int dose_level = 1;
  double entry_time = 0.0;
  /// Time from entry to DLT, in (0, tau]. In simulation this is the latent
  /// truth; the DLT only becomes visible once the clock passes it.
  std::optional<double> dlt_time;
  /// Assessment recorded complete (without DLT) this long after entry. When
  /// absent the assessment completes at the end of the window.
  std::optional<double> completion_time;
};

/// What is known about a patient at a decision clock.
struct FollowUp {
  double follow_up = 0.0;  ///< u_i = min(clock - entry, tau), frozen at DLT
  bool ascertained = false;
  bool dlt = false;  ///< DLT observed by the clock
};

FollowUp follow_up_at(const PatientRecord& rec, double clock, double tau);

/// Clock at which the patient's outcome becomes known (DLT, recorded
/// completion, or window end, whichever comes first).
double ascertainment_time(const PatientRecord& rec, double tau);

// ---------------------------------------------------------------------------
// Weight schemes for pending patients: w = Pr(t <= u | DLT will occur).

struct UniformWeight {};

/// Prior probabilities that a DLT falls in each third of the window.
struct PiecewiseWeight {
  std::array<double, 3> upsilon{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

struct GammaPrior {
  double shape = 0.1;
  double rate = 0.1;
};

/// Scaled-Beta time-to-DLT model with Gamma priors on both shapes,
/// integrated on a log-spaced grid over [e^log_lo, e^log_hi].
struct AdaptiveWeight {
  GammaPrior lambda_prior{};
  GammaPrior gamma_prior{};
  int grid_points = 40;
  double log_lo = -3.0;
  double log_hi = 3.0;
};

using WeightScheme = std::variant<UniformWeight, PiecewiseWeight, AdaptiveWeight>;

void validate(const WeightScheme& scheme);
std::string scheme_name(const WeightScheme& scheme);

double weight_uniform(double u, double tau);
double weight_piecewise(double u, double tau, const std::array<double, 3>& upsilon);
double weight_adaptive(double u, double tau, std::span<const double> observed_dlt_times,
                       const AdaptiveWeight& spec);

/// A weight scheme bound to the data available at one decision clock. For the
/// adaptive scheme this holds the (lambda, gamma) grid posterior, which is
/// fitted to the DLT times observed so far across all doses.
class WeightModel {
 public:
  WeightModel(WeightScheme scheme, double tau, std::span<const double> observed_dlt_times = {});

  double operator()(double u) const;
  double tau() const { return tau_; }

 private:
  WeightScheme scheme_;
  double tau_;
  struct Node {
    double lambda;
    double gamma;
    double weight;  // normalized posterior quadrature weight
  };
  std::vector<Node> posterior_;
};

// ---------------------------------------------------------------------------

/// Observed interim data at one dose: ascertained DLTs, ascertained
/// non-DLTs, and one weight per pending patient.
struct PendingData {
  int n = 0;
  int y = 0;
  int m = 0;
  std::vector<double> pending_weights;
};

/// Binomial-equivalent summary (n, ỹ, c̃, m̃) of interim data at one dose.
struct EffectiveData {
  int n = 0;
  int y = 0;
  int pending = 0;
  double m_eff = 0.0;

  double n_eff() const { return y + m_eff; }
  int completed() const { return n - pending; }
};

/// Complete-data state: every patient ascertained.
EffectiveData complete_data(int n, int y);

PendingData observe_dose(std::span<const PatientRecord> records, double clock,
                         const WeightModel& weights);
EffectiveData summarize(const PendingData& data);

EffectiveData effective_data(std::span<const PatientRecord> records, double clock,
                             const WeightModel& weights);
/// Convenience form: the adaptive scheme learns only from these records.
EffectiveData effective_data(std::span<const PatientRecord> records, double clock,
                             const WeightScheme& scheme, double tau);

/// Interim data for doses 1..doses at `clock` (index j is dose j+1). The
/// adaptive scheme learns from DLT times observed at every dose.
std::vector<PendingData> observe_ladder(std::span<const PatientRecord> records, int doses,
                                        double clock, const WeightScheme& scheme, double tau);

/// DLT times (from entry) visible at `clock` across the given records.
std::vector<double> observed_dlt_times(std::span<const PatientRecord> records, double clock,
                                       double tau);

/// Log of the exact interim likelihood
///   ỹ ln p + m ln(1-p) + sum_pending ln(1 - w_i p).
/// Returns -inf where p in {0,1} conflicts with the data.
double exact_log_likelihood(double p, const PendingData& data);

/// Worst-case gap between (1 - w p) and (1 - p)^w over w in [0,1]; attained
/// at w = ln(-p / ln(1-p)) / ln(1-p).
double approximation_error_bound(double p);
double approximation_error(double w, double p);

}  // namespace titekit

#include "titekit/patient_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "titekit/stats.hpp"

namespace titekit {

namespace {

void require_follow_up(double u, double tau, const char* who) {
  if (!(tau > 0.0)) throw std::domain_error(std::string(who) + ": tau must be positive");
  if (!(u >= -kClockEps) || u > tau + kClockEps) {
    throw std::domain_error(std::string(who) + ": follow-up " + std::to_string(u) +
                            " outside [0, tau]");
  }
}

double log_gamma_density(double x, const GammaPrior& prior) {
  int sign = 0;
  return prior.shape * std::log(prior.rate) - ::lgamma_r(prior.shape, &sign) +
         (prior.shape - 1.0) * std::log(x) - prior.rate * x;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

FollowUp follow_up_at(const PatientRecord& rec, double clock, double tau) {
  const double elapsed = clock - rec.entry_time;
  if (elapsed < -kClockEps) {
    throw std::domain_error("patient " + rec.id + " entered after the decision clock");
  }
  if (rec.dlt_time && *rec.dlt_time <= elapsed + kClockEps) {
    return {std::min(*rec.dlt_time, tau), true, true};
  }
  if (rec.completion_time && *rec.completion_time <= elapsed + kClockEps) {
    return {std::min(elapsed, tau), true, false};
  }
  if (elapsed >= tau - kClockEps) return {tau, true, false};
  return {std::max(elapsed, 0.0), false, false};
}

double ascertainment_time(const PatientRecord& rec, double tau) {
  double offset = tau;
  if (rec.dlt_time) offset = std::min(offset, *rec.dlt_time);
  if (rec.completion_time) offset = std::min(offset, *rec.completion_time);
  return rec.entry_time + offset;
}

// ---------------------------------------------------------------------------

void validate(const WeightScheme& scheme) {
  std::visit(overloaded{
                 [](const UniformWeight&) {},
                 [](const PiecewiseWeight& pw) {
                   double total = 0.0;
                   for (double v : pw.upsilon) {
                     if (!(v >= 0.0)) {
                       throw std::invalid_argument("piecewise weights must be non-negative");
                     }
                     total += v;
                   }
                   if (std::fabs(total - 1.0) > 1e-9) {
                     throw std::invalid_argument("piecewise weights must sum to 1");
                   }
                 },
                 [](const AdaptiveWeight& aw) {
                   if (aw.grid_points < 1) {
                     throw std::invalid_argument("adaptive weight grid is empty");
                   }
                   if (!(aw.log_lo < aw.log_hi) && aw.grid_points > 1) {
                     throw std::invalid_argument("adaptive weight grid bounds are inverted");
                   }
                   for (const auto& prior : {aw.lambda_prior, aw.gamma_prior}) {
                     if (!(prior.shape > 0.0) || !(prior.rate > 0.0)) {
                       throw std::invalid_argument("gamma prior hyperparameters must be positive");
                     }
                   }
                 },
             },
             scheme);
}

std::string scheme_name(const WeightScheme& scheme) {
  return std::visit(overloaded{
                        [](const UniformWeight&) { return std::string("uniform"); },
                        [](const PiecewiseWeight&) { return std::string("piecewise"); },
                        [](const AdaptiveWeight&) { return std::string("adaptive"); },
                    },
                    scheme);
}

double weight_uniform(double u, double tau) {
  require_follow_up(u, tau, "weight_uniform");
  return std::clamp(u / tau, 0.0, 1.0);
}

double weight_piecewise(double u, double tau, const std::array<double, 3>& upsilon) {
  require_follow_up(u, tau, "weight_piecewise");
  validate(WeightScheme{PiecewiseWeight{upsilon}});
  const auto [v1, v2, v3] = upsilon;
  const double s = std::clamp(u / tau, 0.0, 1.0);
  double w = 0.0;
  if (s <= 1.0 / 3.0) {
    w = 3.0 * v1 * s;
  } else if (s <= 2.0 / 3.0) {
    w = v1 - v2 + 3.0 * v2 * s;
  } else {
    w = v1 + v2 - 2.0 * v3 + 3.0 * v3 * s;
  }
  return std::clamp(w, 0.0, 1.0);
}

double weight_adaptive(double u, double tau, std::span<const double> observed_dlt_times,
                       const AdaptiveWeight& spec) {
  require_follow_up(u, tau, "weight_adaptive");
  return WeightModel(spec, tau, observed_dlt_times)(u);
}

WeightModel::WeightModel(WeightScheme scheme, double tau, std::span<const double> observed)
    : scheme_(std::move(scheme)), tau_(tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("assessment window must be positive");
  validate(scheme_);
  const auto* adaptive = std::get_if<AdaptiveWeight>(&scheme_);
  if (adaptive == nullptr) return;

  for (double t : observed) {
    if (!(t > 0.0) || t > tau + kClockEps) {
      throw std::domain_error("observed DLT time outside (0, tau]");
    }
  }

  // Scaled times are pulled off the boundary so a DLT on the last day does not
  // make the Beta density infinite for gamma < 1.
  std::vector<double> log_s;
  std::vector<double> log_1ms;
  for (double t : observed) {
    const double s = std::clamp(t / tau, 1e-6, 1.0 - 1e-6);
    log_s.push_back(std::log(s));
    log_1ms.push_back(std::log1p(-s));
  }
  const double sum_log_s = std::accumulate(log_s.begin(), log_s.end(), 0.0);
  const double sum_log_1ms = std::accumulate(log_1ms.begin(), log_1ms.end(), 0.0);
  const double count = static_cast<double>(observed.size());

  const int k = adaptive->grid_points;
  const double step = k > 1 ? (adaptive->log_hi - adaptive->log_lo) / (k - 1) : 1.0;
  std::vector<double> nodes(k);
  std::vector<double> trapezoid(k, step);
  for (int i = 0; i < k; ++i) nodes[i] = std::exp(adaptive->log_lo + i * step);
  if (k > 1) {
    trapezoid.front() *= 0.5;
    trapezoid.back() *= 0.5;
  }

  // Integrate in log-space: d(lambda) = lambda d(log lambda).
  std::vector<double> log_w;
  posterior_.reserve(static_cast<std::size_t>(k) * k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double lam = nodes[i];
      const double gam = nodes[j];
      double lw = log_gamma_density(lam, adaptive->lambda_prior) +
                  log_gamma_density(gam, adaptive->gamma_prior) + std::log(lam * gam) +
                  std::log(trapezoid[i] * trapezoid[j]);
      lw += (lam - 1.0) * sum_log_s + (gam - 1.0) * sum_log_1ms - count * log_beta(lam, gam);
      log_w.push_back(lw);
      posterior_.push_back({lam, gam, 0.0});
    }
  }
  const double peak = *std::max_element(log_w.begin(), log_w.end());
  double total = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    posterior_[i].weight = std::exp(log_w[i] - peak);
    total += posterior_[i].weight;
  }
  for (auto& node : posterior_) node.weight /= total;
}

double WeightModel::operator()(double u) const {
  return std::visit(overloaded{
                        [&](const UniformWeight&) { return weight_uniform(u, tau_); },
                        [&](const PiecewiseWeight& pw) {
                          return weight_piecewise(u, tau_, pw.upsilon);
                        },
                        [&](const AdaptiveWeight&) {
                          require_follow_up(u, tau_, "weight_adaptive");
                          const double s = std::clamp(u / tau_, 0.0, 1.0);
                          if (s <= 0.0) return 0.0;
                          if (s >= 1.0) return 1.0;
                          double w = 0.0;
                          for (const auto& node : posterior_) {
                            w += node.weight * beta_cdf(s, {node.lambda, node.gamma});
                          }
                          return std::clamp(w, 0.0, 1.0);
                        },
                    },
                    scheme_);
}

// ---------------------------------------------------------------------------

EffectiveData complete_data(int n, int y) {
  if (n < 0 || y < 0 || y > n) throw std::domain_error("complete_data: need 0 <= y <= n");
  return {n, y, 0, static_cast<double>(n - y)};
}

PendingData observe_dose(std::span<const PatientRecord> records, double clock,
                         const WeightModel& weights) {
  PendingData data;
  for (const auto& rec : records) {
    const FollowUp fu = follow_up_at(rec, clock, weights.tau());
    ++data.n;
    if (fu.ascertained) {
      if (fu.dlt) {
        ++data.y;
      } else {
        ++data.m;
      }
    } else {
      data.pending_weights.push_back(weights(fu.follow_up));
    }
  }
  return data;
}

EffectiveData summarize(const PendingData& data) {
  EffectiveData eff;
  eff.n = data.n;
  eff.y = data.y;
  eff.pending = static_cast<int>(data.pending_weights.size());
  eff.m_eff = data.m;
  for (double w : data.pending_weights) eff.m_eff += w;
  if (eff.pending == 0) eff.m_eff = static_cast<double>(data.m);
  return eff;
}

EffectiveData effective_data(std::span<const PatientRecord> records, double clock,
                             const WeightModel& weights) {
  if (!records.empty()) {
    const int dose = records.front().dose_level;
    for (const auto& rec : records) {
      if (rec.dose_level != dose) {
        throw std::domain_error("effective_data: records span more than one dose");
      }
    }
  }
  return summarize(observe_dose(records, clock, weights));
}

EffectiveData effective_data(std::span<const PatientRecord> records, double clock,
                             const WeightScheme& scheme, double tau) {
  const auto times = observed_dlt_times(records, clock, tau);
  return effective_data(records, clock, WeightModel(scheme, tau, times));
}

std::vector<PendingData> observe_ladder(std::span<const PatientRecord> records, int doses,
                                        double clock, const WeightScheme& scheme, double tau) {
  const auto times = observed_dlt_times(records, clock, tau);
  const WeightModel weights(scheme, tau, times);
  std::vector<PendingData> ladder(static_cast<std::size_t>(std::max(doses, 0)));
  for (const auto& rec : records) {
    if (rec.dose_level < 1 || rec.dose_level > doses) {
      throw std::domain_error("patient " + rec.id + " has dose level outside 1.." +
                              std::to_string(doses));
    }
    PendingData& d = ladder[rec.dose_level - 1];
    const FollowUp fu = follow_up_at(rec, clock, tau);
    ++d.n;
    if (!fu.ascertained) {
      d.pending_weights.push_back(weights(fu.follow_up));
    } else if (fu.dlt) {
      ++d.y;
    } else {
      ++d.m;
    }
  }
  return ladder;
}

std::vector<double> observed_dlt_times(std::span<const PatientRecord> records, double clock,
                                       double tau) {
  std::vector<double> times;
  for (const auto& rec : records) {
    const FollowUp fu = follow_up_at(rec, clock, tau);
    if (fu.dlt) times.push_back(fu.follow_up);
  }
  return times;
}

double exact_log_likelihood(double p, const PendingData& data) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("exact_log_likelihood: p outside [0,1]");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double ll = 0.0;
  if (data.y > 0) {
    if (p == 0.0) return kNegInf;
    ll += data.y * std::log(p);
  }
  if (data.m > 0) {
    if (p == 1.0) return kNegInf;
    ll += data.m * std::log1p(-p);
  }
  for (double w : data.pending_weights) {
    const double term = 1.0 - w * p;
    if (term <= 0.0) return kNegInf;
    ll += std::log(term);
  }
  return ll;
}

double approximation_error(double w, double p) {
  return std::fabs((1.0 - w * p) - std::pow(1.0 - p, w));
}

double approximation_error_bound(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("approximation_error_bound: p must lie in (0, 1)");
  }
  const double log_q = std::log1p(-p);
  const double beta = std::log(-p / log_q) / log_q;
  return (1.0 - beta * p) - std::exp(beta * log_q);
}

}  // namespace titekit

#include "titekit/json_io.hpp"

#include <set>
#include <stdexcept>
#include <string>

namespace titekit {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument(std::string("unknown field '") + key + "' in " + what);
    }
  }
}

template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if constexpr (std::is_same_v<T, int>) {
    if (!v.is_number_integer()) {
      throw std::invalid_argument(std::string("field '") + key + "' must be an integer");
    }
  } else {
    if (!v.is_number()) throw std::invalid_argument(std::string("field '") + key + "' must be a number");
  }
  out = v.get<T>();
}

}  // namespace

Json to_json(const DesignParams& p) {
  return {{"phi", p.phi},
          {"delta1", p.delta1},
          {"delta2", p.delta2},
          {"tau", p.tau},
          {"max_n", p.max_n},
          {"cohort_size", p.cohort_size},
          {"eta", p.eta},
          {"min_complete_for_escalation", p.min_complete_for_escalation},
          {"doses", p.doses}};
}

DesignParams design_params_from_json(const Json& j, const DesignParams& base) {
  reject_unknown(j,
                 {"phi", "delta1", "delta2", "tau", "max_n", "cohort_size", "eta",
                  "min_complete_for_escalation", "doses"},
                 "design parameters");
  DesignParams p = base;
  read_field(j, "phi", p.phi);
  read_field(j, "delta1", p.delta1);
  read_field(j, "delta2", p.delta2);
  read_field(j, "tau", p.tau);
  read_field(j, "max_n", p.max_n);
  read_field(j, "cohort_size", p.cohort_size);
  read_field(j, "eta", p.eta);
  read_field(j, "min_complete_for_escalation", p.min_complete_for_escalation);
  read_field(j, "doses", p.doses);
  p.validate();
  return p;
}

Json to_json(const WeightScheme& scheme) {
  if (const auto* pw = std::get_if<PiecewiseWeight>(&scheme)) {
    return {{"scheme", "piecewise"}, {"upsilon", pw->upsilon}};
  }
  if (const auto* aw = std::get_if<AdaptiveWeight>(&scheme)) {
    return {{"scheme", "adaptive"},
            {"lambda_prior", {{"shape", aw->lambda_prior.shape}, {"rate", aw->lambda_prior.rate}}},
            {"gamma_prior", {{"shape", aw->gamma_prior.shape}, {"rate", aw->gamma_prior.rate}}},
            {"grid_points", aw->grid_points},
            {"log_lo", aw->log_lo},
            {"log_hi", aw->log_hi}};
  }
  return {{"scheme", "uniform"}};
}

WeightScheme weight_scheme_from_string(std::string_view name) {
  if (name == "uniform") return UniformWeight{};
  if (name == "piecewise") return PiecewiseWeight{};
  if (name == "adaptive") return AdaptiveWeight{};
  throw std::invalid_argument("unknown weight scheme '" + std::string(name) +
                              "' (expected uniform, piecewise or adaptive)");
}

WeightScheme weight_scheme_from_json(const Json& j) {
  if (j.is_string()) return weight_scheme_from_string(j.get<std::string>());
  reject_unknown(j, {"scheme", "upsilon", "lambda_prior", "gamma_prior", "grid_points", "log_lo", "log_hi"},
                 "weight scheme");
  if (!j.contains("scheme") || !j.at("scheme").is_string()) {
    throw std::invalid_argument("weight scheme object needs a string 'scheme' field");
  }
  WeightScheme scheme = weight_scheme_from_string(j.at("scheme").get<std::string>());
  if (auto* pw = std::get_if<PiecewiseWeight>(&scheme)) {
    if (j.contains("upsilon")) {
      const Json& u = j.at("upsilon");
      if (!u.is_array() || u.size() != 3) {
        throw std::invalid_argument("piecewise 'upsilon' must be an array of three numbers");
      }
      for (int i = 0; i < 3; ++i) {
        if (!u[i].is_number()) throw std::invalid_argument("piecewise 'upsilon' entries must be numbers");
        pw->upsilon[i] = u[i].get<double>();
      }
    }
  } else if (auto* aw = std::get_if<AdaptiveWeight>(&scheme)) {
    auto read_prior = [&](const char* key, GammaPrior& prior) {
      if (!j.contains(key)) return;
      const Json& g = j.at(key);
      reject_unknown(g, {"shape", "rate"}, key);
      read_field(g, "shape", prior.shape);
      read_field(g, "rate", prior.rate);
    };
    read_prior("lambda_prior", aw->lambda_prior);
    read_prior("gamma_prior", aw->gamma_prior);
    read_field(j, "grid_points", aw->grid_points);
    read_field(j, "log_lo", aw->log_lo);
    read_field(j, "log_hi", aw->log_hi);
  } else if (j.size() > 1) {
    throw std::invalid_argument("uniform weight scheme takes no parameters");
  }
  validate(scheme);
  return scheme;
}

Json to_json(const EffectiveData& d) {
  return {{"n", d.n}, {"y", d.y}, {"pending", d.pending}, {"m_eff", d.m_eff}};
}

Scenario scenario_from_json(const Json& j) {
  reject_unknown(j,
                 {"name", "tox_probs", "tau", "accrual", "tox_time_model", "max_n", "cohort_size",
                  "start_dose"},
                 "scenario");
  Scenario s;
  if (!j.contains("tox_probs") || !j.at("tox_probs").is_array()) {
    throw std::invalid_argument("scenario needs a 'tox_probs' array");
  }
  for (const auto& p : j.at("tox_probs")) {
    if (!p.is_number()) throw std::invalid_argument("'tox_probs' entries must be numbers");
    s.tox_probs.push_back(p.get<double>());
  }
  read_field(j, "tau", s.tau);
  read_field(j, "max_n", s.max_n);
  read_field(j, "cohort_size", s.cohort_size);
  read_field(j, "start_dose", s.start_dose);
  if (j.contains("accrual")) {
    const Json& a = j.at("accrual");
    reject_unknown(a, {"rate", "model"}, "accrual");
    read_field(a, "rate", s.accrual_rate);
    if (a.contains("model")) {
      if (!a.at("model").is_string()) throw std::invalid_argument("'accrual.model' must be a string");
      s.accrual = accrual_from_string(a.at("model").get<std::string>());
    }
  }
  if (j.contains("tox_time_model")) {
    const Json& t = j.at("tox_time_model");
    reject_unknown(t, {"family", "late_fraction"}, "tox_time_model");
    if (t.contains("family") && t.at("family") != "weibull") {
      throw std::invalid_argument("only the 'weibull' time-to-toxicity family is supported");
    }
    read_field(t, "late_fraction", s.late_fraction);
  }
  s.validate();
  return s;
}

Json to_json(const Scenario& s) {
  return {{"tox_probs", s.tox_probs},
          {"tau", s.tau},
          {"accrual", {{"rate", s.accrual_rate}, {"model", std::string(to_string(s.accrual))}}},
          {"tox_time_model", {{"family", "weibull"}, {"late_fraction", s.late_fraction}}},
          {"max_n", s.max_n},
          {"cohort_size", s.cohort_size},
          {"start_dose", s.start_dose}};
}

Json to_json(const OperatingCharacteristics& oc) {
  return {{"replicates", oc.replicates},
          {"master_seed", oc.master_seed},
          {"accrual", std::string(to_string(oc.accrual))},
          {"true_mtd", oc.true_mtd},
          {"selection_pct", oc.selection_pct},
          {"allocation_pct", oc.allocation_pct},
          {"dlt_rate", oc.dlt_rate},
          {"mean_duration", oc.mean_duration},
          {"stop_pct", oc.stop_pct},
          {"poor_allocation_pct", oc.poor_allocation_pct},
          {"overdose_pct", oc.overdose_pct}};
}

}  // namespace titekit

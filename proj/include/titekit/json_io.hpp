#pragma once

// JSON conversions for the configuration types shared by the CLI, the
// simulator's scenario files and the conduct service. Parsers fill absent
// fields from `base` and reject unknown keys, wrong types and invalid values
// with std::invalid_argument.

#include "json.hpp"
#include "titekit/keyboard.hpp"
#include "titekit/patient_data.hpp"
#include "titekit/simulator.hpp"

namespace titekit {

using Json = nlohmann::json;

Json to_json(const DesignParams& params);
DesignParams design_params_from_json(const Json& j, const DesignParams& base = {});

Json to_json(const WeightScheme& scheme);
/// Accepts "uniform" / "piecewise" / "adaptive" or an object with a "scheme" key.
WeightScheme weight_scheme_from_json(const Json& j);
WeightScheme weight_scheme_from_string(std::string_view name);

Json to_json(const EffectiveData& data);

/// Fields: tox_probs (required), tau, accrual {rate, model},
/// tox_time_model {family, late_fraction}, max_n, cohort_size, start_dose,
/// and an optional free-text name.
Scenario scenario_from_json(const Json& j);
Json to_json(const Scenario& scenario);

Json to_json(const OperatingCharacteristics& oc);

}  // namespace titekit

#pragma once

#include <filesystem>
#include <variant>

#include <json.hpp>

#include "maxent/calibration.hpp"
#include "maxent/finance.hpp"
#include "maxent/multivariate.hpp"
#include "maxent/statistics.hpp"
#include "maxent/univariate.hpp"

namespace maxent {

using Json = nlohmann::json;

/// Non-finite doubles become the strings "Infinity", "-Infinity" and "NaN".
Json number(double v);
double read_number(const Json& j);

Json to_json(const MultiplierSet& ms);
MultiplierSet multipliers_from_json(const Json& j);

Json to_json(const MarginConstraints& c);
MarginConstraints margins_from_json(const Json& j);

Json to_json(const MultivariateModel& m);
MultivariateModel multivariate_from_json(const Json& j);

Json to_json(const UnivariateModel& m);
UnivariateModel univariate_from_json(const Json& j);

Json to_json(const CalibrationResult& r);
Json to_json(const UnivariateCalibration& r);
Json to_json(const KsResult& r);
Json to_json(const AnomalyReport& r);
Json to_json(const BacktestReport& r);
Json to_json(const OosSeries& s);

using AnyModel = std::variant<MultivariateModel, UnivariateModel>;

void save_json(const Json& j, const std::filesystem::path& path);
Json load_json(const std::filesystem::path& path);
/// Dispatches on the "kind" field.
AnyModel load_model(const std::filesystem::path& path);

} // namespace maxent

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mili/evalbench/bench.hpp"

namespace mili::io {

// JSON forms of the stage outputs.
nlohmann::ordered_json tasks_to_json(const world::TaskSets& tasks);
world::TaskSets tasks_from_json(const nlohmann::json& j);
nlohmann::ordered_json eval_to_json(const eval::EvalResult& result);
eval::EvalResult eval_from_json(const nlohmann::json& j);
nlohmann::ordered_json report_to_json(const core::IterationReport& report);
core::IterationReport report_from_json(const nlohmann::json& j);
nlohmann::ordered_json curve_to_json(std::span<const policy::CurvePoint> curve);
std::vector<policy::CurvePoint> curve_from_json(const nlohmann::json& j);

// Rows of the four metrics tables. Every table has a fixed header and
// formats reals with a fixed number of digits so reruns are byte-identical.
struct PairingRow {
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  core::IterationReport report;
};

struct CurveRow {
  std::uint64_t seed = 0;
  std::string run;
  policy::CurvePoint point;
};

// method, family, mean_success, std_err, seeds; families plus "overall".
std::string method_comparison_csv(std::span<const eval::EvalResult> results);
// budget, mean_success, std_err; results keyed by budget (0 = meta-imitation).
std::string trial_sweep_csv(const std::map<std::size_t, std::vector<double>>& success_by_budget);
std::string pairing_quality_csv(std::span<const PairingRow> rows);
std::string training_curves_csv(std::span<const CurveRow> rows);

}  // namespace mili::io

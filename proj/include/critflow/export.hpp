#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "critflow/genericity_lab.hpp"
#include "critflow/viscosity_limit.hpp"

/**
 * \file export.hpp
 *
 * @brief CSV and JSON serialization of trajectories, atlases, costs, limits and genericity reports.
 *
 * CSV numbers carry 17 significant digits with '.' as decimal separator. JSON numbers are emitted at full precision;
 * non-finite values become null.
 */

namespace critflow {

using Json = nlohmann::ordered_json;

/// %.17g, or "nan"/"inf"/"-inf".
std::string format_number(double x);

/// Columns t, u_1..u_d, energy, slope, power, dissipation_density.
std::string trajectory_csv(const Trajectory& traj);

/// Columns s, theta_1..theta_d, slope, energy.
std::string witness_csv(const TransitionCurve& curve);

/// Columns epsilon, inside, outside, windows.
std::string localization_csv(const LocalizationReport& rep);

/// Columns t, u_1..u_d, in_window.
std::string limit_csv(const LimitEstimate& limit);

Json number(double x);
Json vec_json(const Vec& v);
Json to_json(const ComponentId& id);
Json to_json(const ComponentRef& ref);
Json to_json(const CriticalPoint& cp);
Json to_json(const TransversalityReport& r);
Json to_json(const Atlas& atlas);
Json to_json(const LusinReport& r);
Json to_json(const CostMatrix& m);
Json to_json(const CostResult& r);
Json to_json(const JumpWindow& w);
Json to_json(const JumpRecord& j);
Json to_json(const LimitEstimate& limit);
Json to_json(const LocalizationReport& rep);
Json to_json(const GenericityReport& rep);
Json to_json(const ConsistencyReport& rep);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace critflow

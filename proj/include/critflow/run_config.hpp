#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "critflow/export.hpp"

namespace critflow {

class ConfigError : public Error {
public:
  using Error::Error;
};

enum class Scenario { flow, sweep, atlas, cost, jumps, generic, report };

std::string to_string(Scenario s);

struct FlowSection {
  double epsilon = 0.1;
  double step = 1e-3;
  std::vector<double> u0;
  bool refine = false;
};

struct SweepSection {
  std::vector<double> epsilons{0.1, 0.03, 0.01, 0.003};
  std::vector<double> u0;
  double base_step = 1e-3;
  double eps_fraction = 1.0 / 20;
  bool refine = false;
};

struct AtlasSection {
  double rho = 10;
  int t_grid = 5;
  int seed_grid = 7;
  double arc_step = 0.01;
  double s_max = 50;
  int coverage_probes = 16;
};

struct CostSection {
  double t = 0;
};

struct GenericSection {
  double radius = 0.1;
  int count = 100;
  std::string mode = "linear";
};

struct ConsistencySection {
  int samples = 1000;
  double rho = 10;
};

struct RunConfig {
  std::string model_name;
  ParamMap model_params;
  Scenario scenario = Scenario::flow;
  std::filesystem::path output_dir = "critflow_out";
  std::uint64_t seed = 1;
  FlowSection flow;
  SweepSection sweep;
  AtlasSection atlas;
  CostSection cost;
  GenericSection generic;
  ConsistencySection consistency;
  /// the parsed document, normalized to JSON
  Json source;
};

/// TOML unless the extension is .json. Throws ConfigError on syntax or schema violations.
RunConfig load_config(const std::filesystem::path& path);

/// Schema validation of an already parsed document.
RunConfig config_from_json(const Json& doc);

/// The effective configuration, including defaults and overrides.
Json config_echo(const RunConfig& cfg);

}  // namespace critflow

#include "critflow/run_config.hpp"

#include <fmt/core.h>

#include <fstream>
#include <set>

#include <toml.hpp>

namespace critflow {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::flow: return "flow";
    case Scenario::sweep: return "sweep";
    case Scenario::atlas: return "atlas";
    case Scenario::cost: return "cost";
    case Scenario::jumps: return "jumps";
    case Scenario::generic: return "generic";
    case Scenario::report: return "report";
  }
  return "?";
}

namespace {

Json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    Json j = Json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    Json j = Json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError(fmt::format("unsupported TOML value of type {}", static_cast<int>(node.type())));
}

void only_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{}: expected a table", where));
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ConfigError(fmt::format("{}: unknown key '{}'", where, k));
  }
}

double get_number(const Json& obj, const char* key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(fmt::format("{}.{}: expected a number", where, key));
  return v.get<double>();
}

int get_int(const Json& obj, const char* key, int fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(fmt::format("{}.{}: expected an integer", where, key));
  return v.get<int>();
}

bool get_bool(const Json& obj, const char* key, bool fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(fmt::format("{}.{}: expected a boolean", where, key));
  return v.get<bool>();
}

std::string get_string(const Json& obj, const char* key, const std::string& fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(fmt::format("{}.{}: expected a string", where, key));
  return v.get<std::string>();
}

std::vector<double> get_numbers(const Json& obj, const char* key, std::vector<double> fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(fmt::format("{}.{}: expected an array of numbers", where, key));
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(fmt::format("{}.{}: expected an array of numbers", where, key));
    out.push_back(x.get<double>());
  }
  return out;
}

const Json& section(const Json& doc, const char* key) {
  static const Json empty = Json::object();
  return doc.contains(key) ? doc.at(key) : empty;
}

Scenario scenario_from(const std::string& s) {
  for (Scenario c : {Scenario::flow, Scenario::sweep, Scenario::atlas, Scenario::cost, Scenario::jumps, Scenario::generic,
                     Scenario::report}) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError(fmt::format("scenario: unknown value '{}'", s));
}

void positive(double x, const char* what) {
  if (!(x > 0)) throw ConfigError(fmt::format("{} must be positive", what));
}

}  // namespace

RunConfig config_from_json(const Json& doc) {
  only_keys(doc, "config", {"scenario", "seed", "output_dir", "model", "flow", "sweep", "atlas", "cost", "generic", "consistency"});
  RunConfig cfg;
  cfg.source = doc;
  if (!doc.contains("scenario")) throw ConfigError("config: missing 'scenario'");
  cfg.scenario = scenario_from(get_string(doc, "scenario", "", "config"));
  if (doc.contains("seed")) {
    const auto& s = doc.at("seed");
    if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError("config.seed: expected a nonnegative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  cfg.output_dir = get_string(doc, "output_dir", cfg.output_dir.string(), "config");

  if (!doc.contains("model")) throw ConfigError("config: missing [model]");
  const Json& model = doc.at("model");
  only_keys(model, "model", {"name", "params"});
  cfg.model_name = get_string(model, "name", "", "model");
  if (cfg.model_name.empty()) throw ConfigError("model.name: required");
  if (model.contains("params")) {
    const Json& p = model.at("params");
    if (!p.is_object()) throw ConfigError("model.params: expected a table");
    for (const auto& [k, v] : p.items()) {
      if (!v.is_number()) throw ConfigError(fmt::format("model.params.{}: expected a number", k));
      cfg.model_params[k] = v.get<double>();
    }
  }

  const Json& f = section(doc, "flow");
  only_keys(f, "flow", {"epsilon", "step", "u0", "refine"});
  cfg.flow.epsilon = get_number(f, "epsilon", cfg.flow.epsilon, "flow");
  cfg.flow.step = get_number(f, "step", cfg.flow.step, "flow");
  cfg.flow.u0 = get_numbers(f, "u0", {}, "flow");
  cfg.flow.refine = get_bool(f, "refine", false, "flow");
  positive(cfg.flow.epsilon, "flow.epsilon");
  positive(cfg.flow.step, "flow.step");

  const Json& s = section(doc, "sweep");
  only_keys(s, "sweep", {"epsilons", "u0", "base_step", "eps_fraction", "refine"});
  cfg.sweep.epsilons = get_numbers(s, "epsilons", cfg.sweep.epsilons, "sweep");
  cfg.sweep.u0 = get_numbers(s, "u0", {}, "sweep");
  cfg.sweep.base_step = get_number(s, "base_step", cfg.sweep.base_step, "sweep");
  cfg.sweep.eps_fraction = get_number(s, "eps_fraction", cfg.sweep.eps_fraction, "sweep");
  cfg.sweep.refine = get_bool(s, "refine", false, "sweep");
  if (cfg.sweep.epsilons.size() < 2) throw ConfigError("sweep.epsilons: at least two values required");
  for (std::size_t i = 0; i < cfg.sweep.epsilons.size(); ++i) {
    positive(cfg.sweep.epsilons[i], "sweep.epsilons");
    if (i && !(cfg.sweep.epsilons[i] < cfg.sweep.epsilons[i - 1])) throw ConfigError("sweep.epsilons: must be strictly decreasing");
  }
  positive(cfg.sweep.base_step, "sweep.base_step");
  positive(cfg.sweep.eps_fraction, "sweep.eps_fraction");

  const Json& a = section(doc, "atlas");
  only_keys(a, "atlas", {"rho", "t_grid", "seed_grid", "arc_step", "s_max", "coverage_probes"});
  cfg.atlas.rho = get_number(a, "rho", cfg.atlas.rho, "atlas");
  cfg.atlas.t_grid = get_int(a, "t_grid", cfg.atlas.t_grid, "atlas");
  cfg.atlas.seed_grid = get_int(a, "seed_grid", cfg.atlas.seed_grid, "atlas");
  cfg.atlas.arc_step = get_number(a, "arc_step", cfg.atlas.arc_step, "atlas");
  cfg.atlas.s_max = get_number(a, "s_max", cfg.atlas.s_max, "atlas");
  cfg.atlas.coverage_probes = get_int(a, "coverage_probes", cfg.atlas.coverage_probes, "atlas");
  if (!(cfg.atlas.rho > 1)) throw ConfigError("atlas.rho must exceed 1");
  if (cfg.atlas.t_grid < 1 || cfg.atlas.seed_grid < 1) throw ConfigError("atlas grids must be positive");
  positive(cfg.atlas.arc_step, "atlas.arc_step");
  positive(cfg.atlas.s_max, "atlas.s_max");
  if (cfg.atlas.coverage_probes < 0) throw ConfigError("atlas.coverage_probes must be nonnegative");

  const Json& c = section(doc, "cost");
  only_keys(c, "cost", {"t"});
  cfg.cost.t = get_number(c, "t", cfg.cost.t, "cost");

  const Json& g = section(doc, "generic");
  only_keys(g, "generic", {"radius", "count", "mode"});
  cfg.generic.radius = get_number(g, "radius", cfg.generic.radius, "generic");
  cfg.generic.count = get_int(g, "count", cfg.generic.count, "generic");
  cfg.generic.mode = get_string(g, "mode", cfg.generic.mode, "generic");
  if (!(cfg.generic.radius >= 0)) throw ConfigError("generic.radius must be nonnegative");
  if (cfg.generic.count < 1) throw ConfigError("generic.count must be positive");
  if (cfg.generic.mode != "linear" && cfg.generic.mode != "linear_quadratic") {
    throw ConfigError(fmt::format("generic.mode: unknown value '{}'", cfg.generic.mode));
  }

  const Json& k = section(doc, "consistency");
  only_keys(k, "consistency", {"samples", "rho"});
  cfg.consistency.samples = get_int(k, "samples", cfg.consistency.samples, "consistency");
  cfg.consistency.rho = get_number(k, "rho", cfg.consistency.rho, "consistency");
  if (cfg.consistency.samples < 1) throw ConfigError("consistency.samples must be positive");
  if (!(cfg.consistency.rho > 1)) throw ConfigError("consistency.rho must exceed 1");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  Json doc;
  if (path.extension() == ".json") {
    try {
      doc = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
  } else {
    try {
      doc = toml_to_json(toml::parse(text, path.string()));
    } catch (const toml::parse_error& e) {
      throw ConfigError(fmt::format("{}: {} (line {})", path.string(), e.description(), e.source().begin.line));
    }
  }
  return config_from_json(doc);
}

Json config_echo(const RunConfig& cfg) {
  Json j;
  j["scenario"] = to_string(cfg.scenario);
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.generic_string();
  Json params = Json::object();
  for (const auto& [k, v] : cfg.model_params) params[k] = v;
  j["model"] = {{"name", cfg.model_name}, {"params", params}};
  j["flow"] = {{"epsilon", cfg.flow.epsilon}, {"step", cfg.flow.step}, {"u0", cfg.flow.u0}, {"refine", cfg.flow.refine}};
  j["sweep"] = {{"epsilons", cfg.sweep.epsilons},
                {"u0", cfg.sweep.u0},
                {"base_step", cfg.sweep.base_step},
                {"eps_fraction", cfg.sweep.eps_fraction},
                {"refine", cfg.sweep.refine}};
  j["atlas"] = {{"rho", cfg.atlas.rho},
                {"t_grid", cfg.atlas.t_grid},
                {"seed_grid", cfg.atlas.seed_grid},
                {"arc_step", cfg.atlas.arc_step},
                {"s_max", cfg.atlas.s_max},
                {"coverage_probes", cfg.atlas.coverage_probes}};
  j["cost"] = {{"t", cfg.cost.t}};
  j["generic"] = {{"radius", cfg.generic.radius}, {"count", cfg.generic.count}, {"mode", cfg.generic.mode}};
  j["consistency"] = {{"samples", cfg.consistency.samples}, {"rho", cfg.consistency.rho}};
  return j;
}

}  // namespace critflow

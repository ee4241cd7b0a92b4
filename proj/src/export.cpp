#include "critflow/export.hpp"

#include <fmt/core.h>

#include <cmath>
#include <fstream>

namespace critflow {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", x);
}

namespace {

std::string header_with_vector(const std::string& first, const std::string& prefix, int d, const std::string& rest) {
  std::string h = first;
  for (int i = 1; i <= d; ++i) h += fmt::format(",{}_{}", prefix, i);
  return h + rest + "\n";
}

void append_vec(std::string& line, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    line += ',';
    line += format_number(v[i]);
  }
}

}  // namespace

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = header_with_vector("t", "u", traj.dim(), ",energy,slope,power,dissipation_density");
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::string line = format_number(traj.times[k]);
    append_vec(line, traj.states[k]);
    for (double x : {traj.energies[k], traj.slopes[k], traj.powers[k], traj.dissipation_density[k]}) {
      line += ',';
      line += format_number(x);
    }
    out += line + "\n";
  }
  return out;
}

std::string witness_csv(const TransitionCurve& curve) {
  const int d = curve.nodes.empty() ? 0 : static_cast<int>(curve.nodes.front().size());
  std::string out = header_with_vector("s", "theta", d, ",slope,energy");
  for (std::size_t k = 0; k < curve.size(); ++k) {
    std::string line = format_number(curve.params[k]);
    append_vec(line, curve.nodes[k]);
    line += ',' + format_number(curve.slopes[k]) + ',' + format_number(curve.energies[k]);
    out += line + "\n";
  }
  return out;
}

std::string localization_csv(const LocalizationReport& rep) {
  std::string out = "epsilon,inside,outside,windows\n";
  for (const auto& r : rep.rows) {
    out += fmt::format("{},{},{},{}\n", format_number(r.epsilon), format_number(r.inside), format_number(r.outside), r.windows);
  }
  return out;
}

std::string limit_csv(const LimitEstimate& limit) {
  const int d = limit.limit_states.empty() ? 0 : static_cast<int>(limit.limit_states.front().size());
  std::string out = header_with_vector("t", "u", d, ",in_window");
  for (std::size_t k = 0; k < limit.times.size(); ++k) {
    std::string line = format_number(limit.times[k]);
    append_vec(line, limit.limit_states[k]);
    line += limit.in_window[k] ? ",1" : ",0";
    out += line + "\n";
  }
  return out;
}

Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

namespace {

Json optional_number(const std::optional<double>& x) { return x ? number(*x) : Json(nullptr); }

}  // namespace

Json to_json(const ComponentId& id) { return to_string(id); }

Json to_json(const ComponentRef& ref) {
  Json j;
  j["kind"] = ref.kind == ComponentKind::critical_component ? "critical_component" : "noncritical_singleton";
  j["t"] = number(ref.t);
  j["representative"] = vec_json(ref.representative);
  j["component_id"] = ref.id ? to_json(*ref.id) : Json(nullptr);
  return j;
}

Json to_json(const CriticalPoint& cp) {
  Json j;
  j["t"] = number(cp.t);
  j["u"] = vec_json(cp.u);
  j["residual"] = number(cp.residual);
  j["spectrum"] = vec_json(cp.spectrum);
  j["kernel_dim"] = cp.kernel_dim;
  j["morse_index"] = cp.morse_index;
  j["classification"] = to_string(cp.classification);
  return j;
}

Json to_json(const TransversalityReport& r) {
  Json j;
  j["kernel_dim"] = r.kernel_dim;
  j["t2_value"] = optional_number(r.t2_value);
  j["t3_value"] = optional_number(r.t3_value);
  j["passes_T1"] = r.passes_T1;
  j["passes_T2"] = r.passes_T2;
  j["passes_T3"] = r.passes_T3;
  return j;
}

Json to_json(const Atlas& atlas) {
  Json j;
  j["rho"] = number(atlas.rho);
  j["t_min"] = number(atlas.t_min);
  j["t_max"] = number(atlas.t_max);
  j["autonomous"] = atlas.autonomous;
  j["arc_step"] = number(atlas.arc_step);
  j["fold_count"] = atlas.fold_count();
  Json branches = Json::array();
  for (const auto& b : atlas.branches) {
    Json jb;
    jb["kind"] = b.kind == BranchKind::time_curve ? "time_curve" : "fixed_time_loop";
    jb["closed"] = b.closed;
    jb["truncated"] = b.truncated;
    jb["stop_forward"] = b.stop_forward;
    jb["stop_backward"] = b.stop_backward;
    jb["folds"] = b.folds;
    Json samples = Json::array();
    for (const auto& s : b.samples) {
      Json js;
      js["s"] = number(s.s);
      js["t"] = number(s.t);
      js["u"] = vec_json(s.u);
      js["spectrum"] = vec_json(s.spectrum);
      js["fold"] = s.fold;
      js["sheet"] = s.sheet;
      samples.push_back(std::move(js));
    }
    jb["samples"] = std::move(samples);
    branches.push_back(std::move(jb));
  }
  j["branches"] = std::move(branches);
  Json iso = Json::array();
  for (const auto& p : atlas.isolated) iso.push_back(to_json(p));
  j["isolated"] = std::move(iso);
  j["coverage"] = {{"probes", atlas.coverage.probes},
                   {"roots_found", atlas.coverage.roots_found},
                   {"uncovered", atlas.coverage.uncovered},
                   {"max_distance", number(atlas.coverage.max_distance)}};
  return j;
}

Json to_json(const LusinReport& r) {
  Json j;
  j["t"] = number(r.t);
  Json values = Json::array(), spreads = Json::array();
  for (double v : r.values) values.push_back(number(v));
  for (double s : r.spreads) spreads.push_back(number(s));
  j["values"] = std::move(values);
  j["spreads"] = std::move(spreads);
  j["component_count"] = r.component_count;
  j["distinct_count"] = r.distinct_count;
  j["outer_estimate"] = number(r.outer_estimate);
  return j;
}

Json to_json(const CostMatrix& m) {
  Json j;
  j["t"] = number(m.t);
  Json comps = Json::array();
  for (const auto& c : m.components) {
    Json jc = to_json(c.ref);
    jc["energy"] = number(c.energy);
    jc["continuum"] = c.continuum();
    jc["classification"] = to_string(c.critical.classification);
    comps.push_back(std::move(jc));
  }
  j["components"] = std::move(comps);
  Json rows = Json::array();
  for (const auto& row : m.values) {
    Json r = Json::array();
    for (const auto& v : row) r.push_back(optional_number(v));
    rows.push_back(std::move(r));
  }
  j["values"] = std::move(rows);
  return j;
}

Json to_json(const CostResult& r) {
  Json j;
  j["value"] = optional_number(r.value);
  j["reachable"] = r.reachable();
  j["method"] = to_string(r.method);
  j["lower_bound_gap"] = optional_number(r.lower_bound_gap);
  j["path"] = r.path;
  j["witness_nodes"] = r.curve.size();
  j["witness_slope_weighted_length"] = number(r.curve.slope_weighted_length);
  j["endpoints"] = Json::array({to_json(r.curve.endpoints[0]), to_json(r.curve.endpoints[1])});
  return j;
}

Json to_json(const JumpWindow& w) {
  return Json{{"begin", number(w.begin)},
              {"end", number(w.end)},
              {"barycenter", number(w.barycenter)},
              {"fast_begin", number(w.fast_begin)},
              {"fast_end", number(w.fast_end)},
              {"mass", number(w.mass)},
              {"initial", w.initial}};
}

Json to_json(const JumpRecord& r) {
  Json j;
  j["t_jump"] = number(r.t_jump);
  j["t_raw"] = number(r.t_raw);
  j["t_cert"] = number(r.t_cert);
  j["initial"] = r.initial;
  j["resolved"] = r.resolved;
  j["window"] = to_json(r.window);
  j["left_component"] = to_json(r.left_component);
  j["right_component"] = to_json(r.right_component);
  j["energy_drop"] = number(r.energy_drop);
  j["cost_value"] = optional_number(r.cost_value);
  j["local_mu_mass"] = number(r.local_mu_mass);
  j["note"] = r.note;
  return j;
}

Json to_json(const LimitEstimate& limit) {
  Json j;
  j["epsilon"] = number(limit.epsilon);
  j["bv_balance_residual"] = number(limit.bv_balance_residual);
  j["max_offjump_slope"] = number(limit.max_offjump_slope);
  j["criticality_constant"] = number(limit.criticality_constant);
  j["cross_validation_gap"] = number(limit.cross_validation_gap);
  j["windows_smallest"] = limit.windows_smallest;
  j["windows_second"] = limit.windows_second;
  Json jumps = Json::array();
  for (const auto& r : limit.jumps) jumps.push_back(to_json(r));
  j["jumps"] = std::move(jumps);
  Json times = Json::array(), states = Json::array();
  for (std::size_t k = 0; k < limit.times.size(); ++k) {
    times.push_back(number(limit.times[k]));
    states.push_back(vec_json(limit.limit_states[k]));
  }
  j["times"] = std::move(times);
  j["states"] = std::move(states);
  return j;
}

Json to_json(const LocalizationReport& rep) {
  Json j;
  Json rows = Json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"epsilon", number(r.epsilon)}, {"inside", number(r.inside)}, {"outside", number(r.outside)}, {"windows", r.windows}});
  }
  j["rows"] = std::move(rows);
  j["target"] = number(rep.target);
  j["tail_begin"] = rep.tail_begin;
  j["outside_decreasing"] = rep.outside_decreasing;
  j["inside_approaching"] = rep.inside_approaching;
  j["final_ratio"] = number(rep.final_ratio);
  j["passes"] = rep.passes;
  return j;
}

Json to_json(const GenericityReport& rep) {
  Json j;
  j["mode"] = to_string(rep.mode);
  j["radius"] = number(rep.radius);
  j["count"] = rep.count;
  j["seed"] = rep.seed;
  j["passed"] = rep.passed;
  j["failed"] = rep.failed;
  j["inconclusive"] = rep.inconclusive;
  j["pass_fraction"] = number(rep.pass_fraction);
  Json samples = Json::array();
  for (const auto& s : rep.samples) {
    Json js;
    js["index"] = s.index;
    js["seed"] = s.seed;
    js["linear"] = vec_json(s.perturbation.linear);
    Json q = Json::array();
    for (const auto& w : s.perturbation.quadratic_vectors) q.push_back(vec_json(w));
    js["quadratic_vectors"] = std::move(q);
    js["inconclusive"] = s.inconclusive;
    js["passes"] = s.passes;
    js["degenerate_points"] = s.degenerate_points;
    js["failing_points"] = s.failing_points;
    js["note"] = s.note;
    samples.push_back(std::move(js));
  }
  j["samples"] = std::move(samples);
  return j;
}

Json to_json(const ConsistencyReport& rep) {
  Json j;
  j["passed"] = rep.passed;
  j["samples"] = rep.samples;
  j["max_gradient_fd_error"] = number(rep.max_gradient_fd_error);
  j["max_power_fd_error"] = number(rep.max_power_fd_error);
  j["max_hessian_fd_error"] = number(rep.max_hessian_fd_error);
  j["max_hessian_asymmetry"] = number(rep.max_hessian_asymmetry);
  j["min_lambda_margin"] = number(rep.min_lambda_margin);
  j["min_power_margin"] = number(rep.min_power_margin);
  j["min_gronwall_margin"] = number(rep.min_gronwall_margin);
  j["min_convexity_margin"] = number(rep.min_convexity_margin);
  j["min_shifted_energy"] = number(rep.min_shifted_energy);
  j["failures"] = rep.failures;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace critflow

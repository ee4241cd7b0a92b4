#include "critflow/runner.hpp"

#include <fmt/core.h>

#include <Eigen/Core>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <set>

#include "critflow/run_config.hpp"
#include "critflow/svg_plot.hpp"

namespace critflow {

unsigned threads_from_environment() {
  const char* env = std::getenv("CRITFLOW_THREADS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) return 0;
  return static_cast<unsigned>(v);
}

namespace {

class Session {
public:
  Session(RunConfig cfg, const RunOptions& opts) : cfg_(std::move(cfg)), opts_(opts) {
    threads_ = opts.threads ? opts.threads : threads_from_environment();
  }

  const RunConfig& config() const { return cfg_; }

  void log(const std::string& msg) const {
    if (!opts_.quiet) fmt::print("{}\n", msg);
  }

  void text(const std::string& name, const std::string& body) {
    write_text(cfg_.output_dir / name, body);
    outputs_.insert(name);
  }
  void json(const std::string& name, const Json& body) {
    write_json(cfg_.output_dir / name, body);
    outputs_.insert(name);
  }
  void svg(const std::string& name, const LinePlot& plot) {
    if (opts_.no_plots) return;
    text(name, render_svg(plot));
  }

  const std::set<std::string>& outputs() const { return outputs_; }
  unsigned threads() const { return threads_; }

private:
  RunConfig cfg_;
  RunOptions opts_;
  std::set<std::string> outputs_;
  unsigned threads_ = 0;
};

Vec to_vec(const std::vector<double>& v, int dim, const char* what) {
  if (v.empty()) throw ConfigError(fmt::format("{}: required for this scenario", what));
  if (static_cast<int>(v.size()) != dim) {
    throw ConfigError(fmt::format("{}: expected {} entries, got {}", what, dim, v.size()));
  }
  return Eigen::Map<const Vec>(v.data(), dim);
}

LinePlot trajectory_plot(const Trajectory& traj, const std::string& title) {
  LinePlot p;
  p.title = title;
  p.x_label = "t";
  p.y_label = "u";
  for (int i = 0; i < traj.dim(); ++i) {
    Series s;
    s.name = fmt::format("u_{}", i + 1);
    s.x = traj.times;
    for (const auto& u : traj.states) s.y.push_back(u[i]);
    p.series.push_back(std::move(s));
  }
  return p;
}

AtlasOptions atlas_options(const RunConfig& cfg) {
  AtlasOptions a;
  a.arc_step = cfg.atlas.arc_step;
  a.s_max = cfg.atlas.s_max;
  a.seed = cfg.seed;
  a.coverage_probes = cfg.atlas.coverage_probes;
  return a;
}

StepPolicy step_policy(const RunConfig& cfg) {
  StepPolicy p;
  p.base_step = cfg.sweep.base_step;
  p.eps_fraction = cfg.sweep.eps_fraction;
  p.refine_fast_transitions = cfg.sweep.refine;
  return p;
}

void scenario_flow(Session& s, const EnergyModel& model) {
  const auto& cfg = s.config();
  FlowConfig fc;
  fc.epsilon = cfg.flow.epsilon;
  fc.step = cfg.flow.step;
  fc.refine_fast_transitions = cfg.flow.refine;
  const Vec u0 = to_vec(cfg.flow.u0, model.dim(), "flow.u0");
  try {
    validate(fc, model);
  } catch (const IntegrationError& e) {
    throw ConfigError(e.what());
  }
  const Trajectory traj = integrate(model, fc, u0);
  s.text("trajectory.csv", trajectory_csv(traj));
  Json j;
  j["epsilon"] = number(traj.epsilon);
  j["step"] = number(traj.size() > 1 ? traj.step_length(1) : 0.0);
  j["nodes"] = traj.size();
  j["energy_identity_residual"] = number(energy_identity_residual(model, traj));
  j["total_dissipation"] = number(dissipation_measure(traj, 0, traj.horizon()));
  j["slope_displacement_sum"] = number(slope_displacement_sum(traj));
  j["final_state"] = vec_json(traj.states.back());
  s.json("flow.json", j);
  s.svg("plot.svg", trajectory_plot(traj, fmt::format("{} flow, eps = {}", model.name(), traj.epsilon)));
  LinePlot e;
  e.title = "energy along the flow";
  e.x_label = "t";
  e.y_label = "E(t,u(t))";
  e.series.push_back({"energy", traj.times, traj.energies, false});
  s.svg("energy.svg", e);
  s.log(fmt::format("flow: {} nodes, energy identity residual {:.3e}", traj.size(), energy_identity_residual(model, traj)));
}

SweepResult run_sweep(Session& s, const EnergyModel& model) {
  const auto& cfg = s.config();
  const Vec u0 = to_vec(cfg.sweep.u0, model.dim(), "sweep.u0");
  const StepPolicy policy = step_policy(cfg);
  for (double eps : cfg.sweep.epsilons) {
    FlowConfig fc;
    fc.epsilon = eps;
    fc.step = policy.step_for(eps);
    try {
      validate(fc, model);
    } catch (const IntegrationError& e) {
      throw ConfigError(e.what());
    }
  }
  SweepResult sw = sweep(model, u0, cfg.sweep.epsilons, policy, s.threads());
  Json j;
  j["u0"] = vec_json(sw.u0);
  Json rows = Json::array();
  for (std::size_t i = 0; i < sw.trajectories.size(); ++i) {
    const auto& tr = sw.trajectories[i];
    const std::string name = fmt::format("trajectories/eps_{}.csv", i);
    s.text(name, trajectory_csv(tr));
    Json r;
    r["epsilon"] = number(tr.epsilon);
    r["step"] = number(tr.step_length(1));
    r["nodes"] = tr.size();
    r["energy_identity_residual"] = number(energy_identity_residual(model, tr));
    Json ws = Json::array();
    for (const auto& w : detect_jump_windows(tr)) ws.push_back(to_json(w));
    r["windows"] = std::move(ws);
    r["file"] = name;
    if (i > 0) r["hausdorff_to_previous"] = number(graph_hausdorff(sw.trajectories[i - 1], tr));
    rows.push_back(std::move(r));
  }
  j["trajectories"] = std::move(rows);
  Json failures = Json::array();
  for (const auto& f : sw.failures) failures.push_back({{"epsilon", number(f.epsilon)}, {"message", f.message}});
  j["failures"] = std::move(failures);
  s.json("sweep.json", j);

  LinePlot p;
  p.title = fmt::format("{} sweep", model.name());
  p.x_label = "t";
  p.y_label = "u_1";
  for (const auto& tr : sw.trajectories) {
    Series ser;
    ser.name = fmt::format("eps = {}", tr.epsilon);
    ser.x = tr.times;
    for (const auto& u : tr.states) ser.y.push_back(u[0]);
    p.series.push_back(std::move(ser));
  }
  s.svg("sweep.svg", p);
  if (!sw.failures.empty()) s.log(fmt::format("sweep: {} trajectories failed", sw.failures.size()));
  s.log(fmt::format("sweep: {} trajectories", sw.trajectories.size()));
  return sw;
}

void mu_outputs(Session& s, const LocalizationReport& rep) {
  s.text("mu_masses.csv", localization_csv(rep));
  LinePlot p;
  p.title = "dissipation inside and outside jump windows";
  p.x_label = "epsilon";
  p.y_label = "mass";
  p.log_x = true;
  Series in{"inside", {}, {}, false}, out{"outside", {}, {}, false};
  for (const auto& r : rep.rows) {
    in.x.push_back(r.epsilon);
    in.y.push_back(r.inside);
    out.x.push_back(r.epsilon);
    out.y.push_back(r.outside);
  }
  p.series = {in, out};
  s.svg("mu.svg", p);
}

Atlas run_atlas(Session& s, const EnergyModel& model) {
  const auto& cfg = s.config();
  const Atlas atlas = build_atlas(model, cfg.atlas.rho, cfg.atlas.t_grid, cfg.atlas.seed_grid, atlas_options(cfg));
  Json j = to_json(atlas);
  Json folds = Json::array();
  for (const auto& b : atlas.branches) {
    for (std::size_t f : b.folds) {
      const auto& smp = b.samples[f];
      const CriticalPoint cp = classify(model, smp.t, smp.u);
      Json jf = to_json(cp);
      jf["transversality"] = to_json(transversality(model, cp));
      folds.push_back(std::move(jf));
    }
  }
  j["fold_points"] = std::move(folds);
  j["lusin"] = to_json(lusin_diagnostic(model, atlas, cfg.cost.t));
  s.json("atlas.json", j);

  LinePlot p;
  p.title = fmt::format("{} critical set (rho = {})", model.name(), atlas.rho);
  p.x_label = "t";
  p.y_label = "u_1";
  for (std::size_t i = 0; i < atlas.branches.size(); ++i) {
    const auto& b = atlas.branches[i];
    Series ser;
    ser.name = fmt::format("{} {}", b.kind == BranchKind::time_curve ? "branch" : "continuum", i);
    ser.points = b.kind == BranchKind::fixed_time_loop;
    for (const auto& smp : b.samples) {
      ser.x.push_back(smp.t);
      ser.y.push_back(smp.u[0]);
    }
    p.series.push_back(std::move(ser));
  }
  Series folds_series{"folds", {}, {}, true};
  for (const auto& b : atlas.branches) {
    for (std::size_t f : b.folds) {
      folds_series.x.push_back(b.samples[f].t);
      folds_series.y.push_back(b.samples[f].u[0]);
    }
  }
  if (!folds_series.x.empty()) p.series.push_back(std::move(folds_series));
  s.svg("atlas.svg", p);
  s.log(fmt::format("atlas: {} branches, {} isolated, {} folds", atlas.branches.size(), atlas.isolated.size(), atlas.fold_count()));
  return atlas;
}

void run_cost(Session& s, const EnergyModel& model, const Atlas& atlas) {
  const double t = s.config().cost.t;
  CostGraph graph = build_cost_graph(model, atlas, t);
  const std::size_t n = graph.vertices.size();
  CostMatrix m;
  m.t = t;
  m.components.assign(graph.vertices.begin(), graph.vertices.begin() + static_cast<std::ptrdiff_t>(n));
  m.values.assign(n, std::vector<std::optional<double>>(n));
  Json pairs = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const ComponentRef from = graph.vertices[i].ref, to = graph.vertices[j].ref;
      const CostResult r = cost(model, graph, from, to);
      m.values[i][j] = r.value;
      if (i < j && r.reachable()) {
        const std::string name = fmt::format("witnesses/cost_{}_{}.csv", i, j);
        s.text(name, witness_csv(r.curve));
        Json jp = to_json(r);
        jp["from"] = i;
        jp["to"] = j;
        jp["witness_file"] = name;
        jp["direct_minimization"] = to_json(direct_minimization(model, r.curve));
        pairs.push_back(std::move(jp));
      }
    }
  }
  Json j = to_json(m);
  j["pairs"] = std::move(pairs);
  j["escaped_heteroclines"] = graph.escaped;
  j["incomplete_heteroclines"] = graph.incomplete;
  s.json("cost_matrix.json", j);
  s.log(fmt::format("cost: {} components at t = {}", n, t));
}

LimitEstimate run_jumps(Session& s, const EnergyModel& model, const Atlas& atlas, const SweepResult& sw) {
  if (sw.trajectories.size() < 2) throw Error("jumps: fewer than two successful trajectories");
  const LimitEstimate limit = extract_limit(model, sw, atlas);
  const LocalizationReport loc = dissipation_localization(sw, limit);
  Json j = to_json(limit);
  j["localization"] = to_json(loc);
  s.json("jumps.json", j);
  s.text("limit.csv", limit_csv(limit));
  mu_outputs(s, loc);

  LinePlot p;
  p.title = "energy along the limit curve";
  p.x_label = "t";
  p.y_label = "e(t)";
  Series ser{"e(t)", limit.times, {}, false};
  for (std::size_t k = 0; k < limit.times.size(); ++k) ser.y.push_back(model.energy(limit.times[k], limit.limit_states[k]));
  p.series.push_back(std::move(ser));
  const auto& smallest = sw.trajectories.back();
  p.series.push_back({fmt::format("eps = {}", smallest.epsilon), smallest.times, smallest.energies, false});
  for (const auto& jr : limit.jumps) p.markers.push_back(jr.t_cert);
  s.svg("energy.svg", p);
  std::size_t interior = 0;
  for (const auto& jr : limit.jumps) interior += jr.initial ? 0 : 1;
  s.log(fmt::format("jumps: {} records ({} interior), bv residual {:.3e}", limit.jumps.size(), interior, limit.bv_balance_residual));
  return limit;
}

GenericityReport run_generic(Session& s, const EnergyModel& model) {
  const auto& cfg = s.config();
  GenericityOptions g;
  g.rho = cfg.atlas.rho;
  g.t_grid = cfg.atlas.t_grid;
  g.seed_grid = cfg.atlas.seed_grid;
  g.atlas = atlas_options(cfg);
  g.threads = s.threads();
  const GenericityReport rep = sample_test(model, cfg.generic.radius, static_cast<std::size_t>(cfg.generic.count), cfg.seed,
                                           generic_mode_from_string(cfg.generic.mode), g);
  s.json("generic.json", to_json(rep));
  s.log(fmt::format("generic: pass fraction {:.4f} ({} passed, {} failed, {} inconclusive)", rep.pass_fraction, rep.passed,
                    rep.failed, rep.inconclusive));
  return rep;
}

void run_scenario(Session& s, const EnergyModel& model) {
  const auto& cfg = s.config();
  switch (cfg.scenario) {
    case Scenario::flow: scenario_flow(s, model); break;
    case Scenario::sweep: {
      const SweepResult sw = run_sweep(s, model);
      if (sw.trajectories.size() >= 2) {
        LimitEstimate none;
        mu_outputs(s, dissipation_localization(sw, none));
      }
      break;
    }
    case Scenario::atlas: run_atlas(s, model); break;
    case Scenario::cost: run_cost(s, model, run_atlas(s, model)); break;
    case Scenario::jumps: {
      const SweepResult sw = run_sweep(s, model);
      run_jumps(s, model, run_atlas(s, model), sw);
      break;
    }
    case Scenario::generic: run_generic(s, model); break;
    case Scenario::report: {
      const ConsistencyReport rep = check_consistency(model, cfg.consistency.samples, cfg.seed, cfg.consistency.rho);
      s.json("consistency.json", to_json(rep));
      s.log(fmt::format("consistency: {}", rep.passed ? "passed" : "FAILED"));
      const Atlas atlas = run_atlas(s, model);
      run_cost(s, model, atlas);
      Json summary;
      summary["model"] = model.name();
      summary["consistency_passed"] = rep.passed;
      summary["branches"] = atlas.branches.size();
      summary["isolated"] = atlas.isolated.size();
      summary["folds"] = atlas.fold_count();
      if (!cfg.sweep.u0.empty()) {
        const LimitEstimate limit = run_jumps(s, model, atlas, run_sweep(s, model));
        std::size_t interior = 0;
        for (const auto& j : limit.jumps) interior += j.initial ? 0 : 1;
        summary["interior_jumps"] = interior;
        summary["bv_balance_residual"] = number(limit.bv_balance_residual);
      }
      const GenericityReport gen = run_generic(s, model);
      summary["generic_pass_fraction"] = number(gen.pass_fraction);
      s.json("report.json", summary);
      break;
    }
  }
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json versions() {
  return Json{{"critflow", version},
              {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
              {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
              {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                            NLOHMANN_JSON_VERSION_PATCH)},
              {"compiler", __VERSION__}};
}

}  // namespace

int run(const RunOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const std::string start_stamp = utc_now();
  RunConfig cfg;
  try {
    cfg = load_config(options.config_path);
    if (options.output_dir) cfg.output_dir = *options.output_dir;
    if (options.seed) cfg.seed = *options.seed;
  } catch (const Error& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return exit_config;
  }

  std::optional<EnergyModel> model;
  try {
    model = builtin(cfg.model_name, cfg.model_params);
  } catch (const Error& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return exit_config;
  }

  Session session(cfg, options);
  int status = exit_ok;
  std::string failure;
  try {
    std::filesystem::create_directories(cfg.output_dir);
    run_scenario(session, *model);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return exit_config;
  } catch (const std::exception& e) {
    status = exit_numerical;
    failure = e.what();
    fmt::print(stderr, "numerical failure: {}\n", failure);
  }

  try {
    if (status != exit_ok) session.json("failure.json", Json{{"message", failure}, {"scenario", to_string(cfg.scenario)}});
    Json manifest;
    manifest["tool"] = "critflow";
    manifest["versions"] = versions();
    manifest["scenario"] = to_string(cfg.scenario);
    manifest["status"] = status == exit_ok ? "ok" : "failed";
    manifest["config"] = config_echo(cfg);
    Json outs = Json::array();
    for (const auto& o : session.outputs()) outs.push_back(o);
    manifest["outputs"] = std::move(outs);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    manifest["timestamp"] = {{"started", start_stamp}, {"wall_seconds", wall}};
    write_json(cfg.output_dir / "manifest.json", manifest);
  } catch (const std::exception& e) {
    fmt::print(stderr, "cannot write manifest: {}\n", e.what());
    return exit_numerical;
  }
  return status;
}

}  // namespace critflow

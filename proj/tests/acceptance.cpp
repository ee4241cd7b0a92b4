#include <fmt/core.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "critflow/genericity_lab.hpp"
#include "critflow/viscosity_limit.hpp"

using namespace critflow;

namespace {

const double t_fold = 2.0 / (3.0 * std::sqrt(3.0));

Vec scalar(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct TiltedSweep {
  EnergyModel model = builtin("tilted_double_well");
  Atlas atlas = build_atlas(model, 10, 5, 7);
  SweepResult sw = sweep(model, scalar(-1), {0.1, 0.03, 0.01, 0.003});
  LimitEstimate limit = extract_limit(model, sw, atlas);
  LocalizationReport loc = dissipation_localization(sw, limit);

  const JumpRecord* interior() const {
    for (const auto& j : limit.jumps) {
      if (!j.initial) return &j;
    }
    return nullptr;
  }
};

const TiltedSweep& tilted() {
  static const TiltedSweep s;
  return s;
}

Verdict energy_identity() {
  const auto m = builtin("tilted_double_well");
  auto residual = [&](double tau) {
    FlowConfig c;
    c.epsilon = 0.05;
    c.step = tau;
    return energy_identity_residual(m, integrate(m, c, scalar(-1)));
  };
  const double r1 = residual(1e-4), r2 = residual(5e-5);
  return {r1 < 1e-3 && r2 <= 0.6 * r1, fmt::format("residual {:.3e}, halved-step ratio {:.3f}", r1, r2 / r1)};
}

Verdict jump_time() {
  const auto* j = tilted().interior();
  if (!j) return {false, "no interior jump"};
  const auto& T = tilted().sw.trajectories;
  const auto w1 = detect_jump_windows(T[T.size() - 2]), w2 = detect_jump_windows(T.back());
  std::string linear = "n/a";
  if (w1.size() == 1 && w2.size() == 1) {
    const double e1 = T[T.size() - 2].epsilon, e2 = T.back().epsilon;
    linear = fmt::format("{:.5f}", w2[0].barycenter - e2 * (w1[0].barycenter - w2[0].barycenter) / (e1 - e2));
  }
  return {std::abs(j->t_jump - t_fold) <= 0.005,
          fmt::format("t_jump {:.5f} (raw {:.5f}, linear-in-eps {}) vs {:.5f}", j->t_jump, j->t_raw, linear, t_fold)};
}

Verdict jump_relation() {
  const auto* j = tilted().interior();
  if (!j || !j->cost_value) return {false, "no certified interior jump"};
  const double c = *j->cost_value, d = j->energy_drop;
  return {std::abs(c - d) <= 1e-3 && std::abs(c - 0.75) <= 1e-2 && std::abs(d - 0.75) <= 1e-2,
          fmt::format("cost {:.6f}, drop {:.6f}", c, d)};
}

Verdict localization() {
  const auto& s = tilted();
  const auto& row = s.loc.rows.back();
  return {row.epsilon == 0.003 && row.inside >= 0.71 && row.inside <= 0.79 && row.outside < 0.05,
          fmt::format("eps {}: inside {:.4f}, outside {:.4f}", row.epsilon, row.inside, row.outside)};
}

Verdict cost_axioms() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0, 1);
  double worst_sym = 0, worst_tri = 0, worst_gap = 0;
  int zero_violations = 0, checked = 0;
  const std::vector<std::string> names{"tilted_double_well", "double_well_2d", "mexican_hat"};
  std::vector<EnergyModel> models;
  std::vector<Atlas> atlases;
  for (const auto& n : names) {
    models.push_back(builtin(n));
    atlases.push_back(build_atlas(models.back(), 10, 5, 7));
  }
  std::vector<std::pair<std::size_t, CostGraph>> graphs;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (int k = 0; k < 4; ++k) {
      const double t = unit(rng) * models[i].horizon() * 0.9;
      graphs.emplace_back(i, build_cost_graph(models[i], atlases[i], t));
    }
  }
  auto random_ref = [&](const CostGraph& g) {
    std::uniform_int_distribution<std::size_t> pick(0, g.vertices.size() - 1);
    const auto& c = g.vertices[pick(rng)];
    ComponentRef r = c.ref;
    if (c.continuum()) {
      std::uniform_int_distribution<std::size_t> at(0, c.points.size() - 1);
      r.representative = c.points[at(rng)];
    }
    return r;
  };
  std::uniform_int_distribution<std::size_t> which(0, graphs.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    auto& [mi, g] = graphs[which(rng)];
    const auto& m = models[mi];
    const ComponentRef a = random_ref(g), b = random_ref(g), c = random_ref(g);
    const auto ab = cost(m, g, a, b), ba = cost(m, g, b, a), ac = cost(m, g, a, c), cb = cost(m, g, c, b);
    if (!ab.reachable() || !ba.reachable() || !ac.reachable() || !cb.reachable()) return {false, "unreachable pair"};
    worst_sym = std::max(worst_sym, std::abs(*ab.value - *ba.value));
    worst_tri = std::min(worst_tri, *ac.value + *cb.value - *ab.value);
    worst_gap = std::min(worst_gap, *ab.lower_bound_gap);
    if (*ab.value == 0 && !(a.id && b.id && *a.id == *b.id)) ++zero_violations;
    if (*ab.value > 0 && a.id && b.id && *a.id == *b.id) ++zero_violations;
    ++checked;
  }
  return {worst_sym <= 1e-6 && worst_tri >= -1e-6 && worst_gap >= -1e-8 && zero_violations == 0,
          fmt::format("{} triples: symmetry gap {:.2e}, triangle slack {:.2e}, lower-bound gap {:.2e}, zero-cost violations {}",
                      checked, worst_sym, worst_tri, worst_gap, zero_violations)};
}

Verdict heterocline_identity() {
  double worst = 0;
  int count = 0;
  auto record = [&](const TransitionCurve& c) {
    const double drop = c.energies.front() - c.energies.back();
    worst = std::max(worst, std::abs(c.slope_weighted_length - drop) / drop);
    ++count;
  };
  const auto tdw = builtin("tilted_double_well");
  const auto dw2 = builtin("double_well_2d");
  for (int k = 0; k < 10; ++k) {
    const double t = -0.3 + 0.06 * k;
    // middle root of u^3 - u = t
    const double mid = 2 / std::sqrt(3.0) * std::cos(std::acos(1.5 * std::sqrt(3.0) * t) / 3 - 2 * M_PI / 3);
    const auto s1 = classify(tdw, t, scalar(mid));
    Vec u2(2);
    u2 << mid, 0;
    const auto s2 = classify(dw2, t, u2);
    for (double sign : {1.0, -1.0}) {
      record(heterocline(tdw, t, s1, scalar(sign)));
      record(heterocline(dw2, t, s2, sign * s2.eigenvectors.col(0)));
    }
  }
  const auto hat = builtin("mexican_hat");
  const auto origin = classify(hat, 0, Vec::Zero(2));
  for (int k = 0; k < 10; ++k) {
    Vec d(2);
    d << std::cos(0.6 * k + 0.1), std::sin(0.6 * k + 0.1);
    record(heterocline(hat, 0, origin, d));
  }
  return {count == 50 && worst <= 1e-6, fmt::format("{} heteroclines, worst relative gap {:.2e}", count, worst)};
}

Verdict atlas_structure() {
  const auto& s = tilted();
  const auto& atlas = s.atlas;
  if (atlas.branches.size() != 1 || !atlas.isolated.empty()) {
    return {false, fmt::format("{} branches, {} isolated", atlas.branches.size(), atlas.isolated.size())};
  }
  const auto& b = atlas.branches[0];
  std::vector<double> ft;
  for (auto f : b.folds) ft.push_back(b.samples[f].t);
  std::sort(ft.begin(), ft.end());
  bool ok = ft.size() == 2 && std::abs(ft[0] + t_fold) <= 1e-6 && std::abs(ft[1] - t_fold) <= 1e-6;
  int mismatches = 0;
  for (std::size_t k = 0; k < b.samples.size(); ++k) {
    const auto& x = b.samples[k];
    const bool flat = std::abs(x.tangent[0]) < 1e-8;
    const bool degenerate = x.spectrum.cwiseAbs().minCoeff() <= degeneracy_tol(x.spectrum);
    bool near_fold = false;
    for (auto f : b.folds) near_fold = near_fold || (k + 1 >= f && k <= f + 1);
    if (flat != degenerate && !near_fold) ++mismatches;
    if (x.fold && !degenerate) ++mismatches;
  }
  ok = ok && mismatches == 0;
  return {ok, fmt::format("1 branch, folds at [{}], fold/degeneracy mismatches {}",
                          ft.size() == 2 ? fmt::format("{:.9f}, {:.9f}", ft[0], ft[1]) : std::string("?"), mismatches)};
}

Verdict transversality_fold() {
  const auto m = builtin("tilted_double_well");
  const auto cp = classify(m, t_fold, scalar(-1 / std::sqrt(3.0)));
  const auto r = transversality(m, cp);
  if (!r.t2_value || !r.t3_value) return {false, fmt::format("kernel_dim {}", r.kernel_dim)};
  // the kernel vector is determined up to sign; t3 = 6 u* v^3 carries the sign of v
  const double v = cp.eigenvectors(0, 0) > 0 ? 1.0 : -1.0;
  const double t3 = *r.t3_value * v;
  return {r.kernel_dim == 1 && std::abs(std::abs(*r.t2_value) - 1) <= 1e-6 && std::abs(t3 + 2 * std::sqrt(3.0)) <= 1e-4 &&
              r.passes_full(),
          fmt::format("kernel_dim {}, |t2| {:.9f}, t3 {:.7f}", r.kernel_dim, std::abs(*r.t2_value), t3)};
}

Verdict lusin() {
  const auto m = builtin("mexican_hat");
  const auto atlas = build_atlas(m, 10, 5, 7);
  const auto l = lusin_diagnostic(m, atlas, 0.0);
  CostGraph g = build_cost_graph(m, atlas, 0.0);
  std::optional<double> c;
  ComponentRef origin, circle;
  bool have_origin = false, have_circle = false;
  for (const auto& v : g.vertices) {
    if (v.continuum()) circle = v.ref, have_circle = true;
    else if (v.ref.representative.norm() < 1e-8) origin = v.ref, have_origin = true;
  }
  if (have_origin && have_circle) c = cost(m, g, origin, circle).value;
  const bool values_ok = l.distinct_count == 2 && l.values.size() == 2 && std::abs(l.values[0]) <= 1e-8 &&
                         std::abs(l.values[1] - 0.25) <= 1e-8 && l.outer_estimate == 0;
  return {values_ok && c && std::abs(*c - 0.25) <= 1e-3,
          fmt::format("{} distinct values, outer estimate {}, cost {}", l.distinct_count, l.outer_estimate,
                      c ? fmt::format("{:.6f}", *c) : std::string("unreachable"))};
}

Verdict genericity() {
  const auto a = sample_test(builtin("tilted_double_well"), 0.1, 100, 7, GenericMode::linear);
  const auto b = sample_test(builtin("mexican_hat"), 0.1, 100, 7, GenericMode::linear);
  return {a.pass_fraction >= 0.95 && b.pass_fraction >= 0.9,
          fmt::format("tilted_double_well {:.3f} ({} inconclusive), mexican_hat {:.3f} ({} inconclusive)", a.pass_fraction,
                      a.inconclusive, b.pass_fraction, b.inconclusive)};
}

Verdict bv_balance() {
  const auto& L = tilted().limit;
  std::size_t interior = 0;
  for (const auto& j : L.jumps) interior += j.initial ? 0 : 1;
  return {L.bv_balance_residual <= 1e-2 && interior == 1 && L.windows_smallest == 1 && L.windows_second == 1,
          fmt::format("residual {:.3e}, interior jumps {}, windows {} / {}", L.bv_balance_residual, interior,
                      L.windows_smallest, L.windows_second)};
}

Verdict consistency() {
  bool ok = true;
  std::string detail;
  for (const auto& name : builtin_names()) {
    ParamMap p;
    if (name == "allen_cahn_1d") p = {{"n", 32}, {"load", 0.5}};
    const auto r = check_consistency(builtin(name, p), 1000, 1, 10);
    const double fd = std::max({r.max_gradient_fd_error, r.max_power_fd_error, r.max_hessian_fd_error});
    ok = ok && r.passed && fd < 1e-6;
    detail += fmt::format("{}{} fd {:.1e}{}", detail.empty() ? "" : ", ", name, fd, r.passed ? "" : " FAILED");
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"energy identity", energy_identity},
      {"jump time", jump_time},
      {"jump relation", jump_relation},
      {"dissipation localization", localization},
      {"cost axioms", cost_axioms},
      {"heterocline identity", heterocline_identity},
      {"atlas structure", atlas_structure},
      {"transversality at the fold", transversality_fold},
      {"clean critical set", lusin},
      {"genericity", genericity},
      {"balanced energy budget", bv_balance},
      {"model consistency", consistency},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, fmt::format("exception: {}", e.what())};
    }
    failed += v.pass ? 0 : 1;
    fmt::print("{} {:2d} {}: {}\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}

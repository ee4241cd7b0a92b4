#include "critflow/viscosity_limit.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace critflow {

double StepPolicy::step_for(double epsilon) const { return std::min(base_step, epsilon * eps_fraction); }

SweepResult sweep(const EnergyModel& model, const Vec& u0, const std::vector<double>& epsilons, const StepPolicy& policy,
                  unsigned threads) {
  if (epsilons.empty()) throw Error("sweep: no epsilons");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0)) throw Error("sweep: epsilons must be positive");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) throw Error("sweep: epsilons must be strictly decreasing");
  }
  if (u0.size() != model.dim()) throw Error("sweep: u0 has the wrong dimension");

  const std::size_t n = epsilons.size();
  std::vector<std::optional<Trajectory>> runs(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      FlowConfig cfg;
      cfg.epsilon = epsilons[i];
      cfg.step = policy.step_for(epsilons[i]);
      cfg.newton_tol = policy.newton_tol;
      cfg.newton_max_iter = policy.newton_max_iter;
      cfg.refine_fast_transitions = policy.refine_fast_transitions;
      try {
        runs[i] = integrate(model, cfg, u0);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  SweepResult out;
  out.u0 = u0;
  out.horizon = model.horizon();
  for (std::size_t i = 0; i < n; ++i) {
    if (runs[i]) {
      out.epsilons.push_back(epsilons[i]);
      out.trajectories.push_back(std::move(*runs[i]));
    } else {
      out.failures.push_back({epsilons[i], errors[i]});
    }
  }
  return out;
}

Vec state_at(const Trajectory& traj, double t) {
  const auto& ts = traj.times;
  if (t <= ts.front()) return traj.states.front();
  if (t >= ts.back()) return traj.states.back();
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - ts.begin());
  const double a = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
  return traj.states[k - 1] + a * (traj.states[k] - traj.states[k - 1]);
}

std::vector<JumpWindow> detect_jump_windows(const Trajectory& traj, const WindowOptions& opts) {
  std::vector<JumpWindow> out;
  const std::size_t n = traj.size();
  if (n < 3) return out;
  const double T = traj.horizon();
  const double eps = traj.epsilon;
  std::vector<double> speed(n, 0.0);
  double span = 0, max_u = 0;
  for (std::size_t k = 1; k < n; ++k) {
    speed[k] = (traj.states[k] - traj.states[k - 1]).norm() / traj.step_length(k);
    span = std::max(span, (traj.states[k] - traj.states.front()).norm());
  }
  for (const auto& u : traj.states) max_u = std::max(max_u, u.norm());
  std::vector<double> sorted(speed.begin() + 1, speed.end());
  auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double threshold = opts.speed_factor * std::max({*mid, span / T, 1e-6 * (1 + max_u) / T});

  for (std::size_t k = 1; k < n;) {
    if (!(speed[k] > threshold)) {
      ++k;
      continue;
    }
    const std::size_t k0 = k;
    while (k < n && speed[k] > threshold) ++k;
    const std::size_t k1 = k - 1;
    JumpWindow w;
    double mass = 0, moment = 0;
    for (std::size_t j = k0; j <= k1; ++j) {
      const double m = traj.step_length(j) * traj.dissipation_density[j];
      mass += m;
      moment += m * traj.times[j];
    }
    w.fast_begin = traj.times[k0 - 1];
    w.fast_end = traj.times[k1];
    w.barycenter = mass > 0 ? moment / mass : 0.5 * (w.fast_begin + w.fast_end);
    w.mass = mass;  // fast-interval mass, used only for merging weights
    const double half = std::max(eps < 1 ? 5 * eps * std::log(1 / eps) : 0.0, 20 * traj.step_length(k0));
    w.begin = std::clamp(std::min(w.fast_begin, w.barycenter - half), 0.0, T);
    w.end = std::clamp(std::max(w.fast_end, w.barycenter + half), 0.0, T);
    w.initial = k0 == 1;
    if (w.initial) w.begin = 0;
    if (!out.empty() && w.begin <= out.back().end) {
      JumpWindow& p = out.back();
      const double total = p.mass + w.mass;
      if (total > 0) p.barycenter = (p.barycenter * p.mass + w.barycenter * w.mass) / total;
      p.mass = total;
      p.end = std::max(p.end, w.end);
      p.fast_end = w.fast_end;
    } else {
      out.push_back(w);
    }
  }
  for (auto& w : out) w.mass = dissipation_measure(traj, w.begin, w.end);
  return out;
}

namespace {

struct Snapped {
  std::optional<ComponentRef> ref;
  Vec state;
};

Snapped snap(const EnergyModel& model, const Atlas& atlas, double t, const Vec& u, const CriticalOptions& copts) {
  const auto comps = components_at(model, atlas, t, copts);
  const auto [i, dist] = nearest_component(comps, u);
  if (i < 0) return {std::nullopt, u};
  const Component& c = comps[static_cast<std::size_t>(i)];
  if (!c.continuum()) return {c.ref, c.ref.representative};
  ComponentRef ref = c.ref;
  if (const auto p = polish_critical(model, t, u, copts); p && distance_to(c, p->u) <= atlas.arc_step) {
    ref.representative = p->u;
    return {ref, p->u};
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    if ((c.points[k] - u).norm() < (c.points[best] - u).norm()) best = k;
  }
  ref.representative = c.points[best];
  return {ref, c.points[best]};
}

/// Time of the fold where the sheet stops existing in forward time, if the sheet's latest time is a fold.
std::optional<double> terminal_fold(const Atlas& atlas, const ComponentId& id) {
  if (id.source != ComponentId::Source::sheet) return std::nullopt;
  if (id.index < 0 || id.index >= static_cast<int>(atlas.branches.size())) return std::nullopt;
  const auto& S = atlas.branches[static_cast<std::size_t>(id.index)].samples;
  double t_max = -std::numeric_limits<double>::infinity();
  bool at_fold = false;
  for (std::size_t i = 0; i + 1 < S.size(); ++i) {
    if (S[i + 1].sheet != id.sheet) continue;
    for (const auto* s : {&S[i], &S[i + 1]}) {
      if (s->t > t_max) {
        t_max = s->t;
        at_fold = s->fold;
      }
    }
  }
  if (!at_fold) return std::nullopt;
  return t_max;
}

bool critical_at(const EnergyModel& model, double t, const Vec& u, const CriticalOptions& copts) {
  return model.slope(t, u) <= critical_bound(u, copts);
}

}  // namespace

LimitEstimate extract_limit(const EnergyModel& model, const SweepResult& sw, const Atlas& atlas, const ExtractOptions& opts) {
  if (sw.trajectories.size() < 2) throw Error("extract_limit: needs at least two epsilons");
  const CriticalOptions& copts = opts.cost.critical;
  const Trajectory& S = sw.trajectories.back();
  const Trajectory& S2 = sw.trajectories[sw.trajectories.size() - 2];
  const auto W = detect_jump_windows(S, opts.windows);
  const auto W2 = detect_jump_windows(S2, opts.windows);
  const double T = S.horizon();
  const double eps1 = S.epsilon, eps2 = S2.epsilon;

  LimitEstimate L;
  L.epsilon = eps1;
  L.windows_smallest = W.size();
  L.windows_second = W2.size();

  for (std::size_t i = 0; i < W.size(); ++i) {
    const JumpWindow& w = W[i];
    JumpRecord rec;
    rec.window = w;
    rec.t_raw = w.barycenter;
    rec.initial = w.initial;
    rec.local_mu_mass = w.mass;
    if (w.initial) {
      rec.t_jump = 0;
    } else if (W.size() == W2.size() && !W2[i].initial) {
      // the delay behind a fold scales like eps^(2/3)
      const double x1 = std::pow(eps1, 2.0 / 3), x2 = std::pow(eps2, 2.0 / 3);
      rec.t_jump = rec.t_raw - (W2[i].barycenter - rec.t_raw) / (x2 - x1) * x1;
    } else {
      rec.t_jump = rec.t_raw;
    }

    const Snapped right = snap(model, atlas, w.end, state_at(S, w.end), copts);
    Snapped left;
    if (w.initial) {
      left = critical_at(model, 0.0, sw.u0, copts) ? snap(model, atlas, 0.0, sw.u0, copts)
                                                   : Snapped{singleton_ref(0.0, sw.u0), sw.u0};
    } else {
      left = snap(model, atlas, w.begin, state_at(S, w.begin), copts);
    }
    if (!left.ref || !right.ref) {
      rec.note = "flanking component unresolved";
      L.jumps.push_back(std::move(rec));
      continue;
    }
    if (!w.initial && left.ref->id && right.ref->id && *left.ref->id == *right.ref->id) continue;

    if (w.initial) {
      rec.t_cert = 0;
    } else {
      rec.t_cert = std::clamp(rec.t_jump, w.begin, w.end);
      if (left.ref->id) {
        if (auto tf = terminal_fold(atlas, *left.ref->id); tf && *tf >= w.begin - (w.end - w.begin) && *tf <= w.end) {
          rec.t_cert = *tf;
        }
      }
    }

    auto follow = [&](const Snapped& s) -> std::optional<ComponentRef> {
      if (s.ref->kind == ComponentKind::noncritical_singleton) return s.ref;
      if (!s.ref->id) return std::nullopt;
      auto c = component_at(model, atlas, *s.ref->id, rec.t_cert, copts);
      if (!c) return std::nullopt;
      ComponentRef r = c->ref;
      if (c->continuum()) r.representative = snap(model, atlas, rec.t_cert, s.state, copts).state;
      return r;
    };
    const auto lc = follow(left);
    const auto rc = follow(right);
    if (!lc || !rc) {
      rec.note = "flanking component does not reach the certification time";
      rec.left_component = *left.ref;
      rec.right_component = *right.ref;
      L.jumps.push_back(std::move(rec));
      continue;
    }
    rec.left_component = *lc;
    rec.right_component = *rc;
    rec.energy_drop = model.energy(rec.t_cert, lc->representative) - model.energy(rec.t_cert, rc->representative);
    CostGraph graph = build_cost_graph(model, atlas, rec.t_cert, opts.cost);
    const CostResult c = cost(model, graph, *lc, *rc, opts.cost);
    rec.cost_value = c.value;
    rec.resolved = c.reachable();
    if (!rec.resolved) rec.note = "no admissible transition found";
    L.jumps.push_back(std::move(rec));
  }

  // limit curve on a uniform grid
  const std::size_t m = std::max<std::size_t>(opts.samples, 2);
  auto jump_of = [&](double t) -> const JumpRecord* {
    for (const auto& j : L.jumps) {
      if (t >= j.window.begin && t <= j.window.end) return &j;
    }
    return nullptr;
  };
  auto in_any = [](const std::vector<JumpWindow>& ws, double t) {
    return std::any_of(ws.begin(), ws.end(), [&](const JumpWindow& w) { return t >= w.begin && t <= w.end; });
  };
  auto side_state = [&](const JumpRecord& j, double t, bool right_side) -> std::optional<Vec> {
    const ComponentRef& r = right_side ? j.right_component : j.left_component;
    if (r.kind == ComponentKind::noncritical_singleton) return r.representative;
    if (!r.id) return std::nullopt;
    auto c = component_at(model, atlas, *r.id, t, copts);
    if (!c) return std::nullopt;
    if (c->continuum()) return snap(model, atlas, t, r.representative, copts).state;
    return c->ref.representative;
  };

  std::vector<double> energy(m), power(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double t = T * static_cast<double>(k) / static_cast<double>(m - 1);
    L.times.push_back(t);
    const JumpRecord* j = in_any(W, t) ? jump_of(t) : nullptr;
    L.in_window.push_back(in_any(W, t));
    Vec state;
    if (j && j->resolved) {
      auto s = side_state(*j, t, t >= j->t_cert);
      state = s ? *s : snap(model, atlas, t, state_at(S, t), copts).state;
    } else {
      state = snap(model, atlas, t, state_at(S, t), copts).state;
    }
    energy[k] = model.energy(t, state);
    power[k] = model.power(t, state);
    L.limit_states.push_back(std::move(state));
  }

  // R(t) = sum of costs up to t + e(t) - int_0^t P
  std::vector<double> R(m);
  double integral = 0;
  double costs = 0;
  for (const auto& j : L.jumps) {
    if (j.resolved && j.t_cert <= L.times[0]) costs += *j.cost_value;
  }
  R[0] = costs + energy[0];
  for (std::size_t k = 1; k < m; ++k) {
    const double a = L.times[k - 1], b = L.times[k];
    const JumpRecord* split = nullptr;
    for (const auto& j : L.jumps) {
      if (j.resolved && j.t_cert > a && j.t_cert <= b) split = &j;
    }
    if (split) {
      const auto sl = side_state(*split, split->t_cert, false);
      const auto sr = side_state(*split, split->t_cert, true);
      const double pl = sl ? model.power(split->t_cert, *sl) : power[k - 1];
      const double pr = sr ? model.power(split->t_cert, *sr) : power[k];
      integral += 0.5 * (power[k - 1] + pl) * (split->t_cert - a) + 0.5 * (pr + power[k]) * (b - split->t_cert);
      costs += *split->cost_value;
    } else {
      integral += 0.5 * (power[k - 1] + power[k]) * (b - a);
    }
    R[k] = costs + energy[k] - integral;
  }
  double r_min = std::numeric_limits<double>::infinity(), r_max = -r_min;
  for (std::size_t k = 0; k < m; ++k) {
    if (L.in_window[k]) continue;
    r_min = std::min(r_min, R[k]);
    r_max = std::max(r_max, R[k]);
  }
  L.bv_balance_residual = r_max >= r_min ? r_max - r_min : 0.0;

  for (std::size_t k = 0; k < S.size(); ++k) {
    if (!in_any(W, S.times[k])) L.max_offjump_slope = std::max(L.max_offjump_slope, S.slopes[k]);
  }
  L.criticality_constant = L.max_offjump_slope / std::sqrt(eps1);
  for (double t : L.times) {
    if (in_any(W, t) || in_any(W2, t)) continue;
    L.cross_validation_gap = std::max(L.cross_validation_gap, (state_at(S, t) - state_at(S2, t)).norm());
  }
  return L;
}

LocalizationReport dissipation_localization(const SweepResult& sw, const LimitEstimate& limit, const WindowOptions& opts) {
  LocalizationReport rep;
  for (const auto& j : limit.jumps) {
    if (j.resolved) rep.target += *j.cost_value;
  }
  for (std::size_t i = 0; i < sw.trajectories.size(); ++i) {
    const Trajectory& tr = sw.trajectories[i];
    LocalizationRow row;
    row.epsilon = sw.epsilons[i];
    const auto ws = detect_jump_windows(tr, opts);
    row.windows = ws.size();
    for (const auto& w : ws) row.inside += w.mass;
    row.outside = std::max(0.0, dissipation_measure(tr, tr.times.front(), tr.horizon()) - row.inside);
    rep.rows.push_back(row);
  }
  if (rep.rows.empty()) return rep;
  rep.tail_begin = rep.rows.size() - 1;
  while (rep.tail_begin > 0 && rep.rows[rep.tail_begin - 1].windows == rep.rows.back().windows) --rep.tail_begin;
  rep.outside_decreasing = rep.inside_approaching = true;
  for (std::size_t i = rep.tail_begin + 1; i < rep.rows.size(); ++i) {
    const auto& p = rep.rows[i - 1];
    const auto& c = rep.rows[i];
    if (c.outside > p.outside + 1e-12) rep.outside_decreasing = false;
    if (std::abs(c.inside - rep.target) > std::abs(p.inside - rep.target) + 1e-12) rep.inside_approaching = false;
  }
  const double inside = rep.rows.back().inside;
  rep.final_ratio = rep.target > 0 ? inside / rep.target : (inside == 0 ? 1.0 : std::numeric_limits<double>::infinity());
  rep.passes = rep.outside_decreasing && rep.inside_approaching && std::abs(rep.final_ratio - 1) <= 0.1;
  return rep;
}

namespace {

double directed_hausdorff(const Trajectory& a, const Trajectory& b) {
  double worst = 0;
  const auto& tb = b.times;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a.times[i];
    const auto it = std::lower_bound(tb.begin(), tb.end(), t);
    const std::ptrdiff_t start = it - tb.begin();
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](std::ptrdiff_t j) {
      const auto k = static_cast<std::size_t>(j);
      const double dt = std::abs(tb[k] - t);
      if (dt >= best) return false;
      best = std::min(best, std::max(dt, (b.states[k] - a.states[i]).norm()));
      return true;
    };
    for (std::ptrdiff_t j = start; j < static_cast<std::ptrdiff_t>(tb.size()); ++j) {
      if (!consider(j)) break;
    }
    for (std::ptrdiff_t j = start - 1; j >= 0; --j) {
      if (!consider(j)) break;
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

double graph_hausdorff(const Trajectory& a, const Trajectory& b) {
  if (a.size() == 0 || b.size() == 0) return a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

}  // namespace critflow

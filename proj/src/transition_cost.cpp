#include "critflow/transition_cost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "critflow/flow_integrator.hpp"

namespace critflow {

std::string to_string(CostMethod m) {
  return m == CostMethod::heteroclinic_graph ? "heteroclinic_graph" : "direct_minimization";
}

double slope_weighted_length(const EnergyModel& model, double t, const std::vector<Vec>& nodes) {
  double sum = 0;
  double prev = nodes.empty() ? 0.0 : model.slope(t, nodes.front());
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const double cur = model.slope(t, nodes[k]);
    sum += 0.5 * (prev + cur) * (nodes[k] - nodes[k - 1]).norm();
    prev = cur;
  }
  return sum;
}

TransitionCurve make_curve(const EnergyModel& model, double t, std::vector<Vec> nodes) {
  TransitionCurve c;
  c.t = t;
  c.nodes = std::move(nodes);
  const std::size_t n = c.nodes.size();
  c.params.assign(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) c.params[k] = c.params[k - 1] + (c.nodes[k] - c.nodes[k - 1]).norm();
  const double total = n ? c.params.back() : 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    c.params[k] = total > 0 ? c.params[k] / total : (n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0);
  }
  for (const auto& x : c.nodes) {
    c.slopes.push_back(model.slope(t, x));
    c.energies.push_back(model.energy(t, x));
    c.noncritical_mask.push_back(c.slopes.back() > 1e-8 * (1 + x.norm()));
  }
  for (std::size_t k = 1; k < n; ++k) {
    c.slope_weighted_length += 0.5 * (c.slopes[k - 1] + c.slopes[k]) * (c.nodes[k] - c.nodes[k - 1]).norm();
  }
  if (n) {
    c.endpoints[0] = singleton_ref(t, c.nodes.front());
    c.endpoints[1] = singleton_ref(t, c.nodes.back());
  }
  return c;
}

std::vector<Vec> resample_by_arclength(const std::vector<Vec>& nodes, std::size_t n) {
  if (nodes.size() < 2 || n < 2) return nodes;
  std::vector<double> cum(nodes.size(), 0.0);
  for (std::size_t k = 1; k < nodes.size(); ++k) cum[k] = cum[k - 1] + (nodes[k] - nodes[k - 1]).norm();
  const double total = cum.back();
  if (total == 0) return std::vector<Vec>(n, nodes.front());
  std::vector<Vec> out;
  out.reserve(n);
  out.push_back(nodes.front());
  std::size_t seg = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double target = total * static_cast<double>(i) / static_cast<double>(n - 1);
    while (seg + 2 < cum.size() && cum[seg + 1] < target) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double a = len > 0 ? std::clamp((target - cum[seg]) / len, 0.0, 1.0) : 0.0;
    out.push_back(nodes[seg] + a * (nodes[seg + 1] - nodes[seg]));
  }
  out.push_back(nodes.back());
  return out;
}

namespace {

TransitionCurve run_descent(const EnergyModel& model, double t, std::vector<Vec> path, const HeteroclineOptions& opts) {
  const double lambda = model.lambda_bound();
  const double tau_max = lambda > 0 ? 0.5 / lambda : 10.0;
  Vec u = path.back();
  double arclength = 0;
  bool escaped = false, incomplete = true;
  for (std::size_t step = 0; step < opts.max_steps; ++step) {
    const double slope = model.slope(t, u);
    if (slope <= opts.critical_tol * (1 + u.norm())) {
      incomplete = false;
      break;
    }
    if (model.shifted_energy(t, u) > opts.rho) {
      escaped = true;
      break;
    }
    if (arclength > opts.max_arclength) break;
    double tau = std::min(tau_max, opts.max_step_rel * (1 + u.norm()) / slope);
    StepResult s;
    for (int tries = 0; tries < 20; ++tries, tau *= 0.5) {
      s = implicit_step(model, t, u, 1 / tau, 1e-13 * (1 + slope), 60);
      if (s.converged) break;
    }
    if (!s.converged) break;
    arclength += (s.state - u).norm();
    u = std::move(s.state);
    path.push_back(u);
  }
  if (!incomplete && !escaped) {
    if (auto cp = polish_critical(model, t, u); cp && (cp->u - u).norm() > 0) path.push_back(cp->u);
  }
  TransitionCurve c = make_curve(model, t, resample_by_arclength(path, opts.nodes));
  c.escaped = escaped;
  c.incomplete = incomplete && !escaped;
  return c;
}

}  // namespace

TransitionCurve heterocline(const EnergyModel& model, double t, const CriticalPoint& saddle, const Vec& direction,
                            const HeteroclineOptions& opts) {
  if (direction.size() != model.dim() || direction.norm() == 0) throw Error("heterocline: invalid direction");
  const double delta = 1e-4 * (1 + saddle.u.norm());
  return run_descent(model, t, {saddle.u, saddle.u + delta * direction.normalized()}, opts);
}

TransitionCurve descend(const EnergyModel& model, double t, const Vec& start, const HeteroclineOptions& opts) {
  return run_descent(model, t, {start}, opts);
}

ComponentRef component_ref(const Component& c) { return c.ref; }

ComponentRef singleton_ref(double t, const Vec& u) {
  ComponentRef r;
  r.kind = ComponentKind::noncritical_singleton;
  r.t = t;
  r.representative = u;
  return r;
}

// ---------------------------------------------------------------------------------------------------------------------

namespace {

Vec polyline_tangent(const std::vector<Vec>& pts, std::size_t i) {
  const std::size_t n = pts.size();
  const Vec d = pts[(i + 1) % n] - pts[(i + n - 1) % n];
  return d.norm() > 0 ? Vec(d.normalized()) : d;
}

std::size_t nearest_index(const std::vector<Vec>& pts, const Vec& x) {
  std::size_t best = 0;
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = (pts[i] - x).squaredNorm();
    if (d < dist) {
      dist = d;
      best = i;
    }
  }
  return best;
}

/// Nodes along a closed polyline from near x to near y, the shorter way round.
std::vector<Vec> thread_loop(const std::vector<Vec>& pts, const Vec& x, const Vec& y) {
  const std::size_t n = pts.size();
  const std::size_t i = nearest_index(pts, x), j = nearest_index(pts, y);
  const std::size_t fwd = (j + n - i) % n, bwd = (i + n - j) % n;
  std::vector<Vec> out;
  if (fwd <= bwd) {
    for (std::size_t k = 0; k <= fwd; ++k) out.push_back(pts[(i + k) % n]);
  } else {
    for (std::size_t k = 0; k <= bwd; ++k) out.push_back(pts[(i + n - k) % n]);
  }
  return out;
}

Component vertex_from_point(const EnergyModel& model, double t, const Vec& u, ComponentKind kind,
                            const CriticalOptions& copts) {
  Component c;
  c.ref.kind = kind;
  c.ref.t = t;
  c.ref.representative = u;
  c.points = {u};
  c.critical = classify(model, t, u, copts);
  c.energy = model.energy(t, u);
  return c;
}

int snap_vertex(const EnergyModel& model, CostGraph& graph, const Vec& u, const CostOptions& opts) {
  int best = -1;
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < graph.vertices.size(); ++i) {
    if (graph.vertices[i].ref.kind != ComponentKind::critical_component) continue;
    const double d = distance_to(graph.vertices[i], u);
    if (d < dist) {
      dist = d;
      best = static_cast<int>(i);
    }
  }
  if (best >= 0 && dist <= opts.snap_tol) return best;
  auto cp = polish_critical(model, graph.t, u, opts.critical);
  if (!cp) return -1;
  graph.vertices.push_back(vertex_from_point(model, graph.t, cp->u, ComponentKind::critical_component, opts.critical));
  graph.explored.push_back(false);
  return static_cast<int>(graph.vertices.size()) - 1;
}

void add_edge(CostGraph& graph, int a, int b, TransitionCurve curve) {
  if (a == b) return;
  for (const auto& e : graph.edges) {
    if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return;
  }
  curve.endpoints = {graph.vertices[static_cast<std::size_t>(a)].ref, graph.vertices[static_cast<std::size_t>(b)].ref};
  const double w = std::abs(graph.vertices[static_cast<std::size_t>(a)].energy - graph.vertices[static_cast<std::size_t>(b)].energy);
  graph.edges.push_back({a, b, w, std::move(curve)});
}

void explore(const EnergyModel& model, CostGraph& graph, std::size_t v, const CostOptions& opts) {
  graph.explored[v] = true;
  const Component comp = graph.vertices[v];
  if (comp.ref.kind != ComponentKind::critical_component) return;
  std::vector<std::size_t> exits;
  if (comp.continuum()) {
    const std::size_t n = comp.points.size();
    const std::size_t m = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, opts.loop_points)));
    for (std::size_t k = 0; k < m; ++k) exits.push_back(k * n / m);
  } else {
    exits.push_back(0);
  }
  for (std::size_t e : exits) {
    const Vec& p = comp.points[e];
    const CriticalPoint cp = classify(model, graph.t, p, opts.critical);
    const double tol = degeneracy_tol(cp.spectrum, opts.critical);
    for (Eigen::Index i = 0; i < cp.spectrum.size(); ++i) {
      if (cp.spectrum[i] > tol) continue;
      const Vec dir = cp.eigenvectors.col(i);
      if (comp.continuum() && std::abs(cp.spectrum[i]) <= tol && std::abs(dir.dot(polyline_tangent(comp.points, e))) > 0.5) {
        continue;
      }
      for (double sign : {1.0, -1.0}) {
        TransitionCurve curve = heterocline(model, graph.t, cp, sign * dir, opts.heterocline);
        if (curve.escaped) {
          ++graph.escaped;
          continue;
        }
        if (curve.incomplete) {
          ++graph.incomplete;
          continue;
        }
        const int w = snap_vertex(model, graph, curve.nodes.back(), opts);
        if (w >= 0) add_edge(graph, static_cast<int>(v), w, std::move(curve));
      }
    }
  }
}

void explore_all(const EnergyModel& model, CostGraph& graph, const CostOptions& opts) {
  for (std::size_t v = 0; v < graph.vertices.size(); ++v) {
    if (!graph.explored[v]) explore(model, graph, v, opts);
  }
}

struct ShortestPaths {
  std::vector<double> dist;
  std::vector<int> via_edge;
};

ShortestPaths dijkstra(const CostGraph& graph, int source) {
  const std::size_t n = graph.vertices.size();
  ShortestPaths sp{std::vector<double>(n, std::numeric_limits<double>::infinity()), std::vector<int>(n, -1)};
  std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, edge)
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    adj[static_cast<std::size_t>(graph.edges[e].a)].emplace_back(graph.edges[e].b, static_cast<int>(e));
    adj[static_cast<std::size_t>(graph.edges[e].b)].emplace_back(graph.edges[e].a, static_cast<int>(e));
  }
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  sp.dist[static_cast<std::size_t>(source)] = 0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > sp.dist[static_cast<std::size_t>(v)]) continue;
    for (const auto& [w, e] : adj[static_cast<std::size_t>(v)]) {
      const double nd = d + graph.edges[static_cast<std::size_t>(e)].weight;
      if (nd < sp.dist[static_cast<std::size_t>(w)]) {
        sp.dist[static_cast<std::size_t>(w)] = nd;
        sp.via_edge[static_cast<std::size_t>(w)] = e;
        queue.emplace(nd, w);
      }
    }
  }
  return sp;
}

}  // namespace

CostGraph build_cost_graph(const EnergyModel& model, const Atlas& atlas, double t, const CostOptions& opts) {
  CostGraph graph;
  graph.t = t;
  graph.vertices = components_at(model, atlas, t, opts.critical);
  graph.explored.assign(graph.vertices.size(), false);
  explore_all(model, graph, opts);
  return graph;
}

int resolve_vertex(const EnergyModel& model, CostGraph& graph, const ComponentRef& ref, const CostOptions& opts) {
  const double t = graph.t;
  const Vec& u = ref.representative;
  const bool critical = model.slope(t, u) <= critical_bound(u, opts.critical);
  if (ref.kind == ComponentKind::critical_component || critical) {
    if (ref.id) {
      for (std::size_t i = 0; i < graph.vertices.size(); ++i) {
        if (graph.vertices[i].ref.id && *graph.vertices[i].ref.id == *ref.id) return static_cast<int>(i);
      }
    }
    const int v = snap_vertex(model, graph, u, opts);
    explore_all(model, graph, opts);
    return v;
  }
  for (std::size_t i = 0; i < graph.vertices.size(); ++i) {
    const auto& c = graph.vertices[i];
    if (c.ref.kind == ComponentKind::noncritical_singleton && c.ref.representative == u) return static_cast<int>(i);
  }
  TransitionCurve curve = descend(model, t, u, opts.heterocline);
  if (curve.escaped || curve.incomplete) return -1;
  const int basin = snap_vertex(model, graph, curve.nodes.back(), opts);
  if (basin < 0) return -1;
  graph.vertices.push_back(vertex_from_point(model, t, u, ComponentKind::noncritical_singleton, opts.critical));
  graph.explored.push_back(true);
  const int v = static_cast<int>(graph.vertices.size()) - 1;
  curve.endpoints = {graph.vertices.back().ref, graph.vertices[static_cast<std::size_t>(basin)].ref};
  graph.edges.push_back({v, basin, graph.vertices.back().energy - graph.vertices[static_cast<std::size_t>(basin)].energy,
                         std::move(curve)});
  explore_all(model, graph, opts);
  return v;
}

CostResult cost(const EnergyModel& model, CostGraph& graph, const ComponentRef& U0_in, const ComponentRef& U1_in,
                const CostOptions& opts) {
  // the references may point into graph.vertices, which resolve_vertex can grow
  const ComponentRef U0 = U0_in;
  const ComponentRef U1 = U1_in;
  CostResult result;
  result.method = CostMethod::heteroclinic_graph;
  const int a = resolve_vertex(model, graph, U0, opts);
  const int b = resolve_vertex(model, graph, U1, opts);
  const double t = graph.t;
  if (a < 0 || b < 0) {
    result.curve = make_curve(model, t, {U0.representative, U1.representative});
    result.curve.endpoints = {U0, U1};
    return result;
  }
  const auto& va = graph.vertices[static_cast<std::size_t>(a)];
  const auto& vb = graph.vertices[static_cast<std::size_t>(b)];
  if (a == b) {
    result.value = 0.0;
    result.path = {a};
    std::vector<Vec> nodes{U0.representative};
    if (va.continuum()) {
      for (auto& x : thread_loop(va.points, U0.representative, U1.representative)) nodes.push_back(std::move(x));
    }
    nodes.push_back(U1.representative);
    result.curve = make_curve(model, t, std::move(nodes));
    result.curve.endpoints = {U0, U1};
    result.lower_bound_gap = 0.0;
    return result;
  }

  const ShortestPaths sp = dijkstra(graph, a);
  if (!std::isfinite(sp.dist[static_cast<std::size_t>(b)])) {
    result.curve = make_curve(model, t, {U0.representative, U1.representative});
    result.curve.endpoints = {U0, U1};
    return result;
  }

  // walk back from b, then thread the edge curves forward
  std::vector<int> edges_on_path;
  for (int v = b; v != a;) {
    const int e = sp.via_edge[static_cast<std::size_t>(v)];
    edges_on_path.push_back(e);
    const auto& edge = graph.edges[static_cast<std::size_t>(e)];
    v = edge.a == v ? edge.b : edge.a;
  }
  std::reverse(edges_on_path.begin(), edges_on_path.end());

  std::vector<Vec> nodes{U0.representative};
  int at = a;
  result.path.push_back(a);
  for (int e : edges_on_path) {
    const auto& edge = graph.edges[static_cast<std::size_t>(e)];
    std::vector<Vec> piece = edge.curve.nodes;
    if (edge.a != at) std::reverse(piece.begin(), piece.end());
    const auto& here = graph.vertices[static_cast<std::size_t>(at)];
    if (here.continuum()) {
      for (auto& x : thread_loop(here.points, nodes.back(), piece.front())) nodes.push_back(std::move(x));
    }
    for (auto& x : piece) nodes.push_back(std::move(x));
    at = edge.a == at ? edge.b : edge.a;
    result.path.push_back(at);
  }
  if (vb.continuum()) {
    for (auto& x : thread_loop(vb.points, nodes.back(), U1.representative)) nodes.push_back(std::move(x));
    nodes.push_back(U1.representative);
  }
  result.value = sp.dist[static_cast<std::size_t>(b)];
  result.curve = make_curve(model, t, std::move(nodes));
  result.curve.endpoints = {U0, U1};
  result.lower_bound_gap = *result.value - std::abs(vb.energy - va.energy);
  return result;
}

CostResult cost(const EnergyModel& model, const Atlas& atlas, double t, const ComponentRef& U0, const ComponentRef& U1,
                const CostOptions& opts) {
  CostGraph graph = build_cost_graph(model, atlas, t, opts);
  return cost(model, graph, U0, U1, opts);
}

CostMatrix cost_matrix(const EnergyModel& model, const Atlas& atlas, double t, const CostOptions& opts) {
  CostGraph graph = build_cost_graph(model, atlas, t, opts);
  CostMatrix m;
  m.t = t;
  m.components = components_at(model, atlas, t, opts.critical);
  const std::size_t n = m.components.size();
  m.values.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const ShortestPaths sp = dijkstra(graph, static_cast<int>(i));
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isfinite(sp.dist[j])) m.values[i][j] = sp.dist[j];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------------------------------------------------

TransitionCurve reparameterize(const TransitionCurve& curve) {
  TransitionCurve out = curve;
  const std::size_t n = curve.nodes.size();
  if (n < 2) return out;
  std::vector<double> partial(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    partial[k] = partial[k - 1] + 0.5 * (curve.slopes[k - 1] + curve.slopes[k]) * (curve.nodes[k] - curve.nodes[k - 1]).norm();
  }
  const double p0 = curve.params.front();
  const double span = curve.params.back() - p0;
  const double total = span + partial.back();
  if (total <= 0) return out;
  for (std::size_t k = 0; k < n; ++k) out.params[k] = (curve.params[k] - p0 + partial[k]) / total;
  return out;
}

std::vector<double> segment_loads(const TransitionCurve& original, const TransitionCurve& reparameterized) {
  std::vector<double> loads;
  const std::size_t n = std::min(original.nodes.size(), reparameterized.nodes.size());
  for (std::size_t k = 1; k < n; ++k) {
    const double dr = reparameterized.params[k] - reparameterized.params[k - 1];
    if (dr <= 0) continue;
    const double w = 0.5 * (original.slopes[k - 1] + original.slopes[k]) * (original.nodes[k] - original.nodes[k - 1]).norm();
    loads.push_back((original.params[k] - original.params[k - 1] + w) / dr);
  }
  return loads;
}

namespace {

double functional(const std::vector<Vec>& nodes, const std::vector<double>& slopes) {
  double sum = 0;
  for (std::size_t k = 1; k < nodes.size(); ++k) sum += 0.5 * (slopes[k - 1] + slopes[k]) * (nodes[k] - nodes[k - 1]).norm();
  return sum;
}

std::vector<double> slopes_of(const EnergyModel& model, double t, const std::vector<Vec>& nodes) {
  std::vector<double> s;
  s.reserve(nodes.size());
  for (const auto& x : nodes) s.push_back(model.slope(t, x));
  return s;
}

/// Nodes equally spaced in arclength plus slope-weighted length along the polyline.
std::vector<Vec> redistribute(const std::vector<Vec>& nodes, const std::vector<double>& slopes) {
  const std::size_t n = nodes.size();
  std::vector<double> cum(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    cum[k] = cum[k - 1] + (nodes[k] - nodes[k - 1]).norm() * (1 + 0.5 * (slopes[k - 1] + slopes[k]));
  }
  const double total = cum.back();
  if (total <= 0) return nodes;
  std::vector<Vec> out{nodes.front()};
  std::size_t seg = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double target = total * static_cast<double>(i) / static_cast<double>(n - 1);
    while (seg + 2 < n && cum[seg + 1] < target) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double a = len > 0 ? std::clamp((target - cum[seg]) / len, 0.0, 1.0) : 0.0;
    out.push_back(nodes[seg] + a * (nodes[seg + 1] - nodes[seg]));
  }
  out.push_back(nodes.back());
  return out;
}

}  // namespace

CostResult direct_minimization(const EnergyModel& model, const TransitionCurve& initial, const DirectOptions& opts) {
  const double t = initial.t;
  CostResult result;
  result.method = CostMethod::direct_minimization;
  std::vector<Vec> nodes = resample_by_arclength(initial.nodes, std::max<std::size_t>(opts.nodes, 2));
  std::vector<double> slopes = slopes_of(model, t, nodes);
  nodes = redistribute(nodes, slopes);
  slopes = slopes_of(model, t, nodes);
  double value = functional(nodes, slopes);
  std::vector<Vec> best_nodes = nodes;
  double best = value;
  const std::size_t n = nodes.size();

  for (int it = 0; it < opts.iterations && n > 2; ++it) {
    std::vector<Vec> grad(n, Vec::Zero(model.dim()));
    for (std::size_t k = 1; k + 1 < n; ++k) {
      const Vec back = nodes[k] - nodes[k - 1];
      const Vec fwd = nodes[k + 1] - nodes[k];
      const double lb = back.norm(), lf = fwd.norm();
      Vec g = Vec::Zero(model.dim());
      if (slopes[k] > 0) {
        const Vec de = model.gradient(t, nodes[k]);
        g += 0.5 * (lb + lf) * (model.hessian(t, nodes[k]) * de) / slopes[k];
      }
      if (lb > 0) g += 0.5 * (slopes[k - 1] + slopes[k]) * back / lb;
      if (lf > 0) g -= 0.5 * (slopes[k] + slopes[k + 1]) * fwd / lf;
      const Vec chord = nodes[k + 1] - nodes[k - 1];
      if (chord.norm() > 0) {
        const Vec tan = chord.normalized();
        g -= g.dot(tan) * tan;
      }
      grad[k] = std::move(g);
    }
    double alpha = opts.step;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
      std::vector<Vec> trial = nodes;
      for (std::size_t k = 1; k + 1 < n; ++k) trial[k] -= alpha * grad[k];
      const std::vector<double> ts = slopes_of(model, t, trial);
      const double tv = functional(trial, ts);
      if (tv < value) {
        nodes = redistribute(trial, ts);
        slopes = slopes_of(model, t, nodes);
        value = functional(nodes, slopes);
        improved = true;
        break;
      }
    }
    if (value < best) {
      best = value;
      best_nodes = nodes;
    }
    if (!improved) break;
  }

  result.value = best;
  result.curve = make_curve(model, t, std::move(best_nodes));
  result.curve.endpoints = initial.endpoints;
  result.lower_bound_gap = best - std::abs(result.curve.energies.back() - result.curve.energies.front());
  return result;
}

}  // namespace critflow

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "critflow/critical_atlas.hpp"

/**
 * \file transition_cost.hpp
 *
 * @brief Energy-dissipation cost c_t(U0,U1) between components at a frozen time.
 *
 * The primary value comes from a graph whose vertices are the components of C(t) and whose edges are heteroclines
 * (frozen-time gradient-flow orbits) weighted by |Delta E|. A string-type descent on the discretized functional
 * sum slope * |Delta theta| cross-checks it from above.
 */

namespace critflow {

struct TransitionCurve {
  double t = 0;
  std::vector<Vec> nodes;
  /// nondecreasing parameter in [0,1]; normalized arclength unless reparameterized
  std::vector<double> params;
  std::vector<double> slopes;
  std::vector<double> energies;
  std::array<ComponentRef, 2> endpoints;
  /// sum_k (slope_k + slope_{k+1})/2 * |theta_{k+1} - theta_k|
  double slope_weighted_length = 0;
  /// slope > 1e-8 (1 + |theta|): nodes off the critical set
  std::vector<bool> noncritical_mask;
  bool escaped = false;
  bool incomplete = false;

  std::size_t size() const noexcept { return nodes.size(); }
};

/// Fills params (normalized arclength), slopes, energies, mask and length from nodes.
TransitionCurve make_curve(const EnergyModel& model, double t, std::vector<Vec> nodes);

double slope_weighted_length(const EnergyModel& model, double t, const std::vector<Vec>& nodes);

/// Resample a polyline to n nodes equally spaced in arclength.
std::vector<Vec> resample_by_arclength(const std::vector<Vec>& nodes, std::size_t n);

struct HeteroclineOptions {
  double rho = 10;
  /// stop once slope <= critical_tol (1 + |theta|)
  double critical_tol = 1e-9;
  /// displacement cap per step, relative to 1 + |theta|
  double max_step_rel = 2.5e-4;
  double max_arclength = 100;
  std::size_t max_steps = 2'000'000;
  std::size_t nodes = 2000;
};

/**
 * @brief Frozen-time descent theta' = -DE(t, theta) from saddle + delta * direction, delta = 1e-4 (1 + |u|).
 *
 * Implicit Euler with step min(1/(2 lambda), max_step / slope). The first node is the saddle itself; the last is the
 * Newton-polished limit point. Flags escape from {shifted <= rho} and an exhausted budget.
 */
TransitionCurve heterocline(const EnergyModel& model, double t, const CriticalPoint& saddle, const Vec& direction,
                            const HeteroclineOptions& opts = {});

/// Same descent from an arbitrary start point, without offset.
TransitionCurve descend(const EnergyModel& model, double t, const Vec& start, const HeteroclineOptions& opts = {});

enum class CostMethod { heteroclinic_graph, direct_minimization };

std::string to_string(CostMethod m);

struct CostResult {
  /// nullopt when no admissible transition was found (infinite cost)
  std::optional<double> value;
  TransitionCurve curve;
  CostMethod method = CostMethod::heteroclinic_graph;
  std::optional<double> lower_bound_gap;
  /// graph vertices visited by the witness
  std::vector<int> path;

  bool reachable() const noexcept { return value.has_value(); }
};

struct DirectOptions {
  std::size_t nodes = 200;
  int iterations = 500;
  double step = 1e-2;
};

struct CostOptions {
  HeteroclineOptions heterocline;
  CriticalOptions critical;
  /// exit points per continuum
  int loop_points = 8;
  /// heterocline endpoints farther than this from every component become new vertices
  double snap_tol = 1e-3;
};

struct CostEdge {
  int a = 0;
  int b = 0;
  double weight = 0;
  TransitionCurve curve;  ///< from vertex a to vertex b
};

/// Vertices (components of C(t) plus any extra endpoints) and heteroclinic edges at one frozen time.
struct CostGraph {
  double t = 0;
  std::vector<Component> vertices;
  std::vector<CostEdge> edges;
  std::vector<bool> explored;
  int escaped = 0;
  int incomplete = 0;
};

CostGraph build_cost_graph(const EnergyModel& model, const Atlas& atlas, double t, const CostOptions& opts = {});

/// Vertex of a reference, adding a descent edge for a noncritical singleton. -1 if it cannot be resolved.
int resolve_vertex(const EnergyModel& model, CostGraph& graph, const ComponentRef& ref, const CostOptions& opts = {});

CostResult cost(const EnergyModel& model, CostGraph& graph, const ComponentRef& U0, const ComponentRef& U1,
                const CostOptions& opts = {});

CostResult cost(const EnergyModel& model, const Atlas& atlas, double t, const ComponentRef& U0, const ComponentRef& U1,
                const CostOptions& opts = {});

/// Reference to a critical component, suitable as a cost endpoint.
ComponentRef component_ref(const Component& c);

/// Reference to the noncritical singleton {u} at time t.
ComponentRef singleton_ref(double t, const Vec& u);

/**
 * @brief Normalize the parameter so that d(old param)/dr + slope |d theta/dr| is constant.
 *
 * Nodes are kept; the new parameters r_k = (p_k + L_k)/(1 + L) with L_k the partial slope-weighted length. The
 * slope-weighted length is unchanged.
 */
TransitionCurve reparameterize(const TransitionCurve& curve);

/// Per-segment (Delta p_k + w_k)/Delta r_k between a curve and its reparameterization.
std::vector<double> segment_loads(const TransitionCurve& original, const TransitionCurve& reparameterized);

/**
 * @brief Local descent on sum (slope_k + slope_{k+1})/2 |Delta theta_k| from an initial witness, endpoints pinned.
 *
 * The gradient is projected normal to the curve and nodes are redistributed in arclength plus slope-weighted length
 * after each step. Returns the smallest value seen with its curve.
 */
CostResult direct_minimization(const EnergyModel& model, const TransitionCurve& initial, const DirectOptions& opts = {});

struct CostMatrix {
  double t = 0;
  std::vector<Component> components;
  std::vector<std::vector<std::optional<double>>> values;
};

CostMatrix cost_matrix(const EnergyModel& model, const Atlas& atlas, double t, const CostOptions& opts = {});

}  // namespace critflow

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "critflow/energy_model.hpp"

/**
 * \file critical_atlas.hpp
 *
 * @brief Critical points DE(t,u) = 0, their continuation into branches and the atlas of the critical set.
 */

namespace critflow {

enum class Classification { nondegenerate_min, nondegenerate_saddle, nondegenerate_max, degenerate };

std::string to_string(Classification c);

struct CriticalOptions {
  /// |DE| <= critical_tol * (1 + |u|) for a point to count as critical.
  double critical_tol = 1e-9;
  /// Eigenvalues with |lambda_i| <= degeneracy_rel * (1 + spectral radius) count as zero.
  double degeneracy_rel = 1e-6;
  int newton_max_iter = 100;
  /// Roots closer than dedup_tol * (1 + |u|) are the same root.
  double dedup_tol = 1e-6;
};

struct CriticalPoint {
  double t = 0;
  Vec u;
  double residual = 0;
  Vec spectrum;      ///< ascending Hessian eigenvalues
  Mat eigenvectors;  ///< columns match spectrum
  int kernel_dim = 0;
  int morse_index = 0;
  Classification classification = Classification::nondegenerate_min;

  bool degenerate() const noexcept { return kernel_dim > 0; }
};

double degeneracy_tol(const Vec& spectrum, const CriticalOptions& opts = {});
double critical_bound(const Vec& u, const CriticalOptions& opts = {});

/// Spectral classification of (t,u); does not require u to be critical.
CriticalPoint classify(const EnergyModel& model, double t, const Vec& u, const CriticalOptions& opts = {});

/// Newton on u -> DE(t,u) at fixed t from a guess, with pseudo-inverse steps. nullopt if not critical at the end.
std::optional<CriticalPoint> polish_critical(const EnergyModel& model, double t, const Vec& guess,
                                             const CriticalOptions& opts = {});

/**
 * @brief Deflated Newton from every seed; returns distinct converged roots.
 *
 * Line-search acceptance uses |DE(u)| * prod_j (1/|u - r_j|^2 + 1) over the roots r_j found so far, which repels the
 * iteration from known roots. Seeds that do not converge are dropped.
 */
std::vector<CriticalPoint> find_critical(const EnergyModel& model, double t, const std::vector<Vec>& seeds,
                                         const CriticalOptions& opts = {});

// ---------------------------------------------------------------------------------------------------------------------

struct BranchSample {
  double s = 0;
  double t = 0;
  Vec u;
  /// unit vector (t', u') in R^{d+1}
  Vec tangent;
  Vec spectrum;
  double residual = 0;
  bool fold = false;
  /// index of the monotone-in-t piece of the branch the sample belongs to; a fold closes its sheet
  int sheet = 0;
};

enum class BranchKind {
  /// curve s -> (t(s), u(s)) of the critical set
  time_curve,
  /// continuum of critical points at one frozen time
  fixed_time_loop
};

struct CriticalBranch {
  BranchKind kind = BranchKind::time_curve;
  std::vector<BranchSample> samples;
  std::vector<std::size_t> folds;  ///< indices into samples
  bool closed = false;
  bool truncated = false;     ///< corrector divergence
  std::string stop_forward;   ///< why continuation ended for increasing s
  std::string stop_backward;  ///< why continuation ended for decreasing s

  int sheet_count() const { return samples.empty() ? 0 : samples.back().sheet + 1; }
};

struct ContinuationOptions {
  double rho = 10;
  /// Continuation time window; unset means [-T, T]. (The negative part closes S-shaped branches.)
  std::optional<std::pair<double, double>> time_window;
  int max_steps = 20000;
  /// tolerance of |t'| at refined folds
  double fold_tol = 1e-10;
  CriticalOptions critical;
};

std::pair<double, double> time_window(const EnergyModel& model, const ContinuationOptions& opts);

/**
 * @brief Pseudo-arclength continuation of DE(t,u) = 0 through ``start`` in both directions.
 *
 * Tangent predictor and Newton corrector orthogonal to the tangent; stops on leaving {shifted <= rho}, leaving the time
 * window, or exhausting s_span = [s_lo, s_hi] (s_lo <= 0 <= s_hi). Folds where t'(s) changes sign are located by
 * bisection. Stops with reason "kernel_dim>=2" when [d_t DE | D^2E] is rank deficient.
 */
CriticalBranch continue_branch(const EnergyModel& model, const CriticalPoint& start, double arc_step,
                               std::pair<double, double> s_span, const ContinuationOptions& opts = {});

/// Trace the continuum of critical points through ``start`` at its frozen time (kernel of D^2E of dimension 1).
CriticalBranch trace_fixed_time_loop(const EnergyModel& model, const CriticalPoint& start, double arc_step, double s_max,
                                     const ContinuationOptions& opts = {});

// ---------------------------------------------------------------------------------------------------------------------

struct CoverageReport {
  int probes = 0;
  int roots_found = 0;
  int uncovered = 0;
  double max_distance = 0;
};

struct Atlas {
  double rho = 10;
  double t_min = 0;
  double t_max = 0;
  bool autonomous = false;
  double arc_step = 0.01;
  std::vector<CriticalBranch> branches;
  std::vector<CriticalPoint> isolated;
  CoverageReport coverage;

  std::size_t fold_count() const;
};

struct AtlasOptions {
  double arc_step = 0.01;
  double s_max = 50;
  /// seeds per axis for d <= 3; for larger d, 4 * seed_grid pseudo-random sublevel points per probe time
  std::uint64_t seed = 1;
  int coverage_probes = 16;
  ContinuationOptions continuation;
};

/**
 * @brief Seed, continue and merge critical branches within the sublevel {shifted <= rho}.
 *
 * Roots are found on t_grid probe times by deflated Newton from seed_grid seeds per axis. A root already within
 * arc_step/4 of a traced branch is not continued again. Roots where the extended Jacobian is rank deficient are traced
 * as fixed-time continua, or kept as isolated points.
 */
Atlas build_atlas(const EnergyModel& model, double rho, int t_grid, int seed_grid, const AtlasOptions& opts = {});

// ---------------------------------------------------------------------------------------------------------------------

enum class ComponentKind { critical_component, noncritical_singleton };

struct ComponentId {
  enum class Source { sheet, loop, isolated };
  Source source = Source::sheet;
  int index = 0;  ///< branch or isolated index
  int sheet = 0;  ///< for Source::sheet

  bool operator==(const ComponentId&) const = default;
};

std::string to_string(const ComponentId& id);

struct ComponentRef {
  ComponentKind kind = ComponentKind::critical_component;
  double t = 0;
  Vec representative;
  std::optional<ComponentId> id;  ///< absent for singletons
};

/// A connected component of C(t) sampled by the atlas.
struct Component {
  ComponentRef ref;
  /// sample points; one for point components, the closed polyline for continua
  std::vector<Vec> points;
  CriticalPoint critical;  ///< at the representative
  double energy = 0;

  bool continuum() const { return points.size() > 1; }
};

/// Components of C(t): sheet crossings of time curves, plus continua and isolated points alive at t.
std::vector<Component> components_at(const EnergyModel& model, const Atlas& atlas, double t,
                                     const CriticalOptions& opts = {});

/// The component with the given identity at time t (a sheet followed to t); nullopt if it does not exist at t.
std::optional<Component> component_at(const EnergyModel& model, const Atlas& atlas, const ComponentId& id, double t,
                                      const CriticalOptions& opts = {});

/// Distance from u to a component (polyline distance for continua).
double distance_to(const Component& c, const Vec& u);

/// Index of the nearest component and its distance; {-1, inf} if empty.
std::pair<int, double> nearest_component(const std::vector<Component>& comps, const Vec& u);

/// Distance from (t,u) to the sampled atlas in R^{1+d}.
double distance_to_atlas(const Atlas& atlas, double t, const Vec& u);

// ---------------------------------------------------------------------------------------------------------------------

struct TransversalityReport {
  int kernel_dim = 0;
  std::optional<double> t2_value;  ///< <d_t DE, v> for the unit kernel vector v
  std::optional<double> t3_value;  ///< D^3E[v,v,v]
  bool passes_T1 = true;
  bool passes_T2 = true;
  bool passes_T3 = true;

  bool passes_partial() const { return passes_T1 && passes_T2; }
  bool passes_full() const { return passes_T1 && passes_T2 && passes_T3; }
};

/// transversality conditions at a degenerate point; nondegenerate points pass trivially with kernel_dim = 0.
TransversalityReport transversality(const EnergyModel& model, const CriticalPoint& cp, double tol = 1e-6);

/// D^3E(t,u)[v,v,v] from Richardson-extrapolated centered second differences of <DE(t, u + s v), v>.
double third_directional_derivative(const EnergyModel& model, double t, const Vec& u, const Vec& v, double h = 1e-4);

struct LusinReport {
  double t = 0;
  std::vector<double> values;   ///< one representative energy per cluster, ascending
  std::vector<double> spreads;  ///< max - min energy inside each cluster
  int component_count = 0;
  int distinct_count = 0;
  /// total length of the clusters' covering intervals, counting spreads below the clustering tolerance as points
  double outer_estimate = 0;
};

LusinReport lusin_diagnostic(const EnergyModel& model, const Atlas& atlas, double t, double value_tol = 1e-8);

}  // namespace critflow

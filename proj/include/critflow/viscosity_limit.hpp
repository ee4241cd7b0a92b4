#pragma once

#include <optional>
#include <string>
#include <vector>

#include "critflow/flow_integrator.hpp"
#include "critflow/transition_cost.hpp"

/**
 * \file viscosity_limit.hpp
 *
 * @brief Epsilon sweeps, jump detection and the energy balance of the vanishing-viscosity limit.
 */

namespace critflow {

struct StepPolicy {
  /// tau(eps) = min(base_step, eps * eps_fraction)
  double base_step = 1e-3;
  double eps_fraction = 1.0 / 20;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  bool refine_fast_transitions = false;

  double step_for(double epsilon) const;
};

struct SweepFailure {
  double epsilon = 0;
  std::string message;
};

struct SweepResult {
  /// epsilons of the successful trajectories, decreasing
  std::vector<double> epsilons;
  std::vector<Trajectory> trajectories;
  std::vector<SweepFailure> failures;
  Vec u0;
  double horizon = 0;
};

/// One trajectory per epsilon on up to ``threads`` workers (0: hardware concurrency).
SweepResult sweep(const EnergyModel& model, const Vec& u0, const std::vector<double>& epsilons, const StepPolicy& policy = {},
                  unsigned threads = 0);

struct JumpWindow {
  double begin = 0;
  double end = 0;
  /// barycenter of the dissipation density inside the fast interval
  double barycenter = 0;
  double fast_begin = 0;
  double fast_end = 0;
  double mass = 0;
  /// the fast interval starts at the first step
  bool initial = false;
};

struct WindowOptions {
  double speed_factor = 10;
};

/**
 * @brief Maximal intervals where the speed exceeds speed_factor times max(median speed, span/T, 1e-6 (1+max|u|)/T).
 *
 * Each interval is widened to its barycenter +- max(5 eps log(1/eps), 20 tau), clipped to [0,T]; overlapping windows
 * merge.
 */
std::vector<JumpWindow> detect_jump_windows(const Trajectory& traj, const WindowOptions& opts = {});

struct JumpRecord {
  /// extrapolated jump time (0 for the initial relaxation)
  double t_jump = 0;
  /// barycenter at the smallest epsilon
  double t_raw = 0;
  /// time at which the flanking components and the cost are evaluated
  double t_cert = 0;
  JumpWindow window;
  ComponentRef left_component;
  ComponentRef right_component;
  double energy_drop = 0;
  std::optional<double> cost_value;
  double local_mu_mass = 0;
  bool initial = false;
  bool resolved = false;
  std::string note;
};

struct LimitEstimate {
  double epsilon = 0;  ///< smallest epsilon
  std::vector<double> times;
  std::vector<Vec> limit_states;
  std::vector<bool> in_window;
  std::vector<JumpRecord> jumps;
  double bv_balance_residual = 0;
  /// max slope off jump windows along the smallest-eps trajectory, and that value over sqrt(eps)
  double max_offjump_slope = 0;
  double criticality_constant = 0;
  /// max |u_eps1(t) - u_eps2(t)| off the windows of both smallest epsilons
  double cross_validation_gap = 0;
  std::size_t windows_smallest = 0;
  std::size_t windows_second = 0;
};

struct ExtractOptions {
  WindowOptions windows;
  std::size_t samples = 501;
  CostOptions cost;
};

LimitEstimate extract_limit(const EnergyModel& model, const SweepResult& sweep, const Atlas& atlas,
                            const ExtractOptions& opts = {});

struct LocalizationRow {
  double epsilon = 0;
  double inside = 0;
  double outside = 0;
  std::size_t windows = 0;
};

struct LocalizationReport {
  std::vector<LocalizationRow> rows;
  /// sum of jump costs of the limit
  double target = 0;
  /// rows whose window count equals that of the smallest epsilon, ending at it
  std::size_t tail_begin = 0;
  bool outside_decreasing = false;
  bool inside_approaching = false;
  double final_ratio = 0;  ///< inside / target at the smallest epsilon (1 when both vanish)
  bool passes = false;
};

LocalizationReport dissipation_localization(const SweepResult& sweep, const LimitEstimate& limit,
                                            const WindowOptions& opts = {});

/// Symmetric Hausdorff distance between {(t_k, u_k)} graphs under max(|t - s|, |u - v|).
double graph_hausdorff(const Trajectory& a, const Trajectory& b);

/// Linear interpolation of the trajectory state at time t.
Vec state_at(const Trajectory& traj, double t);

}  // namespace critflow

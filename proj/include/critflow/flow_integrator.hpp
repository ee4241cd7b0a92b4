#pragma once

#include <cstddef>
#include <vector>

#include "critflow/energy_model.hpp"

/**
 * \file flow_integrator.hpp
 *
 * @brief Implicit Euler (minimizing movement) integration of eps u' + DE(t,u) = 0.
 */

namespace critflow {

class IntegrationError : public Error {
public:
  IntegrationError(const std::string& what, std::size_t step, double residual)
      : Error(what), step_(step), residual_(residual) {}
  std::size_t step() const noexcept { return step_; }
  double residual() const noexcept { return residual_; }

private:
  std::size_t step_;
  double residual_;
};

struct FlowConfig {
  double epsilon = 0.1;
  /// Uniform time step; adjusted down so that the grid ends exactly at the horizon.
  double step = 1e-3;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  /// Halve the step while the displacement exceeds 10x the running median displacement.
  bool refine_fast_transitions = false;
  int max_refinements = 6;
};

/// Throws IntegrationError when the configuration is invalid for the model (tau < eps/lambda).
void validate(const FlowConfig& config, const EnergyModel& model);

struct Trajectory {
  double epsilon = 0;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> energies;
  std::vector<double> slopes;
  std::vector<double> powers;
  /// d_k = eps/2 |(u_k - u_{k-1})/tau_k|^2 + 1/(2 eps) |DE(t_k,u_k)|^2; node 0 carries no velocity term.
  std::vector<double> dissipation_density;

  std::size_t size() const noexcept { return times.size(); }
  double horizon() const { return times.back(); }
  double step_length(std::size_t k) const { return times[k] - times[k - 1]; }
  int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
};

struct StepResult {
  Vec state;
  double residual = 0;
  int iterations = 0;
  bool converged = false;
};

/**
 * @brief Solve eps (u - prev)/tau + DE(t, u) = 0 by damped Newton from the initial guess prev.
 *
 * ``ratio`` is eps/tau. The update is halved while the residual norm does not decrease.
 */
StepResult implicit_step(const EnergyModel& model, double t, const Vec& prev, double ratio, double tol, int max_iter);

Trajectory integrate(const EnergyModel& model, const FlowConfig& config, const Vec& u0);

/// max_k | sum_{j<=k} tau_j d_j + E(t_k,u_k) - E(0,u_0) - sum_{j<=k} tau_j P(t_j,u_j) |.
double energy_identity_residual(const EnergyModel& model, const Trajectory& traj);

/// sum of tau_k d_k over nodes k >= 1 with t_k in [begin, end].
double dissipation_measure(const Trajectory& traj, double begin, double end);

/// sum_k slope_k |u_k - u_{k-1}|, the left side of the Young inequality against the dissipation.
double slope_displacement_sum(const Trajectory& traj);

}  // namespace critflow

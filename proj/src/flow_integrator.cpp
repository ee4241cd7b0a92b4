#include "critflow/flow_integrator.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace critflow {

void validate(const FlowConfig& config, const EnergyModel& model) {
  if (!(config.epsilon > 0)) throw IntegrationError("flow: epsilon must be positive", 0, 0);
  if (!(config.step > 0)) throw IntegrationError("flow: step must be positive", 0, 0);
  if (!(config.newton_tol > 0) || config.newton_max_iter < 1) throw IntegrationError("flow: invalid Newton settings", 0, 0);
  const double lambda = model.lambda_bound();
  if (lambda > 0 && !(config.step < config.epsilon / lambda)) {
    throw IntegrationError(fmt::format("flow: step {} violates tau < eps/lambda = {}", config.step, config.epsilon / lambda), 0, 0);
  }
}

StepResult implicit_step(const EnergyModel& model, double t, const Vec& prev, double ratio, double tol, int max_iter) {
  const int d = model.dim();
  StepResult out;
  Vec u = prev;
  auto residual_of = [&](const Vec& x) -> Vec { return ratio * (x - prev) + model.gradient(t, x); };
  Vec r = residual_of(u);
  double rn = r.norm();
  int it = 0;
  for (; it < max_iter && rn > tol; ++it) {
    const Mat J = ratio * Mat::Identity(d, d) + model.hessian(t, u);
    Vec delta = J.ldlt().solve(-r);
    if (!delta.allFinite()) delta = J.completeOrthogonalDecomposition().solve(-r);
    double damping = 1.0;
    Vec trial = u + delta;
    Vec rt = residual_of(trial);
    while (!(rt.norm() < rn) && damping > 1e-12) {
      damping *= 0.5;
      trial = u + damping * delta;
      rt = residual_of(trial);
    }
    if (!(rt.norm() < rn)) break;  // stagnation at round-off
    u = std::move(trial);
    r = std::move(rt);
    rn = r.norm();
  }
  out.state = std::move(u);
  out.residual = rn;
  out.iterations = it;
  // Residuals stuck within a few ulps of the scale of the step are accepted.
  const double floor = 64 * std::numeric_limits<double>::epsilon() * (1 + ratio * (1 + out.state.norm()));
  out.converged = rn <= std::max(tol, floor);
  return out;
}

namespace {

void push_node(Trajectory& traj, const EnergyModel& model, double t, const Vec& u) {
  const Vec g = model.gradient(t, u);
  const double slope = g.norm();
  const double eps = traj.epsilon;
  double density = slope * slope / (2 * eps);
  if (!traj.times.empty()) {
    const double tau = t - traj.times.back();
    const double speed = (u - traj.states.back()).norm() / tau;
    density += 0.5 * eps * speed * speed;
  }
  traj.times.push_back(t);
  traj.states.push_back(u);
  traj.energies.push_back(model.energy(t, u));
  traj.slopes.push_back(slope);
  traj.powers.push_back(model.power(t, u));
  traj.dissipation_density.push_back(density);
  if (!std::isfinite(traj.energies.back())) {
    throw IntegrationError(fmt::format("flow: non-finite energy at t={}", t), traj.times.size() - 1, 0);
  }
}

double median_of(std::deque<double> values) {
  std::vector<double> v(values.begin(), values.end());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

Trajectory integrate(const EnergyModel& model, const FlowConfig& config, const Vec& u0) {
  validate(config, model);
  if (u0.size() != model.dim()) throw IntegrationError("flow: initial state has the wrong dimension", 0, 0);
  if (!std::isfinite(model.energy(0.0, u0))) throw IntegrationError("flow: initial energy is not finite", 0, 0);

  const double T = model.horizon();
  const auto steps = static_cast<std::size_t>(std::ceil(T / config.step - 1e-9));
  const double tau = T / static_cast<double>(steps);

  Trajectory traj;
  traj.epsilon = config.epsilon;
  traj.times.reserve(steps + 1);
  push_node(traj, model, 0.0, u0);

  std::deque<double> recent;  // displacements of the last accepted coarse steps
  constexpr std::size_t window = 200;

  for (std::size_t k = 1; k <= steps; ++k) {
    const double t_end = k == steps ? T : static_cast<double>(k) * tau;
    const double t_begin = traj.times.back();
    const Vec start = traj.states.back();

    auto advance = [&](double from, const Vec& u, double to) {
      StepResult s = implicit_step(model, to, u, config.epsilon / (to - from), config.newton_tol, config.newton_max_iter);
      if (!s.converged) {
        throw IntegrationError(fmt::format("flow: Newton failed at step {} (t={}), residual {:.3e}", k, to, s.residual), k,
                               s.residual);
      }
      return s.state;
    };

    // nodes of this coarse step; more than one only after refinement
    std::vector<std::pair<double, Vec>> path{{t_end, advance(t_begin, start, t_end)}};
    const double disp = (path.back().second - start).norm();
    if (config.refine_fast_transitions && recent.size() >= 20) {
      const double med = median_of(recent);
      double worst = disp;
      for (int level = 1; level <= config.max_refinements && med > 0 && worst > 10 * med; ++level) {
        const int parts = 1 << level;
        const double h = (t_end - t_begin) / parts;
        path.clear();
        Vec u = start;
        double from = t_begin;
        worst = 0;
        for (int j = 1; j <= parts; ++j) {
          const double to = j == parts ? t_end : t_begin + j * h;
          Vec n = advance(from, u, to);
          // displacement rescaled to a coarse step
          worst = std::max(worst, (n - u).norm() * parts);
          path.emplace_back(to, n);
          u = std::move(n);
          from = to;
        }
      }
    }
    for (const auto& [t, u] : path) push_node(traj, model, t, u);
    recent.push_back(disp);
    if (recent.size() > window) recent.pop_front();
  }
  return traj;
}

double energy_identity_residual(const EnergyModel&, const Trajectory& traj) {
  double dissipated = 0, supplied = 0, worst = 0;
  const double e0 = traj.energies.front();
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double tau = traj.step_length(k);
    dissipated += tau * traj.dissipation_density[k];
    supplied += tau * traj.powers[k];
    worst = std::max(worst, std::abs(dissipated + traj.energies[k] - e0 - supplied));
  }
  return worst;
}

double dissipation_measure(const Trajectory& traj, double begin, double end) {
  if (!(end >= begin)) return 0;
  double mass = 0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    if (traj.times[k] >= begin && traj.times[k] <= end) mass += traj.step_length(k) * traj.dissipation_density[k];
  }
  return mass;
}

double slope_displacement_sum(const Trajectory& traj) {
  double sum = 0;
  for (std::size_t k = 1; k < traj.size(); ++k) sum += traj.slopes[k] * (traj.states[k] - traj.states[k - 1]).norm();
  return sum;
}

}  // namespace critflow

#pragma once

#include <cmath>
#include <random>

#include "critflow/energy_model.hpp"

namespace critflow {

/// Uniform point in the d-ball of the given radius.
inline Vec uniform_in_ball(int d, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = normal(rng);
  const double n = v.norm();
  if (n == 0) return Vec::Zero(d);
  return v * (radius * std::pow(unit(rng), 1.0 / d) / n);
}

/**
 * @brief Pseudo-random point of the sublevel {shifted energy at t <= rho}.
 *
 * Draws in the model's sampling box and contracts towards the origin until the point lies in the sublevel;
 * the origin is assumed to lie inside it (true for every built-in at the sublevels used here).
 */
inline Vec draw_sublevel_point(const EnergyModel& model, double t, double rho, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> box(-model.sample_radius(), model.sample_radius());
  std::uniform_real_distribution<double> unit(0.5, 1.0);
  Vec u(model.dim());
  for (int i = 0; i < model.dim(); ++i) u[i] = box(rng);
  for (int tries = 0; tries < 200 && model.shifted_energy(t, u) > rho; ++tries) u *= unit(rng);
  if (model.shifted_energy(t, u) > rho) u.setZero();
  return u;
}

}  // namespace critflow

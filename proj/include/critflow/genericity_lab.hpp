#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "critflow/critical_atlas.hpp"

/**
 * \file genericity_lab.hpp
 *
 * @brief Generic perturbations E + <y,u> + K(u,u)/2 and sampled transversality statistics.
 */

namespace critflow {

struct Perturbation {
  Vec linear;
  /// K(u,v) = sum_j <w_j,u><w_j,v>
  std::vector<Vec> quadratic_vectors;
  double radius = 0;

  Mat quadratic_form(int dim) const;
};

/// Perturbed model; lambda and C_P unchanged (K is positive semidefinite), floor lowered by |y| times the sampling diameter.
EnergyModel perturb(const EnergyModel& model, const Perturbation& p);

enum class GenericMode { linear, linear_quadratic };

std::string to_string(GenericMode m);
GenericMode generic_mode_from_string(const std::string& s);

struct SampleVerdict {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Perturbation perturbation;
  bool inconclusive = false;
  bool passes = false;
  int degenerate_points = 0;
  int failing_points = 0;
  std::string note;
};

struct GenericityReport {
  GenericMode mode = GenericMode::linear;
  double radius = 0;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t inconclusive = 0;
  /// passed / (passed + failed); inconclusive samples are excluded
  double pass_fraction = 0;
  std::vector<SampleVerdict> samples;
};

struct GenericityOptions {
  double rho = 10;
  int t_grid = 5;
  int seed_grid = 7;
  AtlasOptions atlas;
  double transversality_tol = 1e-6;
  unsigned threads = 0;
};

/// Degenerate points of an atlas: folds, degenerate branch samples, continua and degenerate isolated points.
std::vector<CriticalPoint> degenerate_points(const EnergyModel& model, const Atlas& atlas, const CriticalOptions& opts = {});

/// Perturbation i of a sample_test run.
Perturbation draw_perturbation(int dim, double radius, GenericMode mode, std::uint64_t sample_seed);

/// splitmix64 finalizer, used to derive per-sample seeds.
std::uint64_t splitmix64(std::uint64_t x);

GenericityReport sample_test(const EnergyModel& model, double radius, std::size_t count, std::uint64_t seed, GenericMode mode,
                             const GenericityOptions& opts = {});

}  // namespace critflow

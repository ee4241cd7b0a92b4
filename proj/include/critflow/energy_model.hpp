#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * \file energy_model.hpp
 *
 * @brief Time-dependent energies E : [0,T] x R^d -> R and the built-in corpus.
 */

namespace critflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ModelError : public Error {
public:
  using Error::Error;
};

/// Numeric parameters of a built-in energy, e.g. {"n": 32, "load": 0.5}.
using ParamMap = std::map<std::string, double>;

/**
 * @brief Evaluation maps of an energy.
 *
 * ``gradient`` is the minimal selection of the subdifferential; for the smooth built-ins it is DE.
 */
struct EnergyHooks {
  std::function<double(double, const Vec&)> energy;
  std::function<double(double, const Vec&)> power;
  std::function<Vec(double, const Vec&)> gradient;
  std::function<Mat(double, const Vec&)> hessian;
};

/// Declared structural constants of an energy.
struct EnergyConstants {
  /// E(t,.) + lambda/2 |.|^2 is convex.
  double lambda_bound = 0;
  /// |dE/dt| <= power_constant * shifted energy.
  double power_constant = 0;
  /// A lower bound of E over [0,T] x R^d.
  double energy_floor = 0;
};

struct EnergySample {
  double t = 0;
  Vec u;
  double energy = 0;
  double slope = 0;
  double power = 0;
};

/**
 * @brief An immutable, shareable energy model.
 *
 * All evaluation maps are pure; copies share the underlying hooks.
 */
class EnergyModel {
public:
  EnergyModel(std::string name, int dim, double horizon, EnergyHooks hooks, EnergyConstants constants,
              bool autonomous = false, double sample_radius = 2.0);

  const std::string& name() const noexcept { return name_; }
  int dim() const noexcept { return dim_; }
  double horizon() const noexcept { return horizon_; }
  bool autonomous() const noexcept { return autonomous_; }
  const EnergyConstants& constants() const noexcept { return constants_; }
  double lambda_bound() const noexcept { return constants_.lambda_bound; }
  double power_constant() const noexcept { return constants_.power_constant; }
  double energy_floor() const noexcept { return constants_.energy_floor; }
  /// Radius of a ball that contains the sublevel sets used in experiments.
  double sample_radius() const noexcept { return sample_radius_; }

  double energy(double t, const Vec& u) const { return hooks_->energy(t, u); }
  double power(double t, const Vec& u) const { return hooks_->power(t, u); }
  Vec gradient(double t, const Vec& u) const { return hooks_->gradient(t, u); }
  Mat hessian(double t, const Vec& u) const { return hooks_->hessian(t, u); }
  double slope(double t, const Vec& u) const { return gradient(t, u).norm(); }

  /// E(t,u) - energy_floor + 1, >= 1 whenever the floor is a true lower bound.
  double shifted_energy(double t, const Vec& u) const { return energy(t, u) - constants_.energy_floor + 1.0; }

  EnergySample sample(double t, const Vec& u) const;

  /// Centered finite difference of the gradient in t (exact for loads affine in t).
  Vec time_derivative_of_gradient(double t, const Vec& u, double h = 1e-5) const;

  const std::shared_ptr<const EnergyHooks>& hooks() const noexcept { return hooks_; }

private:
  std::string name_;
  int dim_;
  double horizon_;
  std::shared_ptr<const EnergyHooks> hooks_;
  EnergyConstants constants_;
  bool autonomous_;
  double sample_radius_;
};

double shifted_energy(const EnergyModel& model, double t, const Vec& u);

/// Names accepted by builtin().
std::vector<std::string> builtin_names();

/**
 * @brief Construct one of the built-in energies.
 *
 * quadratic_bowl (param ``dim``), tilted_double_well, double_well_2d, mexican_hat and allen_cahn_1d (params ``n``,
 * ``load``, ``kappa``). Every built-in accepts ``horizon``. Throws ModelError on unknown names or invalid params.
 */
EnergyModel builtin(const std::string& name, const ParamMap& params = {});

/// Double-well potential W(u) = (u^2-1)^2/4 of the Allen-Cahn discretization.
inline double double_well(double u) {
  const double a = u * u - 1.0;
  return 0.25 * a * a;
}

struct ConsistencyReport {
  bool passed = true;
  int samples = 0;
  double max_gradient_fd_error = 0;  ///< relative, vs centered differences of the energy
  double max_power_fd_error = 0;     ///< relative, vs centered differences in t
  double max_hessian_fd_error = 0;   ///< relative, vs centered differences of the gradient
  double max_hessian_asymmetry = 0;  ///< relative
  double min_lambda_margin = 0;      ///< min over samples of (smallest eigenvalue + lambda)
  double min_power_margin = 0;       ///< min of C_P * shifted - |power|
  double min_gronwall_margin = 0;    ///< min relative slack of the two-sided Gronwall bound
  double min_convexity_margin = 0;   ///< min slack of the lambda-convexity inequality over pairs
  double min_shifted_energy = 0;
  std::vector<std::string> failures;
};

/**
 * @brief Sampled verification of the declared structure of a model inside the sublevel {shifted <= rho}.
 *
 * Checks derivative consistency, Hessian symmetry, lambda-convexity, the power bound and the Gronwall
 * consequence on pseudo-random (t,u) together with the subdifferential inequality on random pairs.
 */
ConsistencyReport check_consistency(const EnergyModel& model, int samples, std::uint64_t seed, double rho);

}  // namespace critflow

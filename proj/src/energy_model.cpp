#include "critflow/energy_model.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "critflow/sampling.hpp"

namespace critflow {

EnergyModel::EnergyModel(std::string name, int dim, double horizon, EnergyHooks hooks, EnergyConstants constants,
                         bool autonomous, double sample_radius)
    : name_(std::move(name)),
      dim_(dim),
      horizon_(horizon),
      hooks_(std::make_shared<const EnergyHooks>(std::move(hooks))),
      constants_(constants),
      autonomous_(autonomous),
      sample_radius_(sample_radius) {
  if (dim_ < 1) throw ModelError(fmt::format("model '{}': dimension must be positive", name_));
  if (!(horizon_ > 0)) throw ModelError(fmt::format("model '{}': horizon must be positive", name_));
  if (!hooks_->energy || !hooks_->power || !hooks_->gradient || !hooks_->hessian) {
    throw ModelError(fmt::format("model '{}': all evaluation hooks are required", name_));
  }
  if (constants_.lambda_bound < 0 || constants_.power_constant < 0) {
    throw ModelError(fmt::format("model '{}': lambda and C_P must be nonnegative", name_));
  }
}

EnergySample EnergyModel::sample(double t, const Vec& u) const {
  return EnergySample{t, u, energy(t, u), slope(t, u), power(t, u)};
}

Vec EnergyModel::time_derivative_of_gradient(double t, const Vec& u, double h) const {
  return (gradient(t + h, u) - gradient(t - h, u)) / (2 * h);
}

double shifted_energy(const EnergyModel& model, double t, const Vec& u) { return model.shifted_energy(t, u); }

namespace {

double param_or(const ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void reject_unknown(const std::string& model, const ParamMap& p, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : p) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ModelError(fmt::format("model '{}': unknown parameter '{}'", model, key));
    }
  }
}

/// Largest real root of u^3 - u - c = 0 for c >= 0.
double largest_cubic_root(double c) {
  double u = 1.5 + c;
  for (int i = 0; i < 100; ++i) {
    const double f = u * u * u - u - c;
    const double step = f / (3 * u * u - 1);
    u -= step;
    if (std::abs(step) < 1e-16 * (1 + std::abs(u))) break;
  }
  return u;
}

/**
 * Constants of the separable family sum_i w_i [W(u_i) - l(t) u_i] with |l(t)| <= load_max.
 *
 * With m = min (W(u) - load_max |u|) the energy is bounded below by weight*m and the shifted energy dominates
 * 1 + sum w_i g(u_i), g >= 0. Since |u| <= a + g(u) with a = max(|u| - g(u)), the power bound follows.
 */
struct QuarticBounds {
  double well_minimum;  // m
  double power_slack;   // a
};

QuarticBounds quartic_bounds(double load_max) {
  const double u_min = largest_cubic_root(load_max);
  const double m = double_well(u_min) - load_max * u_min;
  const double u_max = largest_cubic_root(1 + load_max);
  const double a = (1 + load_max) * u_max - double_well(u_max) + m;
  return {m, a};
}

EnergyModel make_quadratic_bowl(const ParamMap& p) {
  reject_unknown("quadratic_bowl", p, {"dim", "horizon"});
  const double dim_value = param_or(p, "dim", 1);
  if (dim_value < 1 || dim_value != std::floor(dim_value)) throw ModelError("quadratic_bowl: dim must be a positive integer");
  const int dim = static_cast<int>(dim_value);
  EnergyHooks hooks{
      [](double, const Vec& u) { return 0.5 * u.squaredNorm(); },
      [](double, const Vec&) { return 0.0; },
      [](double, const Vec& u) -> Vec { return u; },
      [dim](double, const Vec&) -> Mat { return Mat::Identity(dim, dim); },
  };
  return EnergyModel("quadratic_bowl", dim, param_or(p, "horizon", 1.0), std::move(hooks), {0.0, 0.0, 0.0}, true, 3.0);
}

EnergyModel make_tilted_double_well(const ParamMap& p) {
  reject_unknown("tilted_double_well", p, {"horizon"});
  const double horizon = param_or(p, "horizon", 0.5);
  const auto bounds = quartic_bounds(horizon);
  EnergyHooks hooks{
      [](double t, const Vec& u) {
        const double x = u[0];
        return 0.25 * x * x * x * x - 0.5 * x * x - t * x;
      },
      [](double, const Vec& u) { return -u[0]; },
      [](double t, const Vec& u) -> Vec {
        const double x = u[0];
        return Vec::Constant(1, x * x * x - x - t);
      },
      [](double, const Vec& u) -> Mat { return Mat::Constant(1, 1, 3 * u[0] * u[0] - 1); },
  };
  // min over R of 3u^2 - 1 is -1.
  EnergyConstants c{1.0, std::max(bounds.power_slack, 1.0), bounds.well_minimum - 0.25};
  return EnergyModel("tilted_double_well", 1, horizon, std::move(hooks), c, false, 2.5);
}

EnergyModel make_double_well_2d(const ParamMap& p) {
  reject_unknown("double_well_2d", p, {"horizon"});
  const double horizon = param_or(p, "horizon", 0.5);
  const auto bounds = quartic_bounds(horizon);
  EnergyHooks hooks{
      [](double t, const Vec& u) {
        const double x = u[0], y = u[1];
        return 0.25 * x * x * x * x - 0.5 * x * x + 0.5 * y * y - t * x;
      },
      [](double, const Vec& u) { return -u[0]; },
      [](double t, const Vec& u) -> Vec {
        Vec g(2);
        g << u[0] * u[0] * u[0] - u[0] - t, u[1];
        return g;
      },
      [](double, const Vec& u) -> Mat {
        Mat h = Mat::Zero(2, 2);
        h(0, 0) = 3 * u[0] * u[0] - 1;
        h(1, 1) = 1;
        return h;
      },
  };
  EnergyConstants c{1.0, std::max(bounds.power_slack, 1.0), bounds.well_minimum - 0.25};
  return EnergyModel("double_well_2d", 2, horizon, std::move(hooks), c, false, 2.5);
}

EnergyModel make_mexican_hat(const ParamMap& p) {
  reject_unknown("mexican_hat", p, {"horizon"});
  EnergyHooks hooks{
      [](double, const Vec& u) {
        const double a = u.squaredNorm() - 1;
        return 0.25 * a * a;
      },
      [](double, const Vec&) { return 0.0; },
      [](double, const Vec& u) -> Vec { return (u.squaredNorm() - 1) * u; },
      [](double, const Vec& u) -> Mat {
        return (u.squaredNorm() - 1) * Mat::Identity(2, 2) + 2 * u * u.transpose();
      },
  };
  // Eigenvalues r^2-1 and 3r^2-1 are >= -1.
  return EnergyModel("mexican_hat", 2, param_or(p, "horizon", 1.0), std::move(hooks), {1.0, 0.0, 0.0}, true, 2.0);
}

EnergyModel make_allen_cahn_1d(const ParamMap& p) {
  reject_unknown("allen_cahn_1d", p, {"n", "load", "kappa", "horizon"});
  auto it = p.find("n");
  if (it == p.end()) throw ModelError("allen_cahn_1d: parameter 'n' is required");
  if (it->second < 2 || it->second != std::floor(it->second)) throw ModelError("allen_cahn_1d: n must be an integer >= 2");
  const int n = static_cast<int>(it->second);
  const double load = param_or(p, "load", 0.0);
  const double kappa = param_or(p, "kappa", 1.0);
  const double horizon = param_or(p, "horizon", 1.0);
  if (!(kappa > 0)) throw ModelError("allen_cahn_1d: kappa must be positive");
  const double h = 1.0 / (n + 1);

  EnergyHooks hooks{
      [=](double t, const Vec& u) {
        const double ell = load * t;
        double e = 0;
        double prev = 0;
        for (int i = 0; i < n; ++i) {
          const double d = u[i] - prev;
          e += 0.5 * kappa * d * d / h + h * (double_well(u[i]) - ell * u[i]);
          prev = u[i];
        }
        e += 0.5 * kappa * prev * prev / h;
        return e;
      },
      [=](double, const Vec& u) { return -load * h * u.sum(); },
      [=](double t, const Vec& u) -> Vec {
        const double ell = load * t;
        Vec g(n);
        for (int i = 0; i < n; ++i) {
          const double left = i > 0 ? u[i - 1] : 0.0;
          const double right = i + 1 < n ? u[i + 1] : 0.0;
          g[i] = kappa * (2 * u[i] - left - right) / h + h * (u[i] * u[i] * u[i] - u[i] - ell);
        }
        return g;
      },
      [=](double, const Vec& u) -> Mat {
        Mat H = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i) {
          H(i, i) = 2 * kappa / h + h * (3 * u[i] * u[i] - 1);
          if (i + 1 < n) H(i, i + 1) = H(i + 1, i) = -kappa / h;
        }
        return H;
      },
  };

  // Smallest eigenvalue of the Dirichlet stiffness tridiag(-1,2,-1) is 4 sin^2(pi h / 2).
  const double stiffness_min = 4 * std::pow(std::sin(M_PI * h / 2), 2);
  const double lambda = std::max(0.0, h - kappa * stiffness_min / h);
  const double mass = n * h;
  const auto bounds = quartic_bounds(std::abs(load) * horizon);
  EnergyConstants c{lambda, std::abs(load) * std::max(bounds.power_slack * mass, 1.0), mass * bounds.well_minimum};
  return EnergyModel("allen_cahn_1d", n, horizon, std::move(hooks), c, load == 0.0, 1.5);
}

}  // namespace

std::vector<std::string> builtin_names() {
  return {"quadratic_bowl", "tilted_double_well", "double_well_2d", "mexican_hat", "allen_cahn_1d"};
}

EnergyModel builtin(const std::string& name, const ParamMap& params) {
  if (name == "quadratic_bowl") return make_quadratic_bowl(params);
  if (name == "tilted_double_well") return make_tilted_double_well(params);
  if (name == "double_well_2d") return make_double_well_2d(params);
  if (name == "mexican_hat") return make_mexican_hat(params);
  if (name == "allen_cahn_1d") return make_allen_cahn_1d(params);
  throw ModelError(fmt::format("unknown built-in energy '{}'", name));
}

// ---------------------------------------------------------------------------------------------------------------------

namespace {

double relative(double err, double scale) { return err / std::max(1.0, scale); }

}  // namespace

ConsistencyReport check_consistency(const EnergyModel& model, int samples, std::uint64_t seed, double rho) {
  if (samples < 1) throw Error("check_consistency: samples must be >= 1");
  if (!(rho > 1)) throw Error("check_consistency: rho must be > 1");

  ConsistencyReport rep;
  rep.samples = samples;
  rep.min_lambda_margin = rep.min_power_margin = rep.min_gronwall_margin = rep.min_convexity_margin =
      rep.min_shifted_energy = std::numeric_limits<double>::infinity();

  constexpr double fd_tol = 1e-6;
  constexpr double symmetry_tol = 1e-10;
  constexpr double h = 1e-5;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int d = model.dim();
  const double T = model.horizon();
  const double lambda = model.lambda_bound();
  const double cp = model.power_constant();

  auto fail = [&](std::string msg) {
    rep.passed = false;
    if (rep.failures.size() < 50) rep.failures.push_back(std::move(msg));
  };

  std::vector<std::pair<double, Vec>> pts;
  pts.reserve(samples);

  for (int k = 0; k < samples; ++k) {
    const double t = T * unit(rng);
    const Vec u = draw_sublevel_point(model, t, rho, rng);
    pts.emplace_back(t, u);

    const double e = model.energy(t, u);
    const Vec g = model.gradient(t, u);
    const Mat H = model.hessian(t, u);
    const double shifted = model.shifted_energy(t, u);
    rep.min_shifted_energy = std::min(rep.min_shifted_energy, shifted);
    if (shifted < 1 - 1e-12) fail(fmt::format("sample {}: shifted energy {} < 1 (energy floor violated)", k, shifted));

    // gradient vs centered differences of the energy
    Vec g_fd(d);
    Vec v = u;
    for (int i = 0; i < d; ++i) {
      v[i] = u[i] + h;
      const double ep = model.energy(t, v);
      v[i] = u[i] - h;
      const double em = model.energy(t, v);
      v[i] = u[i];
      g_fd[i] = (ep - em) / (2 * h);
    }
    const double gerr = relative((g_fd - g).norm(), g.norm());
    rep.max_gradient_fd_error = std::max(rep.max_gradient_fd_error, gerr);
    if (gerr >= fd_tol) fail(fmt::format("sample {}: gradient finite-difference error {:.3e}", k, gerr));

    // power vs centered differences in t
    const double p = model.power(t, u);
    const double p_fd = (model.energy(t + h, u) - model.energy(t - h, u)) / (2 * h);
    const double perr = relative(std::abs(p_fd - p), std::abs(p));
    rep.max_power_fd_error = std::max(rep.max_power_fd_error, perr);
    if (perr >= fd_tol) fail(fmt::format("sample {}: power finite-difference error {:.3e}", k, perr));

    // Hessian vs centered differences of the gradient, and symmetry
    Mat H_fd(d, d);
    for (int j = 0; j < d; ++j) {
      v[j] = u[j] + h;
      const Vec gp = model.gradient(t, v);
      v[j] = u[j] - h;
      const Vec gm = model.gradient(t, v);
      v[j] = u[j];
      H_fd.col(j) = (gp - gm) / (2 * h);
    }
    const double hnorm = H.norm();
    const double herr = relative((H_fd - H).norm(), hnorm);
    rep.max_hessian_fd_error = std::max(rep.max_hessian_fd_error, herr);
    if (herr >= fd_tol) fail(fmt::format("sample {}: Hessian finite-difference error {:.3e}", k, herr));
    const double asym = (H - H.transpose()).norm() / std::max(hnorm, 1e-300);
    rep.max_hessian_asymmetry = std::max(rep.max_hessian_asymmetry, hnorm > 0 ? asym : 0.0);
    if (hnorm > 0 && asym > symmetry_tol) fail(fmt::format("sample {}: Hessian asymmetry {:.3e}", k, asym));

    // lambda-convexity: smallest eigenvalue >= -lambda
    const Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
    const double margin = eig.eigenvalues()[0] + lambda;
    rep.min_lambda_margin = std::min(rep.min_lambda_margin, margin);
    if (margin < -1e-10 * (1 + hnorm)) fail(fmt::format("sample {}: smallest Hessian eigenvalue below -lambda by {:.3e}", k, -margin));

    // power bound
    const double pmargin = cp * shifted - std::abs(p);
    rep.min_power_margin = std::min(rep.min_power_margin, pmargin);
    if (pmargin < -1e-12 * (1 + std::abs(p))) fail(fmt::format("sample {}: |power| exceeds C_P * shifted energy", k));

    // two-sided Gronwall estimate against a second time
    const double s = T * unit(rng);
    const double shifted_s = model.shifted_energy(s, u);
    const double factor = std::exp(cp * std::abs(t - s));
    const double lo = shifted_s / factor, hi = shifted_s * factor;
    const double gmargin = std::min(shifted - lo, hi - shifted) / shifted;
    rep.min_gronwall_margin = std::min(rep.min_gronwall_margin, gmargin);
    if (gmargin < -1e-12) fail(fmt::format("sample {}: Gronwall bound violated between t={} and s={}", k, t, s));
    (void)e;
  }

  // subdifferential characterization on random pairs at a common time
  const int pairs = std::min<int>(200, samples * 2);
  for (int k = 0; k < pairs; ++k) {
    const auto& [t, u] = pts[k % pts.size()];
    const Vec w = draw_sublevel_point(model, t, rho, rng);
    const double lhs = model.energy(t, w) - model.energy(t, u);
    const double rhs = model.gradient(t, u).dot(w - u) - 0.5 * lambda * (w - u).squaredNorm();
    const double slack = lhs - rhs;
    rep.min_convexity_margin = std::min(rep.min_convexity_margin, slack);
    if (slack < -1e-10 * (1 + std::abs(lhs))) fail(fmt::format("pair {}: lambda-convexity inequality violated by {:.3e}", k, -slack));
  }
  return rep;
}

}  // namespace critflow

#include "critflow/genericity_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <random>
#include <thread>

#include "critflow/sampling.hpp"

namespace critflow {

Mat Perturbation::quadratic_form(int dim) const {
  Mat K = Mat::Zero(dim, dim);
  for (const auto& w : quadratic_vectors) K += w * w.transpose();
  return K;
}

EnergyModel perturb(const EnergyModel& model, const Perturbation& p) {
  const int d = model.dim();
  if (p.linear.size() != 0 && p.linear.size() != d) throw ModelError("perturb: linear term has the wrong dimension");
  for (const auto& w : p.quadratic_vectors) {
    if (w.size() != d) throw ModelError("perturb: quadratic vector has the wrong dimension");
  }
  const Vec y = p.linear.size() ? p.linear : Vec::Zero(d);
  const Mat K = p.quadratic_form(d);
  const auto base = model.hooks();
  EnergyHooks hooks{
      [base, y, K](double t, const Vec& u) { return base->energy(t, u) + y.dot(u) + 0.5 * u.dot(K * u); },
      [base](double t, const Vec& u) { return base->power(t, u); },
      [base, y, K](double t, const Vec& u) -> Vec { return base->gradient(t, u) + y + K * u; },
      [base, K](double t, const Vec& u) -> Mat { return base->hessian(t, u) + K; },
  };
  EnergyConstants c = model.constants();
  c.energy_floor -= y.norm() * 2 * model.sample_radius();
  return EnergyModel(model.name() + "+perturbation", d, model.horizon(), std::move(hooks), c, model.autonomous(),
                     model.sample_radius());
}

std::string to_string(GenericMode m) { return m == GenericMode::linear ? "linear" : "linear_quadratic"; }

GenericMode generic_mode_from_string(const std::string& s) {
  if (s == "linear") return GenericMode::linear;
  if (s == "linear_quadratic") return GenericMode::linear_quadratic;
  throw Error("unknown genericity mode '" + s + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Perturbation draw_perturbation(int dim, double radius, GenericMode mode, std::uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  Perturbation p;
  p.radius = radius;
  p.linear = uniform_in_ball(dim, radius, rng);
  if (mode == GenericMode::linear_quadratic) {
    for (int j = 0; j < 2; ++j) p.quadratic_vectors.push_back(uniform_in_ball(dim, std::sqrt(radius), rng));
  }
  return p;
}

std::vector<CriticalPoint> degenerate_points(const EnergyModel& model, const Atlas& atlas, const CriticalOptions& opts) {
  std::vector<CriticalPoint> out;
  for (const auto& b : atlas.branches) {
    for (const auto& s : b.samples) {
      const bool degenerate_spectrum = s.spectrum.size() && s.spectrum.cwiseAbs().minCoeff() <= degeneracy_tol(s.spectrum, opts);
      if (b.kind == BranchKind::fixed_time_loop || s.fold || degenerate_spectrum) {
        CriticalPoint cp = classify(model, s.t, s.u, opts);
        // loop samples are degenerate by construction even when the tangential eigenvalue is only tiny
        if (cp.kernel_dim == 0 && b.kind == BranchKind::fixed_time_loop) cp.kernel_dim = 1;
        if (cp.kernel_dim > 0) out.push_back(std::move(cp));
      }
    }
  }
  for (const auto& p : atlas.isolated) {
    if (p.degenerate()) out.push_back(p);
  }
  return out;
}

namespace {

SampleVerdict run_sample(const EnergyModel& model, std::size_t index, std::uint64_t sample_seed, double radius,
                         GenericMode mode, const GenericityOptions& opts) {
  SampleVerdict v;
  v.index = index;
  v.seed = sample_seed;
  v.perturbation = draw_perturbation(model.dim(), radius, mode, sample_seed);
  try {
    const EnergyModel pm = perturb(model, v.perturbation);
    AtlasOptions aopts = opts.atlas;
    aopts.seed = sample_seed;
    const Atlas atlas = build_atlas(pm, opts.rho, opts.t_grid, opts.seed_grid, aopts);
    const bool truncated = std::any_of(atlas.branches.begin(), atlas.branches.end(), [](const CriticalBranch& b) { return b.truncated; });
    if (truncated || atlas.coverage.uncovered > 0) {
      v.inconclusive = true;
      v.note = truncated ? "branch truncated" : "atlas coverage incomplete";
      return v;
    }
    const auto points = degenerate_points(pm, atlas, opts.atlas.continuation.critical);
    v.degenerate_points = static_cast<int>(points.size());
    for (const auto& cp : points) {
      const TransversalityReport r = transversality(pm, cp, opts.transversality_tol);
      const bool ok = mode == GenericMode::linear ? r.passes_partial() : r.passes_full();
      if (!ok) ++v.failing_points;
    }
    v.passes = v.failing_points == 0;
  } catch (const std::exception& e) {
    v.inconclusive = true;
    v.note = e.what();
  }
  return v;
}

}  // namespace

GenericityReport sample_test(const EnergyModel& model, double radius, std::size_t count, std::uint64_t seed, GenericMode mode,
                             const GenericityOptions& opts) {
  if (count < 1) throw Error("sample_test: count must be positive");
  if (!(radius >= 0)) throw Error("sample_test: radius must be nonnegative");
  GenericityReport rep;
  rep.mode = mode;
  rep.radius = radius;
  rep.count = count;
  rep.seed = seed;
  rep.samples.resize(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      rep.samples[i] = run_sample(model, i, splitmix64(seed + i), radius, mode, opts);
    }
  };
  unsigned workers = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& s : rep.samples) {
    if (s.inconclusive) {
      ++rep.inconclusive;
    } else if (s.passes) {
      ++rep.passed;
    } else {
      ++rep.failed;
    }
  }
  const std::size_t conclusive = rep.passed + rep.failed;
  rep.pass_fraction = conclusive ? static_cast<double>(rep.passed) / static_cast<double>(conclusive) : 0.0;
  return rep;
}

}  // namespace critflow

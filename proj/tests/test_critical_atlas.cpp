#include <doctest.h>

#include <cmath>
#include <set>

#include "critflow/critical_atlas.hpp"
#include "oracles.hpp"

using namespace critflow;

namespace {

Vec scalar(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

Vec pair(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_SUITE("critical_atlas") {

TEST_CASE("roots of the symmetric cubic") {
  const auto m = builtin("tilted_double_well");
  auto roots = find_critical(m, 0.0, {scalar(-2), scalar(0.1), scalar(2)});
  REQUIRE(roots.size() == 3);
  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) { return a.u[0] < b.u[0]; });
  const auto exact = oracle::cubic_roots(0.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(roots[i].u[0] - exact[i]) <= 1e-10);
  CHECK(roots[0].classification == Classification::nondegenerate_min);
  CHECK(roots[1].classification == Classification::nondegenerate_max);
  CHECK(roots[2].classification == Classification::nondegenerate_min);
  for (const auto& r : roots) CHECK(r.kernel_dim + r.morse_index + (r.spectrum.array() > degeneracy_tol(r.spectrum)).count() == 1);
}

TEST_CASE("deflation finds distinct roots from one seed cluster") {
  const auto m = builtin("tilted_double_well");
  const auto roots = find_critical(m, 0.1, {scalar(0.9), scalar(0.9), scalar(0.9), scalar(0.9)});
  std::set<long> distinct;
  for (const auto& r : roots) distinct.insert(std::lround(r.u[0] * 1e6));
  CHECK(distinct.size() == roots.size());
  for (const auto& r : roots) CHECK(r.residual <= critical_bound(r.u));
}

TEST_CASE("quadratic bowl has one minimum") {
  const auto m = builtin("quadratic_bowl");
  const auto roots = find_critical(m, 0.4, {scalar(5)});
  REQUIRE(roots.size() == 1);
  CHECK(std::abs(roots[0].u[0]) < 1e-12);
  CHECK(roots[0].classification == Classification::nondegenerate_min);
}

TEST_CASE("fold root is degenerate") {
  const auto m = builtin("tilted_double_well");
  const auto roots = find_critical(m, oracle::fold_time, {scalar(-0.6)});
  bool found = false;
  for (const auto& r : roots) {
    if (std::abs(r.u[0] + 1 / std::sqrt(3.0)) < 1e-4) {
      found = true;
      CHECK(r.kernel_dim == 1);
      CHECK(r.classification == Classification::degenerate);
    }
  }
  CHECK(found);
}

TEST_CASE("no convergence gives an empty list") {
  EnergyHooks hooks{[](double, const Vec& u) { return u[0]; }, [](double, const Vec&) { return 0.0; },
                    [](double, const Vec&) { return Vec::Ones(1); }, [](double, const Vec&) { return Mat::Zero(1, 1); }};
  const EnergyModel m("slope", 1, 1.0, hooks, {0, 0, -100}, true, 1.0);
  CHECK(find_critical(m, 0, {scalar(0), scalar(1)}).empty());
}

TEST_CASE("s-shaped branch with two folds") {
  const auto m = builtin("tilted_double_well");
  const auto start = classify(m, 0.0, scalar(-1.0));
  ContinuationOptions opts;
  opts.time_window = {{-0.5, 0.5}};
  const auto b = continue_branch(m, start, 0.01, {-50, 50}, opts);
  REQUIRE(b.folds.size() == 2);
  std::vector<double> ft;
  for (auto i : b.folds) ft.push_back(b.samples[i].t);
  std::sort(ft.begin(), ft.end());
  CHECK(std::abs(ft[0] - (-oracle::fold_time)) <= 1e-6);
  CHECK(std::abs(ft[1] - oracle::fold_time) <= 1e-6);
  for (auto i : b.folds) CHECK(std::abs(b.samples[i].tangent[0]) < 1e-8);
  for (const auto& s : b.samples) {
    CHECK(std::abs(s.tangent.norm() - 1.0) <= 1e-9);
    CHECK(s.residual <= critical_bound(s.u));
    CHECK(std::abs(s.u[0] * s.u[0] * s.u[0] - s.u[0] - s.t) <= 1e-8);
  }
  // the three roots at t = 0 lie on the branch
  int hits = 0;
  for (double r : oracle::cubic_roots(0.0)) {
    for (std::size_t k = 0; k + 1 < b.samples.size(); ++k) {
      const auto& a = b.samples[k];
      const auto& c = b.samples[k + 1];
      if ((a.t - 0) * (c.t - 0) <= 0 && std::abs(a.u[0] - r) < 0.05) {
        ++hits;
        break;
      }
    }
  }
  CHECK(hits == 3);
}

TEST_CASE("fold set coincides with the degeneracy set") {
  const auto m = builtin("tilted_double_well");
  const auto atlas = build_atlas(m, 10, 5, 7);
  REQUIRE(atlas.branches.size() == 1);
  const auto& b = atlas.branches[0];
  for (std::size_t k = 0; k < b.samples.size(); ++k) {
    const auto& s = b.samples[k];
    const bool flat = std::abs(s.tangent[0]) < 1e-8;
    const double smallest = s.spectrum.cwiseAbs().minCoeff();
    const bool degenerate = smallest <= degeneracy_tol(s.spectrum);
    if (flat != degenerate) {
      // allowed only next to a fold sample
      bool near = false;
      for (auto f : b.folds) near = near || (k + 1 >= f && k <= f + 1);
      CHECK(near);
    }
    if (s.fold) CHECK(degenerate);
  }
}

TEST_CASE("straight bowl branch") {
  const auto m = builtin("quadratic_bowl");
  const auto b = continue_branch(m, classify(m, 0, scalar(0)), 0.05, {-10, 10});
  CHECK(b.folds.empty());
  for (const auto& s : b.samples) CHECK(std::abs(s.u[0]) < 1e-12);
  CHECK(b.samples.front().t <= 0.0);
  CHECK(b.samples.back().t >= m.horizon() - 1e-9);
}

TEST_CASE("planar branch of the 2d double well") {
  const auto m = builtin("double_well_2d");
  const auto b = continue_branch(m, classify(m, 0, pair(-1, 0)), 0.01, {-50, 50});
  CHECK(b.folds.size() == 2);
  for (const auto& s : b.samples) {
    CHECK(std::abs(s.u[1]) < 1e-9);
    CHECK(std::abs(s.u[0] * s.u[0] * s.u[0] - s.u[0] - s.t) < 1e-8);
  }
}

TEST_CASE("mexican hat atlas: origin and circle") {
  const auto m = builtin("mexican_hat");
  const auto atlas = build_atlas(m, 10, 5, 7);
  const auto comps = components_at(m, atlas, 0.3);
  REQUIRE(comps.size() == 2);
  int circles = 0, origins = 0;
  for (const auto& c : comps) {
    if (c.continuum()) {
      ++circles;
      for (const auto& p : c.points) CHECK(std::abs(p.norm() - 1.0) <= 1e-8);
      CHECK(c.critical.kernel_dim >= 1);
    } else {
      ++origins;
      CHECK(c.ref.representative.norm() < 1e-10);
      CHECK(c.critical.spectrum[0] == doctest::Approx(-1.0));
      CHECK(c.critical.spectrum[1] == doctest::Approx(-1.0));
    }
  }
  CHECK(circles == 1);
  CHECK(origins == 1);
}

TEST_CASE("atlas sample invariants") {
  for (const char* name : {"tilted_double_well", "double_well_2d", "quadratic_bowl", "mexican_hat"}) {
    const auto m = builtin(name);
    const auto atlas = build_atlas(m, 10, 5, 7);
    INFO(name);
    CHECK(atlas.coverage.uncovered == 0);
    for (const auto& b : atlas.branches) {
      for (const auto& s : b.samples) CHECK(m.gradient(s.t, s.u).norm() <= critical_bound(s.u));
    }
  }
  CHECK(build_atlas(builtin("quadratic_bowl"), 10, 5, 7).fold_count() == 0);
}

TEST_CASE("energy is constant on components") {
  const auto m = builtin("mexican_hat");
  const auto atlas = build_atlas(m, 10, 5, 7);
  for (const auto& c : components_at(m, atlas, 0.0)) {
    for (const auto& p : c.points) {
      const double diff = std::abs(m.energy(0, p) - c.energy);
      CHECK(diff <= 0.5 * m.lambda_bound() * (p - c.ref.representative).squaredNorm() + 1e-12);
      CHECK(diff <= 1e-8);
    }
  }
}

TEST_CASE("cross-time critical estimate") {
  const auto m = builtin("tilted_double_well");
  const auto atlas = build_atlas(m, 10, 5, 7);
  const auto& s = atlas.branches[0].samples;
  const double L = m.power_constant() * std::exp(m.power_constant() * m.horizon());
  for (std::size_t i = 0; i < s.size(); i += 17) {
    for (std::size_t j = 0; j < s.size(); j += 23) {
      const double lhs = m.energy(s[i].t, s[i].u) - m.energy(s[j].t, s[j].u);
      const double rhs = L * m.shifted_energy(s[j].t, s[j].u) * std::abs(s[i].t - s[j].t) +
                         0.5 * m.lambda_bound() * (s[i].u - s[j].u).squaredNorm();
      CHECK(lhs <= rhs + 1e-9);
    }
  }
}

TEST_CASE("sheets at t = 0") {
  const auto m = builtin("tilted_double_well");
  const auto atlas = build_atlas(m, 10, 5, 7);
  const auto comps = components_at(m, atlas, 0.0);
  REQUIRE(comps.size() == 3);
  std::vector<double> us;
  for (const auto& c : comps) us.push_back(c.ref.representative[0]);
  std::sort(us.begin(), us.end());
  const auto exact = oracle::cubic_roots(0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(us[i] - exact[i]) <= 1e-9);
  // the left sheet ends at the fold
  const auto left = nearest_component(comps, scalar(-1)).first;
  REQUIRE(left >= 0);
  const auto id = *comps[left].ref.id;
  CHECK(component_at(m, atlas, id, 0.3).has_value());
  CHECK_FALSE(component_at(m, atlas, id, 0.45).has_value());
}

TEST_CASE("transversality at the fold") {
  const auto m = builtin("tilted_double_well");
  const auto cp = classify(m, oracle::fold_time, scalar(-1 / std::sqrt(3.0)));
  const auto rep = transversality(m, cp);
  CHECK(rep.kernel_dim == 1);
  REQUIRE(rep.t2_value.has_value());
  REQUIRE(rep.t3_value.has_value());
  CHECK(std::abs(std::abs(*rep.t2_value) - 1.0) <= 1e-6);
  CHECK(std::abs(std::abs(*rep.t3_value) - (2 * std::sqrt(3.0))) <= 1e-4);
  CHECK(rep.passes_full());
}

TEST_CASE("third directional derivative oracle") {
  const auto m = builtin("double_well_2d");
  const Vec u = pair(0.7, -0.2);
  Vec v = pair(1, 2);
  v.normalize();
  // D^3E[v,v,v] = 6 u1 v1^3 for this energy
  CHECK(std::abs(third_directional_derivative(m, 0.1, u, v) - (6 * 0.7 * std::pow(v[0], 3))) <= 1e-6);
}

TEST_CASE("transversality of a nondegenerate point") {
  const auto m = builtin("quadratic_bowl");
  const auto rep = transversality(m, classify(m, 0.2, scalar(0)));
  CHECK(rep.kernel_dim == 0);
  CHECK(rep.passes_full());
  CHECK_FALSE(rep.t2_value.has_value());
}

TEST_CASE("circle points fail the time condition") {
  const auto m = builtin("mexican_hat");
  for (double a : {0.0, 1.3, 4.0}) {
    const auto cp = classify(m, 0.1, pair(std::cos(a), std::sin(a)));
    const auto rep = transversality(m, cp);
    CHECK(rep.kernel_dim >= 1);
    CHECK(rep.passes_T1);
    REQUIRE(rep.t2_value.has_value());
    CHECK(std::abs(*rep.t2_value) < 1e-12);
    CHECK_FALSE(rep.passes_T2);
  }
}

TEST_CASE("two-dimensional kernel fails the kernel condition") {
  EnergyHooks hooks{[](double, const Vec& u) { return std::pow(u.squaredNorm(), 2); },
                    [](double, const Vec&) { return 0.0; },
                    [](double, const Vec& u) -> Vec { return 4 * u.squaredNorm() * u; },
                    [](double, const Vec& u) -> Mat {
                      return 4 * u.squaredNorm() * Mat::Identity(2, 2) + 8 * u * u.transpose();
                    }};
  const EnergyModel m("flat", 2, 1.0, hooks, {0, 0, 0}, true, 1.0);
  const auto rep = transversality(m, classify(m, 0, Vec::Zero(2)));
  CHECK(rep.kernel_dim == 2);
  CHECK_FALSE(rep.passes_T1);
  CHECK_FALSE(rep.t2_value.has_value());
}

TEST_CASE("lusin diagnostic") {
  const auto hat = builtin("mexican_hat");
  const auto l1 = lusin_diagnostic(hat, build_atlas(hat, 10, 5, 7), 0.2);
  CHECK(l1.distinct_count == 2);
  REQUIRE(l1.values.size() == 2);
  CHECK(l1.values[0] == doctest::Approx(0.0));
  CHECK(l1.values[1] == doctest::Approx(0.25));
  CHECK(l1.outer_estimate == 0.0);

  const auto tdw = builtin("tilted_double_well");
  const auto l2 = lusin_diagnostic(tdw, build_atlas(tdw, 10, 5, 7), 0.0);
  CHECK(l2.component_count == 3);
  REQUIRE(l2.values.size() == 2);
  CHECK(l2.values[0] == doctest::Approx(-0.25));
  CHECK(l2.values[1] == doctest::Approx(0.0));

  const auto bowl = builtin("quadratic_bowl");
  const auto l3 = lusin_diagnostic(bowl, build_atlas(bowl, 10, 5, 7), 0.5);
  REQUIRE(l3.values.size() == 1);
  CHECK(l3.values[0] == doctest::Approx(0.0));
}

}

#include <doctest.h>

#include <cmath>
#include <random>

#include "critflow/transition_cost.hpp"
#include "oracles.hpp"

using namespace critflow;

namespace {

Vec scalar(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

const Atlas& tilted_atlas() {
  static const Atlas a = build_atlas(builtin("tilted_double_well"), 10, 5, 7);
  return a;
}

const Atlas& hat_atlas() {
  static const Atlas a = build_atlas(builtin("mexican_hat"), 10, 5, 7);
  return a;
}

int nearest(const std::vector<Component>& comps, double u) {
  return nearest_component(comps, scalar(u)).first;
}

}  // namespace

TEST_SUITE("transition_cost") {

TEST_CASE("heterocline from the symmetric saddle") {
  const auto m = builtin("tilted_double_well");
  const auto saddle = classify(m, 0, scalar(0));
  for (double dir : {1.0, -1.0}) {
    const auto c = heterocline(m, 0, saddle, scalar(dir));
    CHECK_FALSE(c.escaped);
    CHECK_FALSE(c.incomplete);
    CHECK(c.nodes.front()[0] == 0.0);
    CHECK(std::abs(c.nodes.back()[0] - dir) <= 1e-9);
    CHECK(std::abs(c.slope_weighted_length - 0.25) <= 1e-4);
    // quadrature of |E'| |theta'| along the exact orbit from 0 to 1
    const double q = oracle::simpson([](double u) { return std::abs(u * u * u - u); }, 0, 1);
    CHECK(std::abs(c.slope_weighted_length - q) <= 1e-4);
  }
}

TEST_CASE("heterocline from the fold") {
  const auto m = builtin("tilted_double_well");
  const double t = oracle::fold_time;
  const auto cp = classify(m, t, scalar(-1 / std::sqrt(3.0)));
  const auto c = heterocline(m, t, cp, scalar(1));
  CHECK(std::abs(c.nodes.back()[0] - (2 / std::sqrt(3.0))) <= 1e-6);
  CHECK(std::abs(c.slope_weighted_length - (1.0 / 12 + 2.0 / 3)) <= 1e-3);
  CHECK(oracle::tilted_energy(t, -1 / std::sqrt(3.0)) == doctest::Approx(1.0 / 12));
  CHECK(oracle::tilted_energy(t, 2 / std::sqrt(3.0)) == doctest::Approx(-2.0 / 3));
}

TEST_CASE("chain rule bound along witnesses") {
  const auto m = builtin("tilted_double_well");
  const auto c = heterocline(m, 0.1, classify(m, 0.1, scalar(oracle::cubic_roots(0.1)[1])), scalar(-1));
  for (std::size_t i = 0; i < c.size(); i += 97) {
    for (std::size_t j = i; j < c.size(); j += 131) {
      CHECK(std::abs(c.energies[j] - c.energies[i]) <= c.slope_weighted_length + 1e-8);
    }
  }
  CHECK(c.noncritical_mask[c.size() / 2]);
  CHECK_FALSE(c.noncritical_mask.back());
}

TEST_CASE("heterocline identity") {
  const auto m = builtin("double_well_2d");
  Vec s(2);
  s << oracle::cubic_roots(0.2)[1], 0;
  const auto cp = classify(m, 0.2, s);
  CHECK(cp.morse_index == 1);
  for (double sign : {1.0, -1.0}) {
    const auto c = heterocline(m, 0.2, cp, sign * cp.eigenvectors.col(0));
    const double drop = c.energies.front() - c.energies.back();
    CHECK(std::abs(c.slope_weighted_length - drop) <= 1e-6 * drop);
  }
}

TEST_CASE("cost between the two wells at t = 0") {
  const auto m = builtin("tilted_double_well");
  CostGraph g = build_cost_graph(m, tilted_atlas(), 0);
  const auto comps = g.vertices;
  const auto a = comps[nearest(comps, -1)].ref;
  const auto b = comps[nearest(comps, 1)].ref;
  const auto r = cost(m, g, a, b);
  REQUIRE(r.reachable());
  CHECK(std::abs(*r.value - 0.5) <= 1e-6);
  CHECK(std::abs(*r.lower_bound_gap - 0.5) <= 1e-6);
  CHECK(r.path.size() == 3);
  CHECK(r.curve.nodes.front()[0] == doctest::Approx(-1));
  CHECK(r.curve.nodes.back()[0] == doctest::Approx(1));

  const auto same = cost(m, g, a, a);
  CHECK(*same.value == 0.0);
  for (const auto& x : same.curve.nodes) CHECK((x - a.representative).norm() == 0.0);
}

TEST_CASE("cost from the origin to the circle") {
  const auto m = builtin("mexican_hat");
  CostGraph g = build_cost_graph(m, hat_atlas(), 0.4);
  REQUIRE(g.vertices.size() == 2);
  const int circle = g.vertices[0].continuum() ? 0 : 1;
  const auto r = cost(m, g, g.vertices[1 - circle].ref, g.vertices[circle].ref);
  REQUIRE(r.reachable());
  CHECK(std::abs(*r.value - 0.25) <= 1e-3);
}

TEST_CASE("moving inside the circle is free") {
  const auto m = builtin("mexican_hat");
  CostGraph g = build_cost_graph(m, hat_atlas(), 0);
  const int circle = g.vertices[0].continuum() ? 0 : 1;
  auto a = g.vertices[circle].ref;
  auto b = a;
  b.representative = -a.representative;
  const auto r = cost(m, g, a, b);
  CHECK(*r.value == 0.0);
  CHECK(r.curve.slope_weighted_length < 1e-8);
  CHECK((r.curve.nodes.back() - b.representative).norm() == 0.0);
}

TEST_CASE("noncritical singleton descends to its basin") {
  const auto m = builtin("mexican_hat");
  CostGraph g = build_cost_graph(m, hat_atlas(), 0);
  Vec u(2);
  u << 0.3, 1.4;
  const int circle = g.vertices[0].continuum() ? 0 : 1;
  const auto to_circle = cost(m, g, singleton_ref(0, u), g.vertices[circle].ref);
  CHECK(std::abs(*to_circle.value - (m.energy(0, u))) <= 1e-6);
  const auto to_origin = cost(m, g, singleton_ref(0, u), g.vertices[1 - circle].ref);
  CHECK(std::abs(*to_origin.value - (m.energy(0, u) + 0.25)) <= 1e-6);
}

TEST_CASE("unreachable components have no value") {
  const auto m = builtin("tilted_double_well");
  CostGraph g;
  g.t = 0;
  for (const auto& c : components_at(m, tilted_atlas(), 0)) {
    if (c.critical.morse_index == 0) g.vertices.push_back(c);
  }
  REQUIRE(g.vertices.size() == 2);
  g.explored = {true, true};
  const auto r = cost(m, g, g.vertices[0].ref, g.vertices[1].ref);
  CHECK_FALSE(r.reachable());
}

TEST_CASE("cost axioms on random pairs and triples") {
  std::mt19937_64 rng(17);
  for (const char* name : {"tilted_double_well", "double_well_2d", "mexican_hat"}) {
    const auto m = builtin(name);
    const Atlas atlas = build_atlas(m, 10, 5, 7);
    for (double t : {0.0, 0.15, 0.3}) {
      const auto mat = cost_matrix(m, atlas, t);
      const std::size_t n = mat.components.size();
      REQUIRE(n >= 2);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (int k = 0; k < 20; ++k) {
        const auto i = pick(rng), j = pick(rng), l = pick(rng);
        const auto& cij = mat.values[i][j];
        REQUIRE(cij.has_value());
        CHECK(std::abs(*cij - *mat.values[j][i]) <= 1e-6);
        CHECK(*cij <= *mat.values[i][l] + *mat.values[l][j] + 1e-6);
        CHECK(*cij >= std::abs(mat.components[i].energy - mat.components[j].energy) - 1e-8);
        if (*cij == 0) CHECK(i == j);
      }
    }
  }
}

TEST_CASE("reparameterization") {
  const auto m = builtin("tilted_double_well");
  const auto c = heterocline(m, 0, classify(m, 0, scalar(0)), scalar(1));
  const auto r = reparameterize(c);
  CHECK(std::abs(r.slope_weighted_length - c.slope_weighted_length) <= 1e-8);
  const auto loads = segment_loads(c, r);
  const auto [lo, hi] = std::minmax_element(loads.begin(), loads.end());
  CHECK(*hi / *lo <= 1.05);
  CHECK(r.params.front() == 0.0);
  CHECK(r.params.back() == doctest::Approx(1.0));

  const auto flat = make_curve(m, 0, {scalar(1), scalar(1), scalar(1)});
  const auto rf = reparameterize(flat);
  for (std::size_t k = 0; k < flat.size(); ++k) CHECK(rf.nodes[k] == flat.nodes[k]);
  CHECK(rf.slope_weighted_length == 0.0);
}

TEST_CASE("direct minimization cross-check") {
  const auto m = builtin("tilted_double_well");
  CostGraph g = build_cost_graph(m, tilted_atlas(), 0);
  const auto comps = g.vertices;
  const auto graph = cost(m, g, comps[nearest(comps, -1)].ref, comps[nearest(comps, 1)].ref);
  const auto direct = direct_minimization(m, graph.curve);
  REQUIRE(direct.reachable());
  CHECK(direct.method == CostMethod::direct_minimization);
  CHECK(*direct.value <= *graph.value + 1e-6);
  CHECK(*direct.value >= *graph.value - 1e-4);
  CHECK((direct.curve.nodes.front() - graph.curve.nodes.front()).norm() == 0.0);
  CHECK((direct.curve.nodes.back() - graph.curve.nodes.back()).norm() == 0.0);
}

TEST_CASE("direct minimization improves a detour") {
  const auto m = builtin("double_well_2d");
  std::vector<Vec> nodes;
  for (int k = 0; k <= 40; ++k) {
    const double s = -1 + 2.0 * k / 40;
    Vec u(2);
    u << s, 0.6 * (1 - s * s);
    nodes.push_back(u);
  }
  const auto start = make_curve(m, 0, nodes);
  const auto direct = direct_minimization(m, start);
  CHECK(*direct.value < start.slope_weighted_length);
  CHECK(*direct.value >= 0.5 - 1e-4);
}

TEST_CASE("resampling by arclength") {
  std::vector<Vec> nodes{scalar(0), scalar(0.1), scalar(3)};
  const auto r = resample_by_arclength(nodes, 31);
  REQUIRE(r.size() == 31);
  for (std::size_t k = 0; k < r.size(); ++k) CHECK(r[k][0] == doctest::Approx(0.1 * k));
}

}

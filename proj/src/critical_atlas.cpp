#include "critflow/critical_atlas.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "critflow/sampling.hpp"

namespace critflow {

std::string to_string(Classification c) {
  switch (c) {
    case Classification::nondegenerate_min: return "nondegenerate_min";
    case Classification::nondegenerate_saddle: return "nondegenerate_saddle";
    case Classification::nondegenerate_max: return "nondegenerate_max";
    case Classification::degenerate: return "degenerate";
  }
  return "?";
}

std::string to_string(const ComponentId& id) {
  switch (id.source) {
    case ComponentId::Source::sheet: return fmt::format("branch{}:sheet{}", id.index, id.sheet);
    case ComponentId::Source::loop: return fmt::format("loop{}", id.index);
    case ComponentId::Source::isolated: return fmt::format("isolated{}", id.index);
  }
  return "?";
}

double degeneracy_tol(const Vec& spectrum, const CriticalOptions& opts) {
  const double radius = spectrum.size() ? spectrum.cwiseAbs().maxCoeff() : 0.0;
  return opts.degeneracy_rel * (1 + radius);
}

double critical_bound(const Vec& u, const CriticalOptions& opts) { return opts.critical_tol * (1 + u.norm()); }

CriticalPoint classify(const EnergyModel& model, double t, const Vec& u, const CriticalOptions& opts) {
  CriticalPoint cp;
  cp.t = t;
  cp.u = u;
  cp.residual = model.gradient(t, u).norm();
  const Mat H = model.hessian(t, u);
  const Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (H + H.transpose()));
  cp.spectrum = eig.eigenvalues();
  cp.eigenvectors = eig.eigenvectors();
  const double tol = degeneracy_tol(cp.spectrum, opts);
  for (Eigen::Index i = 0; i < cp.spectrum.size(); ++i) {
    if (std::abs(cp.spectrum[i]) <= tol) {
      ++cp.kernel_dim;
    } else if (cp.spectrum[i] < 0) {
      ++cp.morse_index;
    }
  }
  if (cp.kernel_dim > 0) {
    cp.classification = Classification::degenerate;
  } else if (cp.morse_index == 0) {
    cp.classification = Classification::nondegenerate_min;
  } else if (cp.morse_index == model.dim()) {
    cp.classification = Classification::nondegenerate_max;
  } else {
    cp.classification = Classification::nondegenerate_saddle;
  }
  return cp;
}

namespace {

Vec min_norm_solve(const Mat& A, const Vec& b) {
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
  return cod.solve(b);
}

bool usable(const Vec& x) { return x.allFinite() && x.norm() < 1e8; }

}  // namespace

std::optional<CriticalPoint> polish_critical(const EnergyModel& model, double t, const Vec& guess,
                                             const CriticalOptions& opts) {
  Vec x = guess;
  Vec g = model.gradient(t, x);
  double gn = g.norm();
  for (int it = 0; it < opts.newton_max_iter; ++it) {
    if (gn == 0) break;
    const Vec delta = min_norm_solve(model.hessian(t, x), -g);
    if (!delta.allFinite()) break;
    double alpha = 1;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
      const Vec y = x + alpha * delta;
      const Vec gy = model.gradient(t, y);
      if (gy.norm() < gn) {
        x = y;
        g = gy;
        gn = gy.norm();
        accepted = true;
        break;
      }
    }
    if (!accepted || alpha * delta.norm() <= 1e-15 * (1 + x.norm())) break;
  }
  if (!usable(x) || gn > critical_bound(x, opts)) return std::nullopt;
  return classify(model, t, x, opts);
}

std::vector<CriticalPoint> find_critical(const EnergyModel& model, double t, const std::vector<Vec>& seeds,
                                         const CriticalOptions& opts) {
  std::vector<CriticalPoint> roots;
  auto deflation = [&](const Vec& y) {
    double m = 1;
    for (const auto& r : roots) m *= 1.0 / std::max((y - r.u).squaredNorm(), 1e-300) + 1.0;
    return m;
  };

  for (const Vec& seed : seeds) {
    Vec x = seed;
    Vec g = model.gradient(t, x);
    bool converged = false;
    int stalls = 0;
    for (int it = 0; it < opts.newton_max_iter && usable(x); ++it) {
      const double gn = g.norm();
      if (gn <= critical_bound(x, opts)) {
        converged = true;
        break;
      }
      const Vec delta = min_norm_solve(model.hessian(t, x), -g);
      if (!delta.allFinite()) break;
      const double merit = gn * deflation(x);
      double alpha = 1;
      bool accepted = false;
      for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
        const Vec y = x + alpha * delta;
        const Vec gy = model.gradient(t, y);
        if (gy.norm() * deflation(y) < merit) {
          x = y;
          g = gy;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (++stalls > 10) break;
        x += delta;
        g = model.gradient(t, x);
      }
    }
    if (!converged) continue;
    auto cp = polish_critical(model, t, x, opts);
    if (!cp) continue;
    const bool duplicate = std::any_of(roots.begin(), roots.end(), [&](const CriticalPoint& r) {
      return (r.u - cp->u).norm() <= opts.dedup_tol * (1 + cp->u.norm());
    });
    if (!duplicate) roots.push_back(std::move(*cp));
  }
  return roots;
}

// ---------------------------------------------------------------------------------------------------------------------

std::pair<double, double> time_window(const EnergyModel& model, const ContinuationOptions& opts) {
  if (opts.time_window) return *opts.time_window;
  return {-model.horizon(), model.horizon()};
}

namespace {

/// z = (t, u) in R^{1+d}
Vec join(double t, const Vec& u) {
  Vec z(u.size() + 1);
  z[0] = t;
  z.tail(u.size()) = u;
  return z;
}

Mat extended_jacobian(const EnergyModel& model, double t, const Vec& u) {
  const int d = model.dim();
  Mat J(d, d + 1);
  J.col(0) = model.time_derivative_of_gradient(t, u);
  J.rightCols(d) = model.hessian(t, u);
  return J;
}

struct Tangent {
  Vec direction;
  bool defined = false;
};

/// Unit null vector of a d x n matrix with n = d + 1 (or of a rank d-1 square matrix), oriented along ``orient``.
Tangent null_direction(const Mat& J, const Vec* orient, int expected_rank) {
  const Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeFullV);
  const Vec& sv = svd.singularValues();
  Tangent out;
  const double scale = 1 + (sv.size() ? sv[0] : 0.0);
  // rank(J) must equal expected_rank: singular value expected_rank-1 nonzero, the next (if any) zero
  if (expected_rank > 0 && sv[expected_rank - 1] <= 1e-9 * scale) return out;
  out.direction = svd.matrixV().col(expected_rank);
  if (expected_rank < sv.size() && sv[expected_rank] > 1e-6 * scale) return out;
  out.defined = true;
  if (orient && out.direction.dot(*orient) < 0) out.direction = -out.direction;
  return out;
}

struct Corrected {
  Vec z;
  bool ok = false;
};

/// Newton on [DE(z) = 0; tangent . (z - z_pred) = 0].
Corrected correct_on_branch(const EnergyModel& model, const Vec& z_pred, const Vec& tangent, const CriticalOptions& opts) {
  const int d = model.dim();
  Vec z = z_pred;
  Corrected out;
  for (int it = 0; it < 25; ++it) {
    const double t = z[0];
    const Vec u = z.tail(d);
    const Vec g = model.gradient(t, u);
    Vec G(d + 1);
    G.head(d) = g;
    G[d] = tangent.dot(z - z_pred);
    if (g.norm() <= 1e-3 * critical_bound(u, opts) && std::abs(G[d]) <= 1e-13 * (1 + z.norm())) break;
    Mat A(d + 1, d + 1);
    A.topRows(d) = extended_jacobian(model, t, u);
    A.row(d) = tangent.transpose();
    const Vec delta = A.fullPivLu().solve(-G);
    if (!delta.allFinite()) return out;
    z += delta;
    if (delta.norm() <= 1e-14 * (1 + z.norm())) break;
  }
  const Vec u = z.tail(d);
  out.ok = usable(z) && model.gradient(z[0], u).norm() <= critical_bound(u, opts);
  out.z = std::move(z);
  return out;
}

/// Gauss-Newton on [DE(t,u) = 0; tangent . (u - u_pred) = 0] at frozen t (overdetermined, consistent).
Corrected correct_at_fixed_time(const EnergyModel& model, double t, const Vec& u_pred, const Vec& tangent,
                                const CriticalOptions& opts) {
  const int d = model.dim();
  Vec u = u_pred;
  Corrected out;
  for (int it = 0; it < 25; ++it) {
    const Vec g = model.gradient(t, u);
    Vec G(d + 1);
    G.head(d) = g;
    G[d] = tangent.dot(u - u_pred);
    if (g.norm() <= 1e-3 * critical_bound(u, opts) && std::abs(G[d]) <= 1e-13 * (1 + u.norm())) break;
    Mat A(d + 1, d);
    A.topRows(d) = model.hessian(t, u);
    A.row(d) = tangent.transpose();
    const Vec delta = A.colPivHouseholderQr().solve(-G);
    if (!delta.allFinite()) return out;
    u += delta;
    if (delta.norm() <= 1e-14 * (1 + u.norm())) break;
  }
  out.ok = usable(u) && model.gradient(t, u).norm() <= critical_bound(u, opts);
  out.z = std::move(u);
  return out;
}

BranchSample make_sample(const EnergyModel& model, double s, double t, const Vec& u, const Vec& tangent,
                         const CriticalOptions& opts) {
  BranchSample b;
  b.s = s;
  b.t = t;
  b.u = u;
  b.tangent = tangent;
  b.residual = model.gradient(t, u).norm();
  const Mat H = model.hessian(t, u);
  b.spectrum = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly).eigenvalues();
  (void)opts;
  return b;
}

struct TraceResult {
  std::vector<BranchSample> samples;  // excluding the start, in order of travel
  std::string reason;
  bool truncated = false;
  bool closed = false;
};

TraceResult trace_direction(const EnergyModel& model, const Vec& z0, const Vec& tangent0, double arc_step, double s_limit,
                            const ContinuationOptions& opts) {
  const int d = model.dim();
  const auto [t_lo, t_hi] = time_window(model, opts);
  const CriticalOptions& copts = opts.critical;
  TraceResult out;
  Vec z = z0;
  Vec tau = tangent0;
  double s = 0;
  double h = arc_step;

  for (int step = 0; step < opts.max_steps; ++step) {
    if (s >= s_limit - 1e-15) {
      out.reason = "span";
      return out;
    }
    const double h_eff = std::min(h, s_limit - s);
    const Corrected c = correct_on_branch(model, z + h_eff * tau, tau, copts);
    if (!c.ok || (c.z - z).norm() > 3 * h_eff) {
      h *= 0.5;
      if (h < arc_step / 1024) {
        out.reason = "corrector_divergence";
        out.truncated = true;
        return out;
      }
      continue;
    }
    const Vec& zn = c.z;
    const double tn = zn[0];
    const Vec un = zn.tail(d);

    if (tn < t_lo || tn > t_hi) {
      const double tb = tn < t_lo ? t_lo : t_hi;
      const double alpha = (tb - z[0]) / (tn - z[0]);
      const Vec guess = z.tail(d) + alpha * (un - z.tail(d));
      if (auto cp = polish_critical(model, tb, guess, copts); cp && (cp->u - guess).norm() <= h_eff) {
        const Tangent tb_tan = null_direction(extended_jacobian(model, tb, cp->u), &tau, d);
        out.samples.push_back(make_sample(model, s + alpha * h_eff, tb, cp->u, tb_tan.defined ? tb_tan.direction : tau, copts));
      }
      out.reason = "time_window";
      return out;
    }
    if (model.shifted_energy(tn, un) > opts.rho) {
      out.reason = "sublevel";
      return out;
    }

    const Tangent tan = null_direction(extended_jacobian(model, tn, un), &tau, d);
    if (!tan.defined) {
      out.samples.push_back(make_sample(model, s + h_eff, tn, un, tau, copts));
      out.reason = "kernel_dim>=2";
      return out;
    }

    if (tau[0] * tan.direction[0] < 0) {
      // fold between z and zn: bisection on the sign of t'
      const double sign_a = tau[0] > 0 ? 1.0 : -1.0;
      double lo = 0, hi = h_eff;
      Vec z_fold = zn;
      Vec tan_fold = tan.direction;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const Corrected cm = correct_on_branch(model, z + mid * tau, tau, copts);
        if (!cm.ok) break;
        const Tangent tm = null_direction(extended_jacobian(model, cm.z[0], cm.z.tail(d)), &tau, d);
        if (!tm.defined) break;
        z_fold = cm.z;
        tan_fold = tm.direction;
        if (std::abs(tm.direction[0]) < opts.fold_tol) break;
        (tm.direction[0] * sign_a > 0 ? lo : hi) = mid;
        if (hi - lo < 1e-16) break;
      }
      BranchSample f = make_sample(model, s + 0.5 * (lo + hi), z_fold[0], z_fold.tail(d), tan_fold, copts);
      f.fold = true;
      out.samples.push_back(std::move(f));
    }

    out.samples.push_back(make_sample(model, s + h_eff, tn, un, tan.direction, copts));
    s += h_eff;
    if (step > 3 && (zn - z0).norm() < 0.5 * arc_step) {
      out.reason = "closed";
      out.closed = true;
      return out;
    }
    z = zn;
    tau = tan.direction;
    if (h < arc_step) h = std::min(arc_step, 2 * h);
  }
  out.reason = "max_steps";
  return out;
}

void assign_sheets(CriticalBranch& b) {
  int sheet = 0;
  b.folds.clear();
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    b.samples[i].sheet = sheet;
    if (b.samples[i].fold) {
      b.folds.push_back(i);
      ++sheet;
    }
  }
}

Vec oriented_start_tangent(const Vec& v) {
  Vec out = v;
  if (std::abs(out[0]) > 1e-12) {
    if (out[0] < 0) out = -out;
    return out;
  }
  for (Eigen::Index i = 1; i < out.size(); ++i) {
    if (std::abs(out[i]) > 1e-12) {
      if (out[i] < 0) out = -out;
      break;
    }
  }
  return out;
}

}  // namespace

CriticalBranch continue_branch(const EnergyModel& model, const CriticalPoint& start, double arc_step,
                               std::pair<double, double> s_span, const ContinuationOptions& opts) {
  if (!(arc_step > 0)) throw Error("continue_branch: arc_step must be positive");
  if (start.residual > critical_bound(start.u, opts.critical)) throw Error("continue_branch: start is not critical");
  const int d = model.dim();
  CriticalBranch branch;
  branch.kind = BranchKind::time_curve;
  const Vec z0 = join(start.t, start.u);
  const Tangent tan0 = null_direction(extended_jacobian(model, start.t, start.u), nullptr, d);
  BranchSample first = make_sample(model, 0.0, start.t, start.u, tan0.defined ? oriented_start_tangent(tan0.direction) : Vec::Zero(d + 1), opts.critical);
  if (!tan0.defined) {
    branch.samples.push_back(std::move(first));
    branch.stop_forward = branch.stop_backward = "kernel_dim>=2";
    return branch;
  }
  const Vec t0 = first.tangent;
  TraceResult fwd = trace_direction(model, z0, t0, arc_step, std::max(0.0, s_span.second), opts);
  TraceResult bwd;
  if (!fwd.closed) bwd = trace_direction(model, z0, -t0, arc_step, std::max(0.0, -s_span.first), opts);

  for (auto it = bwd.samples.rbegin(); it != bwd.samples.rend(); ++it) {
    BranchSample b = std::move(*it);
    b.s = -b.s;
    b.tangent = -b.tangent;
    branch.samples.push_back(std::move(b));
  }
  branch.samples.push_back(std::move(first));
  const std::size_t start_index = branch.samples.size() - 1;
  for (auto& f : fwd.samples) branch.samples.push_back(std::move(f));

  // a start sitting on a fold shows up as a sign change of t' across it
  if (start_index > 0 && start_index + 1 < branch.samples.size()) {
    const double before = branch.samples[start_index - 1].tangent[0];
    const double after = branch.samples[start_index + 1].tangent[0];
    if (before * after < 0 && std::abs(branch.samples[start_index].tangent[0]) < 1e-6) branch.samples[start_index].fold = true;
  }

  branch.closed = fwd.closed;
  branch.truncated = fwd.truncated || bwd.truncated;
  branch.stop_forward = fwd.reason;
  branch.stop_backward = fwd.closed ? "closed" : bwd.reason;
  assign_sheets(branch);
  return branch;
}

CriticalBranch trace_fixed_time_loop(const EnergyModel& model, const CriticalPoint& start, double arc_step, double s_max,
                                     const ContinuationOptions& opts) {
  const int d = model.dim();
  const double t = start.t;
  const CriticalOptions& copts = opts.critical;
  CriticalBranch branch;
  branch.kind = BranchKind::fixed_time_loop;

  auto embed = [&](const Vec& v) { return join(0.0, v); };
  const Tangent tan0 = null_direction(model.hessian(t, start.u), nullptr, d - 1);
  branch.samples.push_back(make_sample(model, 0.0, t, start.u, tan0.defined ? embed(tan0.direction) : Vec::Zero(d + 1), copts));
  if (!tan0.defined) {
    branch.stop_forward = branch.stop_backward = "kernel_dim!=1";
    return branch;
  }

  auto trace = [&](Vec tau, double sign) {
    TraceResult out;
    Vec u = start.u;
    double s = 0, h = arc_step;
    for (int step = 0; step < opts.max_steps; ++step) {
      if (s >= s_max) {
        out.reason = "span";
        return out;
      }
      const Corrected c = correct_at_fixed_time(model, t, u + h * tau, tau, copts);
      if (!c.ok || (c.z - u).norm() > 3 * h) {
        h *= 0.5;
        if (h < arc_step / 1024) {
          out.reason = "corrector_divergence";
          out.truncated = true;
          return out;
        }
        continue;
      }
      if (model.shifted_energy(t, c.z) > opts.rho) {
        out.reason = "sublevel";
        return out;
      }
      const Tangent tn = null_direction(model.hessian(t, c.z), &tau, d - 1);
      if (!tn.defined) {
        out.reason = "kernel_dim!=1";
        return out;
      }
      s += h;
      if (step > 3 && (c.z - start.u).norm() < 0.5 * arc_step) {
        out.reason = "closed";
        out.closed = true;
        return out;
      }
      out.samples.push_back(make_sample(model, sign * s, t, c.z, embed(sign * tn.direction), copts));
      u = c.z;
      tau = tn.direction;
      if (h < arc_step) h = std::min(arc_step, 2 * h);
    }
    out.reason = "max_steps";
    return out;
  };

  TraceResult fwd = trace(tan0.direction, 1.0);
  TraceResult bwd;
  if (!fwd.closed) bwd = trace(-tan0.direction, -1.0);
  std::vector<BranchSample> all;
  for (auto it = bwd.samples.rbegin(); it != bwd.samples.rend(); ++it) all.push_back(std::move(*it));
  all.push_back(std::move(branch.samples.front()));
  for (auto& f : fwd.samples) all.push_back(std::move(f));
  branch.samples = std::move(all);
  branch.closed = fwd.closed;
  branch.truncated = fwd.truncated || bwd.truncated;
  branch.stop_forward = fwd.reason;
  branch.stop_backward = fwd.closed ? "closed" : bwd.reason;
  assign_sheets(branch);
  return branch;
}

// ---------------------------------------------------------------------------------------------------------------------

std::size_t Atlas::fold_count() const {
  std::size_t n = 0;
  for (const auto& b : branches) n += b.folds.size();
  return n;
}

namespace {

double point_segment_distance(const Vec& p, const Vec& a, const Vec& b) {
  const Vec ab = b - a;
  const double len2 = ab.squaredNorm();
  double lambda = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  lambda = std::clamp(lambda, 0.0, 1.0);
  return (p - (a + lambda * ab)).norm();
}

double polyline_distance(const Vec& p, const std::vector<Vec>& pts, bool closed) {
  if (pts.empty()) return std::numeric_limits<double>::infinity();
  if (pts.size() == 1) return (p - pts[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) best = std::min(best, point_segment_distance(p, pts[i], pts[i + 1]));
  if (closed) best = std::min(best, point_segment_distance(p, pts.back(), pts.front()));
  return best;
}

bool alive_at(const Atlas& atlas, double t_component, double t) {
  return atlas.autonomous || std::abs(t_component - t) <= 1e-12 * (1 + std::abs(t));
}

}  // namespace

double distance_to_atlas(const Atlas& atlas, double t, const Vec& u) {
  double best = std::numeric_limits<double>::infinity();
  const Vec z = join(t, u);
  for (const auto& b : atlas.branches) {
    if (b.kind == BranchKind::time_curve) {
      for (std::size_t i = 0; i + 1 < b.samples.size(); ++i) {
        best = std::min(best, point_segment_distance(z, join(b.samples[i].t, b.samples[i].u),
                                                     join(b.samples[i + 1].t, b.samples[i + 1].u)));
      }
      if (b.samples.size() == 1) best = std::min(best, (z - join(b.samples[0].t, b.samples[0].u)).norm());
    } else if (!b.samples.empty() && alive_at(atlas, b.samples.front().t, t)) {
      std::vector<Vec> pts;
      for (const auto& s : b.samples) pts.push_back(s.u);
      best = std::min(best, polyline_distance(u, pts, b.closed));
    }
  }
  for (const auto& p : atlas.isolated) {
    if (atlas.autonomous) {
      best = std::min(best, (p.u - u).norm());
    } else {
      best = std::min(best, (join(p.t, p.u) - z).norm());
    }
  }
  return best;
}


Atlas build_atlas(const EnergyModel& model, double rho, int t_grid, int seed_grid, const AtlasOptions& opts) {
  if (!(rho > 1)) throw Error("build_atlas: rho must exceed 1");
  if (t_grid < 1 || seed_grid < 1) throw Error("build_atlas: grids must be positive");
  const int d = model.dim();
  ContinuationOptions copts = opts.continuation;
  copts.rho = rho;
  const auto [t_lo, t_hi] = time_window(model, copts);

  Atlas atlas;
  atlas.rho = rho;
  atlas.t_min = t_lo;
  atlas.t_max = t_hi;
  atlas.autonomous = model.autonomous();
  atlas.arc_step = opts.arc_step;
  const double merge_tol = 0.25 * opts.arc_step;

  std::mt19937_64 rng(opts.seed);
  auto seeds_at = [&](double t) {
    std::vector<Vec> seeds;
    if (d <= 3) {
      const double R = model.sample_radius();
      long total = 1;
      for (int i = 0; i < d; ++i) total *= seed_grid;
      for (long k = 0; k < total; ++k) {
        Vec u(d);
        long rest = k;
        for (int i = 0; i < d; ++i) {
          const long j = rest % seed_grid;
          rest /= seed_grid;
          u[i] = seed_grid == 1 ? 0.0 : -R + 2 * R * static_cast<double>(j) / (seed_grid - 1);
        }
        seeds.push_back(std::move(u));
      }
    } else {
      seeds.push_back(Vec::Zero(d));
      for (int k = 0; k < 4 * seed_grid; ++k) seeds.push_back(draw_sublevel_point(model, t, rho, rng));
    }
    return seeds;
  };

  auto absorb = [&](const CriticalPoint& root) {
    if (model.shifted_energy(root.t, root.u) > rho) return;
    if (distance_to_atlas(atlas, root.t, root.u) < merge_tol) return;
    const Tangent tan = null_direction(extended_jacobian(model, root.t, root.u), nullptr, d);
    if (tan.defined) {
      atlas.branches.push_back(continue_branch(model, root, opts.arc_step, {-opts.s_max, opts.s_max}, copts));
      return;
    }
    if (root.kernel_dim == 1) {
      CriticalBranch loop = trace_fixed_time_loop(model, root, opts.arc_step, opts.s_max, copts);
      if (loop.samples.size() > 1) {
        atlas.branches.push_back(std::move(loop));
        return;
      }
    }
    atlas.isolated.push_back(root);
  };

  const int probes = atlas.autonomous ? 1 : t_grid;
  for (int k = 0; k < probes; ++k) {
    const double t = probes == 1 ? (atlas.autonomous ? 0.0 : 0.5 * (t_lo + t_hi))
                                 : t_lo + (t_hi - t_lo) * static_cast<double>(k) / (probes - 1);
    for (const auto& root : find_critical(model, t, seeds_at(t), copts.critical)) absorb(root);
  }

  // coverage: re-seed at random times and measure how far new roots are from the atlas
  std::uniform_real_distribution<double> time_dist(t_lo, t_hi);
  for (int p = 0; p < opts.coverage_probes; ++p) {
    const double t = atlas.autonomous ? 0.0 : time_dist(rng);
    std::vector<Vec> seeds;
    for (int k = 0; k < 8; ++k) seeds.push_back(draw_sublevel_point(model, t, rho, rng));
    ++atlas.coverage.probes;
    for (const auto& root : find_critical(model, t, seeds, copts.critical)) {
      if (model.shifted_energy(t, root.u) > rho) continue;
      ++atlas.coverage.roots_found;
      const double dist = distance_to_atlas(atlas, t, root.u);
      atlas.coverage.max_distance = std::max(atlas.coverage.max_distance, dist);
      if (dist >= merge_tol) ++atlas.coverage.uncovered;
    }
  }
  return atlas;
}

// ---------------------------------------------------------------------------------------------------------------------

namespace {

struct Crossing {
  Vec u;
  int sheet = 0;
};

/// Critical point of the segment (a, b) of a time curve at time t; a.t and b.t bracket t.
std::optional<Vec> crossing_on_segment(const EnergyModel& model, const BranchSample& a, const BranchSample& b, double t,
                                       const CriticalOptions& opts) {
  if (t == a.t) return a.u;
  if (t == b.t) return b.u;
  const double alpha = (t - a.t) / (b.t - a.t);
  const Vec guess = a.u + alpha * (b.u - a.u);
  const double span = (b.u - a.u).norm();
  // next to a fold the frozen-time Newton may land on the other sheet
  if (!a.fold && !b.fold)
    if (auto cp = polish_critical(model, t, guess, opts); cp && (cp->u - guess).norm() <= 0.5 * span + 1e-9) return cp->u;

  // bisection along the corrected segment, monotone in t between consecutive samples
  const int d = model.dim();
  const Vec za = join(a.t, a.u);
  const Vec zb = join(b.t, b.u);
  const Vec dir = (zb - za).normalized();
  const double len = (zb - za).norm();
  double lo = 0, hi = len;
  Vec best = guess;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Corrected c = correct_on_branch(model, za + mid * dir, dir, opts);
    if (!c.ok) return std::nullopt;
    best = c.z.tail(d);
    if (std::abs(c.z[0] - t) <= 1e-14 * (1 + std::abs(t))) break;
    ((c.z[0] - t) * (b.t - a.t) < 0 ? lo : hi) = mid;
  }
  if (auto cp = polish_critical(model, t, best, opts)) return cp->u;
  return std::nullopt;
}

std::vector<Crossing> sheet_crossings(const EnergyModel& model, const CriticalBranch& b, double t, const CriticalOptions& opts,
                                      std::optional<int> only_sheet) {
  std::vector<Crossing> out;
  const auto& S = b.samples;
  if (S.size() == 1 && S[0].t == t) out.push_back({S[0].u, S[0].sheet});
  for (std::size_t i = 0; i + 1 < S.size(); ++i) {
    const int sheet = S[i + 1].sheet;
    if (only_sheet && *only_sheet != sheet) continue;
    const double lo = std::min(S[i].t, S[i + 1].t), hi = std::max(S[i].t, S[i + 1].t);
    if (t < lo || t > hi) continue;
    if (lo == hi) {
      out.push_back({S[i].u, sheet});
      continue;
    }
    if (auto u = crossing_on_segment(model, S[i], S[i + 1], t, opts)) out.push_back({*u, sheet});
  }
  // crossings shared by adjacent segments or by two sheets meeting at a fold: keep the lowest sheet
  std::sort(out.begin(), out.end(), [](const Crossing& x, const Crossing& y) { return x.sheet < y.sheet; });
  std::vector<Crossing> unique;
  for (auto& c : out) {
    const bool dup = std::any_of(unique.begin(), unique.end(), [&](const Crossing& k) {
      return (k.u - c.u).norm() <= opts.dedup_tol * (1 + c.u.norm());
    });
    if (!dup) unique.push_back(std::move(c));
  }
  return unique;
}

Component make_component(const EnergyModel& model, double t, ComponentId id, std::vector<Vec> points,
                         const CriticalOptions& opts) {
  Component c;
  c.ref.kind = ComponentKind::critical_component;
  c.ref.t = t;
  c.ref.representative = points.front();
  c.ref.id = id;
  c.points = std::move(points);
  c.critical = classify(model, t, c.ref.representative, opts);
  c.energy = model.energy(t, c.ref.representative);
  return c;
}

}  // namespace

std::vector<Component> components_at(const EnergyModel& model, const Atlas& atlas, double t, const CriticalOptions& opts) {
  std::vector<Component> comps;
  for (std::size_t bi = 0; bi < atlas.branches.size(); ++bi) {
    const auto& b = atlas.branches[bi];
    const int index = static_cast<int>(bi);
    if (b.kind == BranchKind::time_curve) {
      for (auto& c : sheet_crossings(model, b, t, opts, std::nullopt)) {
        comps.push_back(make_component(model, t, {ComponentId::Source::sheet, index, c.sheet}, {c.u}, opts));
      }
    } else if (!b.samples.empty() && alive_at(atlas, b.samples.front().t, t)) {
      std::vector<Vec> pts;
      for (const auto& s : b.samples) pts.push_back(s.u);
      comps.push_back(make_component(model, t, {ComponentId::Source::loop, index, 0}, std::move(pts), opts));
    }
  }
  for (std::size_t i = 0; i < atlas.isolated.size(); ++i) {
    const auto& p = atlas.isolated[i];
    if (alive_at(atlas, p.t, t)) {
      comps.push_back(make_component(model, t, {ComponentId::Source::isolated, static_cast<int>(i), 0}, {p.u}, opts));
    }
  }
  return comps;
}

std::optional<Component> component_at(const EnergyModel& model, const Atlas& atlas, const ComponentId& id, double t,
                                      const CriticalOptions& opts) {
  if (id.source == ComponentId::Source::isolated) {
    if (id.index < 0 || id.index >= static_cast<int>(atlas.isolated.size())) return std::nullopt;
    const auto& p = atlas.isolated[static_cast<std::size_t>(id.index)];
    if (!alive_at(atlas, p.t, t)) return std::nullopt;
    return make_component(model, t, id, {p.u}, opts);
  }
  if (id.index < 0 || id.index >= static_cast<int>(atlas.branches.size())) return std::nullopt;
  const auto& b = atlas.branches[static_cast<std::size_t>(id.index)];
  if (id.source == ComponentId::Source::loop) {
    if (b.kind != BranchKind::fixed_time_loop || b.samples.empty() || !alive_at(atlas, b.samples.front().t, t)) {
      return std::nullopt;
    }
    std::vector<Vec> pts;
    for (const auto& s : b.samples) pts.push_back(s.u);
    return make_component(model, t, id, std::move(pts), opts);
  }
  if (b.kind != BranchKind::time_curve) return std::nullopt;
  auto crossings = sheet_crossings(model, b, t, opts, id.sheet);
  if (crossings.empty()) return std::nullopt;
  return make_component(model, t, id, {crossings.front().u}, opts);
}

double distance_to(const Component& c, const Vec& u) {
  if (c.points.size() == 1) return (c.points.front() - u).norm();
  return polyline_distance(u, c.points, true);
}

std::pair<int, double> nearest_component(const std::vector<Component>& comps, const Vec& u) {
  std::pair<int, double> best{-1, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const double dist = distance_to(comps[i], u);
    if (dist < best.second) best = {static_cast<int>(i), dist};
  }
  return best;
}

// ---------------------------------------------------------------------------------------------------------------------

double third_directional_derivative(const EnergyModel& model, double t, const Vec& u, const Vec& v, double h) {
  auto phi = [&](double s) { return model.gradient(t, u + s * v).dot(v); };
  auto second = [&](double k) { return (phi(k) - 2 * phi(0) + phi(-k)) / (k * k); };
  return (4 * second(0.5 * h) - second(h)) / 3;
}

TransversalityReport transversality(const EnergyModel& model, const CriticalPoint& cp, double tol) {
  TransversalityReport r;
  r.kernel_dim = cp.kernel_dim;
  if (cp.kernel_dim == 0) return r;
  if (cp.kernel_dim >= 2) {
    r.passes_T1 = r.passes_T2 = r.passes_T3 = false;
    return r;
  }
  Eigen::Index k = 0;
  cp.spectrum.cwiseAbs().minCoeff(&k);
  const Vec v = cp.eigenvectors.col(k).normalized();
  constexpr double h = 1e-5;
  const Vec dt = (model.gradient(cp.t + h, cp.u) - model.gradient(cp.t - h, cp.u)) / (2 * h);
  r.t2_value = dt.dot(v);
  r.t3_value = third_directional_derivative(model, cp.t, cp.u, v);
  r.passes_T1 = true;
  r.passes_T2 = std::abs(*r.t2_value) > tol;
  r.passes_T3 = std::abs(*r.t3_value) > tol;
  return r;
}

LusinReport lusin_diagnostic(const EnergyModel& model, const Atlas& atlas, double t, double value_tol) {
  LusinReport r;
  r.t = t;
  const auto comps = components_at(model, atlas, t);
  r.component_count = static_cast<int>(comps.size());
  std::vector<double> all;
  for (const auto& c : comps) {
    for (const auto& p : c.points) all.push_back(model.energy(t, p));
  }
  std::sort(all.begin(), all.end());
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1] - all[j] <= value_tol) ++j;
    r.values.push_back(all[i]);
    const double spread = all[j] - all[i];
    r.spreads.push_back(spread);
    if (spread > value_tol) r.outer_estimate += spread;
    i = j + 1;
  }
  r.distinct_count = static_cast<int>(r.values.size());
  return r;
}

}  // namespace critflow

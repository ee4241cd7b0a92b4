#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

inline const double fold_time = 2.0 / (3.0 * std::sqrt(3.0));

/// Real roots of u^3 - u - t = 0, ascending (trigonometric form for three roots, Cardano otherwise).
inline std::vector<double> cubic_roots(double t) {
  const double p = -1.0, q = -t;
  const double disc = -(4 * p * p * p + 27 * q * q);
  std::vector<double> r;
  if (disc > 0) {
    const double m = 2 * std::sqrt(-p / 3);
    const double theta = std::acos(3 * q / (p * m)) / 3;
    for (int k = 0; k < 3; ++k) r.push_back(m * std::cos(theta - 2 * M_PI * k / 3));
  } else {
    const double s = std::sqrt(q * q / 4 + p * p * p / 27);
    r.push_back(std::cbrt(-q / 2 + s) + std::cbrt(-q / 2 - s));
  }
  std::sort(r.begin(), r.end());
  return r;
}

inline double tilted_energy(double t, double u) { return 0.25 * u * u * u * u - 0.5 * u * u - t * u; }

/// Generic 1-d Simpson rule.
template <class F>
double simpson(F f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(a + i * h);
  return s * h / 3;
}

}  // namespace oracle

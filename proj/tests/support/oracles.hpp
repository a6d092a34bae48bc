#pragma once

// Test-only oracles: independent reference implementations used to check
// the library (finite differences, quadrature, closed forms). These must
// not call into the code paths they verify.

#include <cmath>
#include <functional>
#include <vector>

#include "dynaconf/param_store.hpp"

namespace dynaconf::testing {

/// Central finite differences of f over every entry of every trainable
/// parameter in the store. Returns per-parameter gradient buffers aligned
/// with store indices.
inline std::vector<std::vector<double>> finite_diff_store(
    ParameterStore& store, const std::function<double()>& f, double h = 1e-5) {
  std::vector<std::vector<double>> out(store.count());
  for (int i = 0; i < store.count(); ++i) {
    auto& p = store.value(i).data;
    out[i].resize(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
      double keep = p[j];
      p[j] = keep + h;
      double up = f();
      p[j] = keep - h;
      double dn = f();
      p[j] = keep;
      out[i][j] = (up - dn) / (2.0 * h);
    }
  }
  return out;
}

/// Relative error with a floor so near-zero gradients compare absolutely.
inline double rel_err(double a, double b, double floor = 1e-4) {
  double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

/// Gauss-Hermite nodes/weights (physicists' convention: weight e^{-x^2}),
/// computed by Newton iteration on the Hermite recurrence.
inline void gauss_hermite(int n, std::vector<double>& nodes,
                          std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const double eps = 1e-14;
  int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    else if (i == 1)
      z -= 1.14 * std::pow(n, 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * nodes[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * nodes[1];
    else
      z = 2.0 * z - nodes[i - 2];
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 0.7511255444649425;  // pi^{-1/4}
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 -
             std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= eps) break;
    }
    nodes[i] = z;
    nodes[n - 1 - i] = -z;
    weights[i] = 2.0 / (pp * pp);
    weights[n - 1 - i] = weights[i];
  }
}

/// log N(x; mu, sigma^2)
inline double normal_logpdf(double x, double mu, double sigma) {
  double zz = (x - mu) / sigma;
  return -0.9189385332046727 - std::log(sigma) - 0.5 * zz * zz;
}

inline double logaddexp(double a, double b) {
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace dynaconf::testing

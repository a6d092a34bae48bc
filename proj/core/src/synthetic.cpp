#include "dynaconf/synthetic.hpp"

#include <cmath>
#include <complex>

#include "dynaconf/errors.hpp"

namespace dynaconf {

ProcessKind process_kind_from_string(const std::string& s) {
  if (s == "ar1-flip" || s == "ar1_flip") return ProcessKind::kAr1Flip;
  if (s == "ar1-dynamic" || s == "ar1_dynamic") return ProcessKind::kAr1Dynamic;
  if (s == "ar1-sin" || s == "ar1_sin") return ProcessKind::kAr1Sin;
  if (s == "var1-dynamic" || s == "var1_dynamic") return ProcessKind::kVar1Dynamic;
  throw ConfigError("unknown synthetic process: " + s);
}

std::string to_string(ProcessKind k) {
  switch (k) {
    case ProcessKind::kAr1Flip: return "ar1-flip";
    case ProcessKind::kAr1Dynamic: return "ar1-dynamic";
    case ProcessKind::kAr1Sin: return "ar1-sin";
    case ProcessKind::kVar1Dynamic: return "var1-dynamic";
  }
  return "?";
}

double spectral_radius(std::span<const double> m, int n) {
  if (static_cast<int>(m.size()) != n * n)
    throw ContractViolation("spectral_radius: matrix size mismatch");
  // characteristic polynomial by Faddeev-LeVerrier
  std::vector<double> coeff(n + 1, 0.0);  // p(x) = x^n + c[1] x^{n-1} + ... + c[n]
  coeff[0] = 1.0;
  std::vector<double> M(m.begin(), m.end());  // running A * M_k
  std::vector<double> Mk(n * n, 0.0);
  for (int i = 0; i < n; ++i) Mk[i * n + i] = 1.0;  // M_1 = I
  for (int k = 1; k <= n; ++k) {
    // AM = A * Mk
    std::vector<double> AM(n * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < n; ++p) {
        double a = m[i * n + p];
        if (a == 0.0) continue;
        for (int j = 0; j < n; ++j) AM[i * n + j] += a * Mk[p * n + j];
      }
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += AM[i * n + i];
    coeff[k] = -tr / k;
    // M_{k+1} = AM + c_k I
    Mk = AM;
    for (int i = 0; i < n; ++i) Mk[i * n + i] += coeff[k];
  }
  // Durand-Kerner on p(x)
  std::vector<std::complex<double>> roots(n);
  std::complex<double> seed(0.4, 0.9);
  std::complex<double> acc(1.0, 0.0);
  for (int i = 0; i < n; ++i) {
    acc *= seed;
    roots[i] = acc;
  }
  auto poly = [&](std::complex<double> x) {
    std::complex<double> r(coeff[0], 0.0);
    for (int k = 1; k <= n; ++k) r = r * x + coeff[k];
    return r;
  };
  for (int it = 0; it < 200; ++it) {
    double moved = 0.0;
    for (int i = 0; i < n; ++i) {
      std::complex<double> denom(1.0, 0.0);
      for (int j = 0; j < n; ++j)
        if (j != i) denom *= roots[i] - roots[j];
      std::complex<double> delta = poly(roots[i]) / denom;
      roots[i] -= delta;
      moved = std::max(moved, std::abs(delta));
    }
    if (moved < 1e-13) break;
  }
  double radius = 0.0;
  for (const auto& r : roots) radius = std::max(radius, std::abs(r));
  return radius;
}

GeneratedSeries generate(const SyntheticSpec& spec, Rng& rng) {
  if (spec.length <= 0 || spec.burn_in < 0)
    throw ConfigError("synthetic spec: length must be positive");
  const int T = spec.length;
  const int P = spec.dim();
  const int regime = spec.effective_regime_len();

  GeneratedSeries out;
  out.spec = spec;
  out.series = Series::zeros(T, P);
  out.coefficients.assign(static_cast<std::size_t>(T) * P * P, 0.0);
  out.split = default_split(T);

  // per-step coefficients
  const int n_regimes = (T + regime - 1) / regime;
  switch (spec.kind) {
    case ProcessKind::kAr1Flip:
      for (int r = 0; r < n_regimes; ++r) {
        double w = rng.bernoulli(0.5) ? 0.5 : -0.5;
        for (int t = r * regime; t < std::min((r + 1) * regime, T); ++t)
          out.coefficients[t] = w;
      }
      break;
    case ProcessKind::kAr1Dynamic:
      for (int r = 0; r < n_regimes; ++r) {
        double w = rng.uniform(-1.0, 1.0);
        for (int t = r * regime; t < std::min((r + 1) * regime, T); ++t)
          out.coefficients[t] = w;
      }
      break;
    case ProcessKind::kAr1Sin:
      for (int t = 0; t < T; ++t)
        out.coefficients[t] = std::sin(2.0 * M_PI * t / T);
      break;
    case ProcessKind::kVar1Dynamic: {
      std::vector<double> W(P * P);
      for (int r = 0; r < n_regimes; ++r) {
        int tries = 0;
        for (;;) {
          for (auto& v : W) v = rng.uniform(-spec.var_coef_range, spec.var_coef_range);
          if (spectral_radius(W, P) < 1.0) break;
          if (++tries > 10000)
            throw NumericalFailure("var generator: rejection sampling failed");
        }
        for (int t = r * regime; t < std::min((r + 1) * regime, T); ++t)
          std::copy(W.begin(), W.end(),
                    out.coefficients.begin() + static_cast<std::size_t>(t) * P * P);
      }
      break;
    }
  }

  // burn-in with the first regime's coefficient, then the recorded path
  std::vector<double> prev(P, 0.0), cur(P);
  auto step = [&](std::span<const double> W) {
    for (int i = 0; i < P; ++i) {
      double s = 0.0;
      for (int j = 0; j < P; ++j) s += W[i * P + j] * prev[j];
      cur[i] = s + rng.normal();
    }
    prev = cur;
  };
  for (int b = 0; b < spec.burn_in; ++b) step(out.coeff(0));
  for (int t = 0; t < T; ++t) {
    step(out.coeff(t));
    for (int i = 0; i < P; ++i) out.series.at(t, i) = cur[i];
  }
  return out;
}

ForecastResult oracle_forecast(const GeneratedSeries& g, int t_start, int H,
                               int n_paths, Rng& rng) {
  const int P = g.series.dim;
  if (H < 1 || n_paths < 1)
    throw ContractViolation("oracle_forecast: horizon and paths must be positive");
  if (t_start < 1 || t_start + H > g.series.length)
    throw ContractViolation("oracle_forecast: window outside the series");
  ForecastResult r = ForecastResult::zeros(t_start, H, P, n_paths);
  r.seed = g.spec.seed;
  std::vector<double> prev(P), cur(P);
  for (int p = 0; p < n_paths; ++p) {
    for (int i = 0; i < P; ++i) prev[i] = g.series.at(t_start - 1, i);
    for (int h = 0; h < H; ++h) {
      auto W = g.coeff(t_start + h);
      for (int i = 0; i < P; ++i) {
        double s = 0.0;
        for (int j = 0; j < P; ++j) s += W[i * P + j] * prev[j];
        cur[i] = s + rng.normal();
        r.at(p, h, i) = cur[i];
      }
      prev = cur;
    }
  }
  r.compute_means();
  return r;
}

std::vector<ForecastResult> oracle_rolling(const GeneratedSeries& g, int t_begin,
                                           int H, int n_windows, int n_paths,
                                           Rng& rng) {
  if (t_begin + n_windows * H > g.series.length)
    throw ContractViolation("oracle_rolling: series too short for the window plan");
  std::vector<ForecastResult> out;
  out.reserve(n_windows);
  for (int w = 0; w < n_windows; ++w)
    out.push_back(oracle_forecast(g, t_begin + w * H, H, n_paths, rng));
  return out;
}

}  // namespace dynaconf

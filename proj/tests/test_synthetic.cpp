#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "dynaconf/metrics.hpp"
#include "dynaconf/synthetic.hpp"

using namespace dynaconf;

TEST_CASE("flip process: the set of distinct |w| values is exactly {0.5}") {
  SyntheticSpec spec;
  spec.kind = ProcessKind::kAr1Flip;
  spec.seed = 3;
  Rng rng(spec.seed);
  auto g = generate(spec, rng);
  std::set<double> mags;
  for (int t = 0; t < spec.length; ++t) mags.insert(std::abs(g.coefficients[t]));
  CHECK(mags == std::set<double>{0.5});
  // both signs occur
  std::set<double> vals(g.coefficients.begin(), g.coefficients.end());
  CHECK(vals.count(0.5) == 1);
  CHECK(vals.count(-0.5) == 1);
}

TEST_CASE("sin process: w at t = T/4 equals 1") {
  SyntheticSpec spec;
  spec.kind = ProcessKind::kAr1Sin;
  Rng rng(1);
  auto g = generate(spec, rng);
  CHECK(g.coefficients[spec.length / 4] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.coefficients[0] == doctest::Approx(0.0));
}

TEST_CASE("dynamic process: regime coefficients average out near zero") {
  SyntheticSpec spec;
  spec.kind = ProcessKind::kAr1Dynamic;
  spec.length = 10000;  // 100 regimes
  spec.seed = 6;
  Rng rng(spec.seed);
  auto g = generate(spec, rng);
  double mean = 0.0;
  int n = 0;
  for (int t = 0; t < spec.length; t += 100) {
    mean += g.coefficients[t];
    ++n;
  }
  CHECK(n == 100);
  CHECK(std::abs(mean / n) < 0.06);
}

TEST_CASE("var process: every emitted coefficient matrix is stable") {
  SyntheticSpec spec;
  spec.kind = ProcessKind::kVar1Dynamic;
  spec.seed = 7;
  Rng rng(spec.seed);
  auto g = generate(spec, rng);
  for (int t = 0; t < spec.length; t += spec.effective_regime_len()) {
    double r = spectral_radius(g.coeff(t), 4);
    CHECK(r < 1.0);
  }
  // coefficient bounds honored
  for (double c : g.coefficients) CHECK(std::abs(c) <= 0.8);
}

TEST_CASE("spectral radius: known cases") {
  // triangular: max |diagonal|
  std::vector<double> tri = {0.5, 0.3, 0.0, -0.9};
  CHECK(spectral_radius(tri, 2) == doctest::Approx(0.9).epsilon(1e-9));
  // rotation-scale: complex pair with modulus r
  std::vector<double> rot = {0.0, -0.7, 0.7, 0.0};
  CHECK(spectral_radius(rot, 2) == doctest::Approx(0.7).epsilon(1e-9));
  // 4x4 block diagonal of the two above
  std::vector<double> block(16, 0.0);
  block[0] = 0.5; block[1] = 0.3; block[5] = -0.9;
  block[10] = 0.0; block[11] = -0.7; block[14] = 0.7;
  CHECK(spectral_radius(block, 4) == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("residuals y_t - w_t y_{t-1} have unit variance") {
  for (auto kind : {ProcessKind::kAr1Flip, ProcessKind::kAr1Dynamic,
                    ProcessKind::kAr1Sin}) {
    SyntheticSpec spec;
    spec.kind = kind;
    spec.seed = 11;
    Rng rng(spec.seed);
    auto g = generate(spec, rng);
    double ss = 0.0;
    int n = 0;
    for (int t = 1; t < spec.length; ++t) {
      double r = g.series.at(t, 0) - g.coefficients[t] * g.series.at(t - 1, 0);
      ss += r * r;
      ++n;
    }
    CHECK(ss / n == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("generation is reproducible from the seed") {
  SyntheticSpec spec;
  spec.kind = ProcessKind::kVar1Dynamic;
  spec.seed = 13;
  Rng r1(spec.seed), r2(spec.seed);
  auto a = generate(spec, r1);
  auto b = generate(spec, r2);
  CHECK(a.series.y == b.series.y);
  CHECK(a.coefficients == b.coefficients);
}

TEST_CASE("default split is 1000/500/1000 at T=2500") {
  auto sp = default_split(2500);
  CHECK(sp.train_end == 1000);
  CHECK(sp.val_end == 1500);
}

TEST_CASE("oracle forecast: one-step predictive is N(w y_t, 1)") {
  SyntheticSpec spec;
  spec.kind = ProcessKind::kAr1Dynamic;
  spec.seed = 17;
  Rng rng(spec.seed);
  auto g = generate(spec, rng);
  int t0 = 1600;
  Rng frng(99);
  auto f = oracle_forecast(g, t0, 1, 200000, frng);
  double expect_mean = g.coefficients[t0] * g.series.at(t0 - 1, 0);
  double m = 0.0, v = 0.0;
  for (int p = 0; p < f.n_paths; ++p) m += f.at(p, 0, 0);
  m /= f.n_paths;
  for (int p = 0; p < f.n_paths; ++p) {
    double d = f.at(p, 0, 0) - m;
    v += d * d;
  }
  v /= f.n_paths - 1;
  CHECK(m == doctest::Approx(expect_mean).epsilon(0.02));
  CHECK(std::abs(m - expect_mean) < 0.01);
  CHECK(v == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rolling plan covers the whole test region exactly once") {
  SyntheticSpec spec;
  spec.kind = ProcessKind::kAr1Flip;
  spec.seed = 19;
  Rng rng(spec.seed);
  auto g = generate(spec, rng);
  Rng frng(20);
  auto windows = oracle_rolling(g, g.split.val_end, 10, 100, 50, frng);
  CHECK(windows.size() == 100);
  int points = 0;
  int expect_t = g.split.val_end;
  for (const auto& w : windows) {
    CHECK(w.t_start == expect_t);
    expect_t += w.horizon;
    points += w.horizon;
  }
  CHECK(points == 1000);
  CHECK(expect_t == spec.length);
}

TEST_CASE("oracle rolling scores on flip stay inside the concentration band") {
  // The flip process concentrates tightly across realizations: per-step
  // predictive variances are (1 - 0.25^h)/0.75, giving an average MSE of
  // about 1.29 and a normalized CRPS near 0.695.
  SyntheticSpec spec;
  spec.kind = ProcessKind::kAr1Flip;
  spec.seed = 23;
  Rng rng(spec.seed);
  auto g = generate(spec, rng);
  Rng frng(24);
  auto windows = oracle_rolling(g, g.split.val_end, 10, 100, 500, frng);
  auto agg = evaluate_rolling(windows, g.series);
  CHECK(agg.mse > 1.15);
  CHECK(agg.mse < 1.45);
  CHECK(agg.crps > 0.67);
  CHECK(agg.crps < 0.72);
  CHECK(agg.crps_raw > 0.60);
  CHECK(agg.crps_raw < 0.69);
}

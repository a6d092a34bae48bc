#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "dynaconf/elbo.hpp"
#include "dynaconf/posterior.hpp"
#include "support/oracles.hpp"

using namespace dynaconf;
namespace oracle = dynaconf::testing;

namespace {

void fill_param(ParameterStore& ps, const std::string& name, double v) {
  int i = ps.find(name);
  REQUIRE(i >= 0);
  for (auto& x : ps.value(i).data) x = v;
}

std::vector<double> chi_values(const Tape& t, const PathSample& p, int k) {
  auto s = t.values(p.chi[k]);
  return {s.begin(), s.end()};
}

/// Toy setup: P=1, E=1, B=1 pointwise model whose likelihood can be made
/// chi-independent by zeroing the projection.
struct Toy {
  ConditionalConfig ccfg;
  std::unique_ptr<ConditionalModel> cond;
  DynamicsModel dyn{DynamicsConfig{1, 1}};
  Series data;

  explicit Toy(int T, std::uint64_t seed = 99, bool chi_blind = false) {
    ccfg.encoder.variant = EncoderVariant::kPointwise;
    ccfg.encoder.window = 1;
    ccfg.encoder.target_dim = 1;
    ccfg.encoder.hidden = 2;
    ccfg.latent = 1;
    Rng rng(seed);
    cond = std::make_unique<ConditionalModel>(ccfg, rng);
    if (chi_blind) {
      fill_param(cond->params(), "proj.w.0", 0.0);
      fill_param(cond->params(), "proj.b.0", 0.0);
    }
    data = Series::zeros(T, 1);
    Rng drng(seed + 1);
    for (auto& v : data.y) v = drng.normal();
  }
};

}  // namespace

TEST_CASE("ar posterior with zero gates samples independent steps") {
  DynamicsModel dyn(DynamicsConfig{1, 2});
  ARPosterior q(2, 4000);
  fill_param(q.params(), "q.a_raw", -40.0);      // a = 0
  fill_param(q.params(), "q.m", 0.7);
  fill_param(q.params(), "q.s_raw", std::log(std::expm1(0.5)));  // s = 0.5

  Tape t;
  Rng rng(5);
  PathSample p = q.sample_path(t, dyn, rng);
  double mean = 0.0, var = 0.0, lag = 0.0;
  std::vector<double> xs(q.horizon());
  for (int k = 1; k <= q.horizon(); ++k) xs[k - 1] = t.values(p.chi[k])[0];
  for (double x : xs) mean += x;
  mean /= xs.size();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    var += (xs[i] - mean) * (xs[i] - mean);
    lag += (xs[i] - mean) * (xs[i - 1] - mean);
  }
  CHECK(mean == doctest::Approx(0.7).epsilon(0.05));
  CHECK(std::sqrt(var / (xs.size() - 1)) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(std::abs(lag / var) < 0.05);
}

TEST_CASE("ar posterior with unit gate and tiny scale freezes the path") {
  DynamicsModel dyn(DynamicsConfig{1, 2});
  ARPosterior q(2, 30);
  fill_param(q.params(), "q.a_raw", 40.0);
  fill_param(q.params(), "q.s_raw", -600.0);  // softplus -> ~1e-261
  Tape t;
  Rng rng(6);
  PathSample p = q.sample_path(t, dyn, rng);
  auto anchor = chi_values(t, p, 0);
  for (int k = 1; k <= 30; ++k) {
    auto c = chi_values(t, p, k);
    for (int f = 0; f < 2; ++f) CHECK(c[f] == doctest::Approx(anchor[f]).epsilon(1e-12));
  }
}

TEST_CASE("ar posterior log q matches an independent sequential re-evaluation") {
  DynamicsModel dyn(DynamicsConfig{2, 2});
  ARPosterior q(4, 25);
  // random but reproducible parameter values
  Rng prng(7);
  for (const char* name : {"q.a_raw", "q.m", "q.s_raw"}) {
    int i = q.params().find(name);
    for (auto& x : q.params().value(i).data) x = prng.uniform(-1.5, 1.5);
  }
  Tape t;
  Rng rng(8);
  PathSample p = q.sample_path(t, dyn, rng);

  const auto& a_raw = q.params().value(q.params().find("q.a_raw")).data;
  const auto& m = q.params().value(q.params().find("q.m")).data;
  const auto& s_raw = q.params().value(q.params().find("q.s_raw")).data;
  double lq = 0.0;
  auto prev = chi_values(t, p, 0);
  for (int k = 1; k <= 25; ++k) {
    auto cur = chi_values(t, p, k);
    for (int f = 0; f < 4; ++f) {
      std::size_t idx = static_cast<std::size_t>(k - 1) * 4 + f;
      double a = 1.0 / (1.0 + std::exp(-a_raw[idx]));
      double s = std::log1p(std::exp(-std::abs(s_raw[idx]))) + std::max(s_raw[idx], 0.0);
      double mean = a * prev[f] + (1.0 - a) * m[idx];
      lq += oracle::normal_logpdf(cur[f], mean, s);
    }
    prev = cur;
  }
  CHECK(t.value_scalar(p.logq) == doctest::Approx(lq).epsilon(1e-10));

  // per-step factors sum to the total
  double step_sum = 0.0;
  for (Var v : p.logq_steps) step_sum += t.value_scalar(v);
  CHECK(step_sum == doctest::Approx(t.value_scalar(p.logq)).epsilon(1e-12));
}

TEST_CASE("iaf at zero-initialized heads is the identity flow") {
  DynamicsModel dyn(DynamicsConfig{1, 2});
  PosteriorConfig cfg;
  cfg.kind = "iaf";
  cfg.iaf_hidden = 16;
  cfg.iaf_embed = 4;
  Rng init(9);
  IAFPosterior q(2, 6, cfg, init);

  Tape t;
  Rng rng(10);
  PathSample p = q.sample_path(t, dyn, rng);
  // identity flow: chi equals the base draw, log q is the standard normal
  // log-density of the sampled values
  double lq_expect = 0.0;
  for (int k = 1; k <= 6; ++k) {
    auto c = chi_values(t, p, k);
    for (double v : c) lq_expect += oracle::normal_logpdf(v, 0.0, 1.0);
  }
  CHECK(t.value_scalar(p.logq) == doctest::Approx(lq_expect).epsilon(1e-12));
}

TEST_CASE("iaf log-Jacobian matches a numerically computed Jacobian at horizon 3") {
  PosteriorConfig cfg;
  cfg.kind = "iaf";
  cfg.iaf_layers = 2;
  cfg.iaf_hidden = 8;
  cfg.iaf_embed = 3;
  Rng init(11);
  IAFPosterior q(1, 3, cfg, init);
  // make the flow non-trivial
  Rng prng(12);
  for (int l = 0; l < 2; ++l) {
    for (const char* nm : {"w3", "b3"}) {
      int i = q.params().find("iaf." + std::to_string(l) + "." + nm);
      for (auto& x : q.params().value(i).data) x = prng.uniform(-0.8, 0.8);
    }
  }

  std::vector<double> z0 = {0.3, -0.5, 0.9};
  auto flow = [&](const std::vector<double>& z) {
    Tape t;
    auto [out, logdet] = q.transform(t, t.constant_vector(z), 0);
    auto vals = t.values(out);
    return std::vector<double>(vals.begin(), vals.end());
  };

  Tape t;
  auto [out, logdet] = q.transform(t, t.constant_vector(z0), 0);
  double logdet_claimed = t.value_scalar(logdet);

  // dense numerical Jacobian
  const double h = 1e-6;
  double jac[3][3];
  for (int j = 0; j < 3; ++j) {
    auto zp = z0, zm = z0;
    zp[j] += h;
    zm[j] -= h;
    auto up = flow(zp), dn = flow(zm);
    for (int i = 0; i < 3; ++i) jac[i][j] = (up[i] - dn[i]) / (2.0 * h);
  }
  // triangular: no dependence on future inputs
  CHECK(std::abs(jac[0][1]) < 1e-8);
  CHECK(std::abs(jac[0][2]) < 1e-8);
  CHECK(std::abs(jac[1][2]) < 1e-8);
  double logdet_numeric =
      std::log(std::abs(jac[0][0])) + std::log(std::abs(jac[1][1])) +
      std::log(std::abs(jac[2][2]));
  CHECK(logdet_claimed == doctest::Approx(logdet_numeric).epsilon(1e-6));
}

TEST_CASE("iaf autoregressive property: later base noise cannot reach earlier outputs") {
  PosteriorConfig cfg;
  cfg.kind = "iaf";
  cfg.iaf_layers = 3;
  cfg.iaf_hidden = 12;
  cfg.iaf_embed = 4;
  Rng init(13);
  IAFPosterior q(2, 8, cfg, init);
  Rng prng(14);
  for (int l = 0; l < 3; ++l) {
    int i = q.params().find("iaf." + std::to_string(l) + ".w3");
    for (auto& x : q.params().value(i).data) x = prng.uniform(-0.5, 0.5);
  }

  std::vector<double> z0(8);
  for (auto& v : z0) v = prng.normal();
  auto run = [&](const std::vector<double>& z) {
    Tape t;
    auto [out, logdet] = q.transform(t, t.constant_vector(z), 1);
    auto vals = t.values(out);
    return std::vector<double>(vals.begin(), vals.end());
  };
  auto base = run(z0);
  for (int tau = 0; tau < 8; ++tau) {
    auto z = z0;
    z[tau] += 1.7;
    auto pert = run(z);
    for (int i = 0; i < tau; ++i) CHECK(pert[i] == base[i]);  // bit-identical
    CHECK(pert[tau] != base[tau]);
  }
}

TEST_CASE("elbo equals the plain log-likelihood when the KL term vanishes") {
  Toy toy(40, 21, /*chi_blind=*/true);
  toy.dyn.set_lambda(1.0);
  toy.dyn.set_vard(0.01);
  ARPosterior q(1, 39);
  fill_param(q.params(), "q.a_raw", 40.0);
  fill_param(q.params(), "q.s_raw", std::log(std::expm1(0.1)));  // s = sqrt(vard)

  Tape t;
  Rng rng(22);
  ElboOptions opts;
  Var e = build_elbo(t, toy.data, toy.data.length, *toy.cond, toy.dyn, q, rng, opts);

  // plain conditional log-likelihood at phi = b_phi (chi-blind likelihood)
  Tape t2;
  auto cb = toy.cond->bind(t2);
  auto db2 = toy.dyn.bind(t2);
  std::vector<int> dims = {0};
  double ll = 0.0;
  for (int tt = 1; tt < toy.data.length; ++tt) {
    Var h = toy.cond->encode(t2, cb, make_window(toy.data, tt, 1));
    auto z = toy.cond->project_latents(t2, cb, h, dims);
    Var phi = db2.b_phi;
    auto em = toy.cond->emit(t2, cb, z, phi, dims);
    ll += t2.value_scalar(toy.cond->loglik(t2, toy.data.row(tt), em, dims));
  }
  CHECK(t.value_scalar(e) == doctest::Approx(ll).epsilon(1e-9));
}

TEST_CASE("elbo is bounded by the quadrature marginal log-likelihood on a 1-d toy") {
  // F = 1 toy over three predicted steps; the exact marginal likelihood
  // comes from Gauss-Hermite quadrature over (anchor, chi_1..chi_3).
  const int T = 4;  // B = 1, so three likelihood terms
  Toy toy(T, 31);
  toy.dyn.set_lambda(0.6);
  toy.dyn.set_var0(0.8);
  toy.dyn.set_vard(0.3);

  // exact marginal log-likelihood by quadrature
  std::vector<double> nodes, weights;
  oracle::gauss_hermite(32, nodes, weights);
  const double s0 = std::sqrt(0.8), sd = std::sqrt(0.3);
  const double lam = toy.dyn.lambda();
  // reference scale sref for all integration axes
  const double sref = 2.0;
  std::vector<int> dims = {0};

  // per-step emission pieces as functions of chi (phi = chi + b_phi, b_phi=0)
  auto emit_logpdf = [&](int tt, double chi) {
    Tape t;
    auto cb = toy.cond->bind(t);
    Var h = toy.cond->encode(t, cb, make_window(toy.data, tt, 1));
    auto z = toy.cond->project_latents(t, cb, h, dims);
    std::vector<double> chiv = {chi};
    auto db = toy.dyn.bind(t);
    Var phi = toy.dyn.compose_phi(t, db, t.constant_vector(chiv));
    auto em = toy.cond->emit(t, cb, z, phi, dims);
    return t.value_scalar(toy.cond->loglik(t, toy.data.row(tt), em, dims));
  };
  // cache emission log-densities on the grid
  std::vector<std::vector<double>> lik(3, std::vector<double>(nodes.size()));
  std::vector<double> chi_grid(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    chi_grid[i] = std::sqrt(2.0) * sref * nodes[i];
    for (int step = 0; step < 3; ++step)
      lik[step][i] = emit_logpdf(step + 1, chi_grid[i]);
  }
  auto trans_lp = [&](double cur, double prev) {
    return oracle::logaddexp(std::log(lam) + oracle::normal_logpdf(cur, prev, sd),
                             std::log1p(-lam) + oracle::normal_logpdf(cur, 0.0, s0));
  };
  const double log_subst = std::log(std::sqrt(2.0) * sref);
  double log_marginal = -INFINITY;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    double chi_a = chi_grid[a];
    double base_a = std::log(weights[a]) + nodes[a] * nodes[a] + log_subst +
                    oracle::normal_logpdf(chi_a, 0.0, s0);
    for (std::size_t i1 = 0; i1 < nodes.size(); ++i1) {
      double c1 = chi_grid[i1];
      double t1 = base_a + std::log(weights[i1]) + nodes[i1] * nodes[i1] + log_subst +
                  trans_lp(c1, chi_a) + lik[0][i1];
      for (std::size_t i2 = 0; i2 < nodes.size(); ++i2) {
        double c2 = chi_grid[i2];
        double t2v = t1 + std::log(weights[i2]) + nodes[i2] * nodes[i2] + log_subst +
                     trans_lp(c2, c1) + lik[1][i2];
        for (std::size_t i3 = 0; i3 < nodes.size(); ++i3) {
          double c3 = chi_grid[i3];
          double t3v = t2v + std::log(weights[i3]) + nodes[i3] * nodes[i3] +
                       log_subst + trans_lp(c3, c2) + lik[2][i3];
          log_marginal = oracle::logaddexp(log_marginal, t3v);
        }
      }
    }
  }

  for (const char* kind : {"ar", "iaf"}) {
    CAPTURE(kind);
    PosteriorConfig pcfg;
    pcfg.kind = kind;
    pcfg.iaf_hidden = 8;
    pcfg.iaf_embed = 2;
    Rng init(33);
    auto q = make_posterior(pcfg, 1, 3, init);

    // Monte Carlo mean and error of the ELBO draws
    const int reps = 400;
    std::vector<double> draws(reps);
    for (int r = 0; r < reps; ++r) {
      Tape t;
      Rng rng(500 + r);
      ElboOptions opts;
      draws[r] = t.value_scalar(
          build_elbo(t, toy.data, T, *toy.cond, toy.dyn, *q, rng, opts));
    }
    double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / reps;
    double var = 0.0;
    for (double d : draws) var += (d - mean) * (d - mean);
    double se = std::sqrt(var / (reps - 1) / reps);

    // bound with 3-sigma slack, and a strictly positive gap for the
    // (mismatched) freshly initialized posterior
    CHECK(mean < log_marginal + 3.0 * se);
    CHECK(mean + 3.0 * se < log_marginal);
  }
}

TEST_CASE("elbo gradients match finite differences under common random numbers") {
  Toy toy(10, 41);
  toy.dyn.set_lambda(0.8);
  ARPosterior q(1, 9);

  auto eval = [&]() {
    Tape t;
    Rng rng(77);
    ElboOptions opts;
    opts.n_mc = 3;
    return t.value_scalar(
        build_elbo(t, toy.data, 10, *toy.cond, toy.dyn, q, rng, opts));
  };

  Tape t;
  Rng rng(77);
  ElboOptions opts;
  opts.n_mc = 3;
  auto grads = t.backward(build_elbo(t, toy.data, 10, *toy.cond, toy.dyn, q, rng, opts));

  for (ParameterStore* ps : {&q.params(), &toy.dyn.params(), &toy.cond->params()}) {
    auto fd = oracle::finite_diff_store(*ps, eval, 1e-5);
    for (int i = 0; i < ps->count(); ++i) {
      const Tensor* g = grads.find(ps->key(i));
      REQUIRE(g != nullptr);
      for (std::size_t j = 0; j < fd[i].size(); ++j) {
        CAPTURE(ps->name(i));
        CHECK(oracle::rel_err(g->data[j], fd[i][j], 1e-3) < 1e-3);
      }
    }
  }
}

TEST_CASE("identical rng streams reproduce samples and elbo bit-for-bit") {
  Toy toy(20, 51);
  PosteriorConfig pcfg;
  pcfg.kind = "iaf";
  pcfg.iaf_hidden = 8;
  pcfg.iaf_embed = 2;
  Rng init(52);
  auto q = make_posterior(pcfg, 1, 19, init);

  auto run = [&]() {
    Tape t;
    Rng rng(53);
    ElboOptions opts;
    opts.n_mc = 2;
    return t.value_scalar(build_elbo(t, toy.data, 20, *toy.cond, toy.dyn, *q, rng, opts));
  };
  CHECK(run() == run());
}

TEST_CASE("both posterior families plug into the same elbo operation") {
  Toy toy(15, 61);
  Rng init(62);
  PosteriorConfig ar_cfg;
  auto q1 = make_posterior(ar_cfg, 1, 14, init);
  PosteriorConfig iaf_cfg;
  iaf_cfg.kind = "iaf";
  iaf_cfg.iaf_hidden = 8;
  iaf_cfg.iaf_embed = 2;
  auto q2 = make_posterior(iaf_cfg, 1, 14, init);
  for (Posterior* q : {q1.get(), q2.get()}) {
    Tape t;
    Rng rng(63);
    ElboOptions opts;
    Var e = build_elbo(t, toy.data, 15, *toy.cond, toy.dyn, *q, rng, opts);
    CHECK(std::isfinite(t.value_scalar(e)));
  }
}

TEST_CASE("anchor density cancellation: perturbing Sigma_0 only at the anchor is a no-op") {
  Toy toy(12, 71, /*chi_blind=*/true);
  toy.dyn.set_lambda(0.0);  // transitions never read the previous state
  ARPosterior q(1, 11);
  fill_param(q.params(), "q.a_raw", -40.0);  // q independent of the anchor

  DynamicsModel perturbed(DynamicsConfig{1, 1});
  perturbed.set_lambda(0.0);
  perturbed.set_var0(4.0);  // different anchor spread

  auto run = [&](const DynamicsModel* anchor) {
    Tape t;
    Rng rng(72);
    ElboOptions opts;
    opts.anchor_prior = anchor;
    return t.value_scalar(build_elbo(t, toy.data, 12, *toy.cond, toy.dyn, q, rng, opts));
  };
  double base = run(nullptr);
  double moved = run(&perturbed);
  CHECK(base == doctest::Approx(moved).epsilon(1e-12));
}

TEST_CASE("elbo contract checks") {
  Toy toy(10, 81);
  ARPosterior q(1, 9);
  Tape t;
  Rng rng(82);
  ElboOptions opts;
  opts.n_mc = 0;
  CHECK_THROWS_AS(build_elbo(t, toy.data, 10, *toy.cond, toy.dyn, q, rng, opts),
                  ContractViolation);
  ElboOptions opts2;
  opts2.batch_times = {0};  // below the window
  CHECK_THROWS_AS(build_elbo(t, toy.data, 10, *toy.cond, toy.dyn, q, rng, opts2),
                  ContractViolation);
}

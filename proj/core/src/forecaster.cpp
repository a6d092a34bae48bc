#include "dynaconf/forecaster.hpp"

#include <algorithm>
#include <cmath>

#include "dynaconf/errors.hpp"

namespace dynaconf {

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;

double log_normal_pdf(double x, double mean, double var) {
  double d = x - mean;
  return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

double logaddexp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

/// Scalar-observation Kalman update in Joseph form for one group block.
/// pre-state (m, P); design z; observation resid = y_eff - z.m with noise
/// variance sigma2; S = z'Pz + sigma2 precomputed by the caller.
void kalman_update(std::span<double> m, std::span<double> P,
                   std::span<const double> z, double resid, double S,
                   double sigma2, int E, std::vector<double>& scratch) {
  scratch.resize(static_cast<std::size_t>(E) * (E + 2));
  double* K = scratch.data();            // E
  double* A = scratch.data() + E;        // E x E  (I - K z')
  double* AP = scratch.data() + E + E * E;  // reused row buffer (E)

  for (int i = 0; i < E; ++i) {
    double pz = 0.0;
    for (int j = 0; j < E; ++j) pz += P[i * E + j] * z[j];
    K[i] = pz / S;
  }
  for (int i = 0; i < E; ++i) m[i] += K[i] * resid;
  for (int i = 0; i < E; ++i)
    for (int j = 0; j < E; ++j) A[i * E + j] = (i == j ? 1.0 : 0.0) - K[i] * z[j];
  // P <- A P A' + sigma2 K K'
  std::vector<double> PA(static_cast<std::size_t>(E) * E, 0.0);
  for (int i = 0; i < E; ++i)
    for (int k = 0; k < E; ++k) {
      double a = A[i * E + k];
      if (a == 0.0) continue;
      for (int j = 0; j < E; ++j) PA[i * E + j] += a * P[k * E + j];
    }
  for (int i = 0; i < E; ++i) {
    for (int j = 0; j < E; ++j) {
      double s = 0.0;
      for (int k = 0; k < E; ++k) s += PA[i * E + k] * A[j * E + k];
      AP[j] = s + sigma2 * K[i] * K[j];
    }
    for (int j = 0; j < E; ++j) P[i * E + j] = AP[j];
  }
  // enforce symmetry against round-off
  for (int i = 0; i < E; ++i)
    for (int j = i + 1; j < E; ++j) {
      double s = 0.5 * (P[i * E + j] + P[j * E + i]);
      P[i * E + j] = s;
      P[j * E + i] = s;
    }
}

/// Lower Cholesky factor with a tiny diagonal jitter fallback.
void cholesky(std::span<const double> P, int E, std::vector<double>& L) {
  L.assign(static_cast<std::size_t>(E) * E, 0.0);
  for (int i = 0; i < E; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = P[i * E + j];
      for (int k = 0; k < j; ++k) s -= L[i * E + k] * L[j * E + k];
      if (i == j) {
        L[i * E + i] = std::sqrt(std::max(s, 0.0) + 1e-12);
      } else {
        L[i * E + j] = s / L[j * E + j];
      }
    }
  }
}

}  // namespace

ParticleEnsemble init_ensemble(int n_particles, const DynamicsModel& dyn) {
  if (n_particles < 1) throw ContractViolation("init_ensemble: need at least one particle");
  ParticleEnsemble ens;
  ens.groups = dyn.groups();
  ens.group_dim = dyn.group_dim();
  const int E = ens.group_dim, F = dyn.control_dim();
  auto v0 = dyn.var0();
  Particle proto;
  proto.mean.assign(F, 0.0);
  proto.cov.assign(static_cast<std::size_t>(ens.groups) * E * E, 0.0);
  for (int g = 0; g < ens.groups; ++g)
    for (int e = 0; e < E; ++e)
      proto.cov[(static_cast<std::size_t>(g) * E + e) * E + e] = v0[g * E + e];
  proto.walked.assign(ens.groups, 1);
  ens.particles.assign(n_particles, proto);
  ens.weights.assign(n_particles, 1.0 / n_particles);
  ens.ess = n_particles;
  return ens;
}

void normalize_weights(ParticleEnsemble& ens) {
  double max_lw = -INFINITY;
  for (const auto& p : ens.particles) max_lw = std::max(max_lw, p.log_weight);
  if (max_lw == -INFINITY || !std::isfinite(max_lw)) {
    // total mismatch: reset to uniform and flag it
    for (auto& p : ens.particles) p.log_weight = 0.0;
    std::fill(ens.weights.begin(), ens.weights.end(), 1.0 / ens.size());
    ens.ess = ens.size();
    ens.weight_reset_warning = true;
    return;
  }
  double total = 0.0;
  for (int i = 0; i < ens.size(); ++i) {
    ens.weights[i] = std::exp(ens.particles[i].log_weight - max_lw);
    total += ens.weights[i];
  }
  double inv_ess = 0.0;
  for (int i = 0; i < ens.size(); ++i) {
    ens.weights[i] /= total;
    inv_ess += ens.weights[i] * ens.weights[i];
  }
  ens.ess = 1.0 / inv_ess;
}

void systematic_resample(ParticleEnsemble& ens, Rng& rng) {
  const int n = ens.size();
  double u = rng.uniform() / n;
  std::vector<Particle> next;
  next.reserve(n);
  double cum = 0.0;
  int i = -1;
  for (int k = 0; k < n; ++k) {
    double target = u + static_cast<double>(k) / n;
    while (cum < target && i + 1 < n) {
      ++i;
      cum += ens.weights[i];
    }
    next.push_back(ens.particles[std::min(i, n - 1)]);
    next.back().log_weight = 0.0;
  }
  ens.particles = std::move(next);
  std::fill(ens.weights.begin(), ens.weights.end(), 1.0 / n);
  ens.ess = n;
}

void filter_step(ParticleEnsemble& ens, std::span<const double> y_t,
                 const Window& window, const ConditionalModel& cond,
                 const DynamicsModel& dyn, Rng& rng) {
  const int P = ens.groups, E = ens.group_dim;
  if (cond.target_dim() != P || cond.latent_dim() != E)
    throw ContractViolation("filter_step: model dimensions disagree with ensemble");

  // deterministic per-dimension design vectors and emission scales
  auto h = cond.encode_values(window);
  std::vector<std::vector<double>> z(P);
  std::vector<double> sigma2(P), y_eff(P);
  auto b_phi = dyn.b_phi();
  for (int i = 0; i < P; ++i) {
    z[i] = cond.project_values(h, i);
    double s = cond.sigma_value(z[i], i);
    sigma2[i] = s * s;
    double zb = 0.0;
    for (int e = 0; e < E; ++e) zb += z[i][e] * b_phi[i * E + e];
    y_eff[i] = y_t[i] - zb - cond.b_mu(i);
  }
  auto v0 = dyn.var0();
  auto vd = dyn.vard();

  std::vector<double> m_w(E), P_w(E * E), m_r(E), P_r(E * E), scratch;
  for (auto& particle : ens.particles) {
    for (int g = 0; g < P; ++g) {
      double lam = dyn.lambda(g);
      std::span<double> m(particle.mean.data() + g * E, static_cast<std::size_t>(E));
      std::span<double> Pg(particle.cov.data() + static_cast<std::size_t>(g) * E * E,
                           static_cast<std::size_t>(E) * E);
      const auto& zg = z[g];

      // branch predictions
      std::copy(m.begin(), m.end(), m_w.begin());
      std::copy(Pg.begin(), Pg.end(), P_w.begin());
      for (int e = 0; e < E; ++e) P_w[e * E + e] += vd[g * E + e];
      std::fill(m_r.begin(), m_r.end(), 0.0);
      std::fill(P_r.begin(), P_r.end(), 0.0);
      for (int e = 0; e < E; ++e) P_r[e * E + e] = v0[g * E + e];

      auto predictive = [&](std::span<const double> mb, std::span<const double> Pb,
                            double& S, double& resid) {
        double zm = 0.0, zPz = 0.0;
        for (int a = 0; a < E; ++a) {
          zm += zg[a] * mb[a];
          double row = 0.0;
          for (int b = 0; b < E; ++b) row += Pb[a * E + b] * zg[b];
          zPz += zg[a] * row;
        }
        S = zPz + sigma2[g];
        resid = y_eff[g] - zm;
      };
      double S_w, r_w, S_r, r_r;
      predictive(m_w, P_w, S_w, r_w);
      predictive(m_r, P_r, S_r, r_r);

      double log_pw, log_pr;
      if (lam >= 1.0) {
        log_pw = 0.0;
        log_pr = -INFINITY;
      } else if (lam <= 0.0) {
        log_pw = -INFINITY;
        log_pr = 0.0;
      } else {
        log_pw = std::log(lam);
        log_pr = std::log1p(-lam);
      }
      double lw = log_pw + log_normal_pdf(r_w, 0.0, S_w);
      double lr = log_pr + log_normal_pdf(r_r, 0.0, S_r);
      double tot = logaddexp(lw, lr);
      particle.log_weight += tot;

      bool walk;
      if (lw == -INFINITY) {
        walk = false;
      } else if (lr == -INFINITY) {
        walk = true;
      } else {
        walk = rng.bernoulli(std::exp(lw - tot));
      }
      particle.walked[g] = walk ? 1 : 0;
      if (walk) {
        std::copy(m_w.begin(), m_w.end(), m.begin());
        std::copy(P_w.begin(), P_w.end(), Pg.begin());
        kalman_update(m, Pg, zg, r_w, S_w, sigma2[g], E, scratch);
      } else {
        std::copy(m_r.begin(), m_r.end(), m.begin());
        std::copy(P_r.begin(), P_r.end(), Pg.begin());
        kalman_update(m, Pg, zg, r_r, S_r, sigma2[g], E, scratch);
      }
    }
  }
  normalize_weights(ens);
  if (ens.ess < ens.size() / 2.0) systematic_resample(ens, rng);
}

std::vector<double> ensemble_mean(const ParticleEnsemble& ens) {
  const int F = ens.groups * ens.group_dim;
  std::vector<double> m(F, 0.0);
  for (int i = 0; i < ens.size(); ++i)
    for (int f = 0; f < F; ++f) m[f] += ens.weights[i] * ens.particles[i].mean[f];
  return m;
}

std::vector<double> sample_state(const ParticleEnsemble& ens, Rng& rng) {
  const int E = ens.group_dim, F = ens.groups * E;
  // draw a particle index proportional to weight
  double u = rng.uniform();
  int idx = 0;
  double cum = 0.0;
  for (int i = 0; i < ens.size(); ++i) {
    cum += ens.weights[i];
    if (u <= cum) {
      idx = i;
      break;
    }
    idx = i;
  }
  const Particle& p = ens.particles[idx];
  std::vector<double> chi(F), L, eps(E);
  for (int g = 0; g < ens.groups; ++g) {
    std::span<const double> Pg(p.cov.data() + static_cast<std::size_t>(g) * E * E,
                               static_cast<std::size_t>(E) * E);
    cholesky(Pg, E, L);
    for (auto& e : eps) e = rng.normal();
    for (int a = 0; a < E; ++a) {
      double s = p.mean[g * E + a];
      for (int b = 0; b <= a; ++b) s += L[a * E + b] * eps[b];
      chi[g * E + a] = s;
    }
  }
  return chi;
}

namespace {

/// Shared path sampler: rolls y forward from t_start for H steps given a
/// chi trajectory provider (null provider keeps chi at zero).
void sample_paths(ForecastResult& out, const Series& history, int t_start, int H,
                  int n_paths, const ConditionalModel& cond,
                  const DynamicsModel& dyn, Rng& rng,
                  const ParticleEnsemble* ens) {
  const int B = cond.window_len(), P = cond.target_dim(), E = cond.latent_dim();
  const int F = P * E;
  if (t_start < B) throw ContractViolation("forecast: not enough history for the window");
  auto b_phi = dyn.b_phi();

  // window buffer seeded from history; covariates read from the series
  Series buf = Series::zeros(B + H, P, history.cov_dim);
  for (int t = 0; t < B; ++t)
    for (int i = 0; i < P; ++i) buf.at(t, i) = history.at(t_start - B + t, i);
  if (history.cov_dim > 0) {
    for (int t = 0; t < B + H && t_start - B + t < history.length; ++t)
      for (int q = 0; q < history.cov_dim; ++q)
        buf.x[static_cast<std::size_t>(t) * history.cov_dim + q] =
            history.x[static_cast<std::size_t>(t_start - B + t) * history.cov_dim + q];
  }

  std::vector<double> phi(F), chi0;
  for (int path = 0; path < n_paths; ++path) {
    LatentPath chi_path;
    if (ens) {
      chi0 = sample_state(*ens, rng);
      chi_path = dyn.sample_prior_path(0, H, rng, chi0);
    }
    for (int h = 0; h < H; ++h) {
      if (ens) {
        for (int f = 0; f < F; ++f) phi[f] = chi_path.chi[h + 1][f] + b_phi[f];
      } else {
        for (int f = 0; f < F; ++f) phi[f] = b_phi[f];
      }
      Window w = make_window(buf, B + h, B);
      auto hvec = cond.encode_values(w);
      for (int i = 0; i < P; ++i) {
        auto z = cond.project_values(hvec, i);
        std::span<const double> phi_row(phi.data() + i * E, static_cast<std::size_t>(E));
        double mu = cond.mu_value(z, phi_row, i);
        double sigma = cond.sigma_value(z, i);
        double y = mu + sigma * rng.normal();
        out.at(path, h, i) = y;
        buf.at(B + h, i) = y;  // feed the sample back into the window
      }
    }
  }
  out.compute_means();
}

}  // namespace

ForecastResult forecast(const ParticleEnsemble& ens, const Series& history,
                        int t_start, int H, int n_paths,
                        const ConditionalModel& cond, const DynamicsModel& dyn,
                        Rng& rng) {
  if (H < 1) throw ContractViolation("forecast: horizon must be at least 1");
  if (n_paths < 1) throw ContractViolation("forecast: need at least one path");
  ForecastResult out = ForecastResult::zeros(t_start, H, cond.target_dim(), n_paths);
  out.weight_reset_warning = ens.weight_reset_warning;
  sample_paths(out, history, t_start, H, n_paths, cond, dyn, rng, &ens);
  return out;
}

ForecastResult forecast_static(const Series& history, int t_start, int H,
                               int n_paths, const ConditionalModel& cond,
                               const DynamicsModel& dyn, Rng& rng) {
  if (H < 1) throw ContractViolation("forecast: horizon must be at least 1");
  if (n_paths < 1) throw ContractViolation("forecast: need at least one path");
  ForecastResult out = ForecastResult::zeros(t_start, H, cond.target_dim(), n_paths);
  sample_paths(out, history, t_start, H, n_paths, cond, dyn, rng, nullptr);
  return out;
}

std::vector<ForecastResult> rolling_forecast(const ConditionalModel& cond,
                                             const DynamicsModel& dyn,
                                             bool dynamic, const Series& series,
                                             const RollingPlan& plan, Rng& rng) {
  const int B = cond.window_len();
  if (plan.t_begin < B || plan.t_begin + plan.n_windows * plan.horizon > series.length)
    throw ContractViolation("rolling_forecast: series too short for the plan");

  std::vector<ForecastResult> out;
  out.reserve(plan.n_windows);
  if (!dynamic) {
    for (int w = 0; w < plan.n_windows; ++w)
      out.push_back(forecast_static(series, plan.t_begin + w * plan.horizon,
                                    plan.horizon, plan.n_paths, cond, dyn, rng));
    return out;
  }

  ParticleEnsemble ens = init_ensemble(plan.n_particles, dyn);
  for (int t = B; t < plan.t_begin; ++t)
    filter_step(ens, series.row(t), make_window(series, t, B), cond, dyn, rng);
  for (int w = 0; w < plan.n_windows; ++w) {
    int t0 = plan.t_begin + w * plan.horizon;
    out.push_back(forecast(ens, series, t0, plan.horizon, plan.n_paths, cond, dyn, rng));
    for (int t = t0; t < t0 + plan.horizon; ++t)
      filter_step(ens, series.row(t), make_window(series, t, B), cond, dyn, rng);
  }
  return out;
}

LatentTrace filter_latent_trace(const ConditionalModel& cond, const DynamicsModel& dyn,
                                const Series& series, int t_end, int n_particles,
                                Rng& rng, int quantile_draws) {
  const int B = cond.window_len(), F = dyn.control_dim(), E = dyn.group_dim();
  if (t_end > series.length) throw ContractViolation("latent trace: t_end beyond series");
  LatentTrace tr;
  ParticleEnsemble ens = init_ensemble(n_particles, dyn);
  std::vector<double> draws(quantile_draws), L;
  for (int t = B; t < t_end; ++t) {
    filter_step(ens, series.row(t), make_window(series, t, B), cond, dyn, rng);
    for (int f = 0; f < F; ++f) {
      int g = f / E, e = f % E;
      for (int d = 0; d < quantile_draws; ++d) {
        // marginal mixture draw for component f
        double u = rng.uniform();
        int idx = 0;
        double cum = 0.0;
        for (int i = 0; i < ens.size(); ++i) {
          cum += ens.weights[i];
          if (u <= cum) {
            idx = i;
            break;
          }
          idx = i;
        }
        const Particle& p = ens.particles[idx];
        double var = p.cov[(static_cast<std::size_t>(g) * E + e) * E + e];
        draws[d] = p.mean[f] + std::sqrt(std::max(var, 0.0)) * rng.normal();
      }
      std::sort(draws.begin(), draws.end());
      auto q = [&](double pr) {
        double pos = pr * (quantile_draws - 1);
        int lo = static_cast<int>(pos);
        double fr = pos - lo;
        return draws[lo] * (1.0 - fr) + draws[std::min(lo + 1, quantile_draws - 1)] * fr;
      };
      tr.t.push_back(t);
      tr.component.push_back(f);
      tr.median.push_back(q(0.5));
      tr.p05.push_back(q(0.05));
      tr.p95.push_back(q(0.95));
    }
  }
  return tr;
}

}  // namespace dynaconf

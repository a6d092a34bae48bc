#include "dynaconf/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "dynaconf/errors.hpp"

namespace dynaconf {

double clamped_logit(double p) {
  p = std::clamp(p, 0.0, 1.0);
  if (p <= 0.0) return -40.0;
  if (p >= 1.0) return 40.0;
  return std::clamp(std::log(p) - std::log1p(-p), -40.0, 40.0);
}

DynamicsModel::DynamicsModel(const DynamicsConfig& cfg) : cfg_(cfg) {
  if (cfg_.groups < 1 || cfg_.group_dim < 1)
    throw ConfigError("dynamics config: dimensions must be positive");
  if (cfg_.init_lambda <= 0.0 || cfg_.init_lambda >= 1.0)
    throw ConfigError("dynamics config: lambda must lie strictly in (0,1)");
  if (cfg_.init_var0 <= 0.0 || cfg_.init_vard <= 0.0)
    throw ConfigError("dynamics config: variances must be positive");
  int P = cfg_.groups, E = cfg_.group_dim, F = P * E;
  int lam_n = cfg_.per_group ? P : 1;
  int var_n = cfg_.per_group ? F : E;
  lambda_logit_ = params_.add(
      "dyn.lambda_logit",
      Tensor::full({(std::size_t)lam_n}, clamped_logit(cfg_.init_lambda)));
  log_var0_ = params_.add("dyn.log_var0",
                          Tensor::full({(std::size_t)var_n}, std::log(cfg_.init_var0)));
  log_vard_ = params_.add("dyn.log_vard",
                          Tensor::full({(std::size_t)var_n}, std::log(cfg_.init_vard)));
  b_phi_ = params_.add("dyn.b_phi", Tensor::zeros({(std::size_t)F}));
}

double DynamicsModel::lambda(int group) const {
  const auto& v = params_.value(lambda_logit_).data;
  double logit = cfg_.per_group ? v[group] : v[0];
  return 1.0 / (1.0 + std::exp(-logit));
}

void DynamicsModel::set_lambda(double lam, int group) {
  auto& v = params_.value(lambda_logit_).data;
  double logit = clamped_logit(lam);
  if (group < 0)
    std::fill(v.begin(), v.end(), logit);
  else
    v[cfg_.per_group ? group : 0] = logit;
}

std::vector<double> DynamicsModel::var0() const {
  const auto& v = params_.value(log_var0_).data;
  std::vector<double> out(control_dim());
  for (int f = 0; f < control_dim(); ++f)
    out[f] = std::exp(cfg_.per_group ? v[f] : v[f % cfg_.group_dim]);
  return out;
}

std::vector<double> DynamicsModel::vard() const {
  const auto& v = params_.value(log_vard_).data;
  std::vector<double> out(control_dim());
  for (int f = 0; f < control_dim(); ++f)
    out[f] = std::exp(cfg_.per_group ? v[f] : v[f % cfg_.group_dim]);
  return out;
}

void DynamicsModel::set_var0(double v) {
  double lv = std::log(std::max(v, 1e-300));
  auto& d = params_.value(log_var0_).data;
  std::fill(d.begin(), d.end(), lv);
}

void DynamicsModel::set_vard(double v) {
  double lv = std::log(std::max(v, 1e-300));
  auto& d = params_.value(log_vard_).data;
  std::fill(d.begin(), d.end(), lv);
}

void DynamicsModel::set_b_phi(std::span<const double> v) {
  auto& d = params_.value(b_phi_).data;
  if (v.size() != d.size()) throw ContractViolation("set_b_phi: size mismatch");
  std::copy(v.begin(), v.end(), d.begin());
}

Tensor DynamicsModel::compose_phi(std::span<const double> chi) const {
  if (static_cast<int>(chi.size()) != control_dim())
    throw ContractViolation("compose_phi: chi has wrong dimension");
  Tensor phi = Tensor::zeros({(std::size_t)cfg_.groups, (std::size_t)cfg_.group_dim});
  auto b = b_phi();
  for (int f = 0; f < control_dim(); ++f) phi.data[f] = chi[f] + b[f];
  return phi;
}

LatentPath DynamicsModel::sample_prior_path(
    int t_from, int t_to, Rng& rng,
    const std::optional<std::vector<double>>& init) const {
  if (t_from > t_to) throw ContractViolation("sample_prior_path: t_from > t_to");
  int F = control_dim(), E = cfg_.group_dim, P = cfg_.groups;
  std::vector<double> s0(F), sd(F);
  {
    auto v0 = var0(), vd = vard();
    for (int f = 0; f < F; ++f) {
      s0[f] = std::sqrt(v0[f]);
      sd[f] = std::sqrt(vd[f]);
    }
  }
  LatentPath path;
  path.t_from = t_from;
  path.chi.reserve(t_to - t_from + 1);
  path.restart.reserve(t_to - t_from + 1);

  std::vector<double> cur(F);
  if (init) {
    if (static_cast<int>(init->size()) != F)
      throw ContractViolation("sample_prior_path: init has wrong dimension");
    cur = *init;
  } else {
    for (int f = 0; f < F; ++f) cur[f] = s0[f] * rng.normal();
  }
  path.chi.push_back(cur);
  path.restart.emplace_back();  // no indicator at the initial step

  for (int t = t_from + 1; t <= t_to; ++t) {
    std::vector<std::uint8_t> walk(P);
    for (int g = 0; g < P; ++g) {
      walk[g] = rng.bernoulli(lambda(g)) ? 1 : 0;
      for (int e = 0; e < E; ++e) {
        int f = g * E + e;
        if (walk[g])
          cur[f] += sd[f] * rng.normal();
        else
          cur[f] = s0[f] * rng.normal();
      }
    }
    path.chi.push_back(cur);
    path.restart.push_back(std::move(walk));
  }
  return path;
}

// ---- tape path ---------------------------------------------------------------

DynamicsModel::Bindings DynamicsModel::bind(Tape& t) const {
  return {t.param(params_, lambda_logit_), t.param(params_, log_var0_),
          t.param(params_, log_vard_), t.param(params_, b_phi_)};
}

Var DynamicsModel::expand_to_full(Tape& t, Var v) const {
  if (cfg_.per_group || cfg_.groups == 1) return v;
  std::vector<Var> parts(cfg_.groups, v);
  return t.concat(parts);
}

Var DynamicsModel::compose_phi(Tape& t, const Bindings& b, Var chi) const {
  return t.add(chi, b.b_phi);
}

Var DynamicsModel::sigma0_vec(Tape& t, const Bindings& b) const {
  return t.exp(t.scale(expand_to_full(t, b.log_var0), 0.5));
}

Var DynamicsModel::transition_logdensity(Tape& t, const Bindings& b, Var chi_t,
                                         Var chi_prev) const {
  std::vector<int> all(cfg_.groups);
  for (int g = 0; g < cfg_.groups; ++g) all[g] = g;
  return transition_logdensity(t, b, chi_t, chi_prev, all);
}

Var DynamicsModel::transition_logdensity(Tape& t, const Bindings& b, Var chi_t,
                                         Var chi_prev,
                                         std::span<const int> groups) const {
  int E = cfg_.group_dim, P = cfg_.groups;
  if (t.rows(chi_t) != control_dim() || t.rows(chi_prev) != control_dim())
    throw ContractViolation("transition_logdensity: state has wrong dimension");

  Var sigma_d = t.exp(t.scale(expand_to_full(t, b.log_vard), 0.5));
  Var sigma_0 = sigma0_vec(t, b);
  bool full = static_cast<int>(groups.size()) == P;
  for (std::size_t k = 0; full && k < groups.size(); ++k)
    full = groups[k] == static_cast<int>(k);

  if (full) {
    Var walk = t.sum_segments(t.normal_logpdf(chi_t, chi_prev, sigma_d), E);
    Var restart =
        t.sum_segments(t.normal_logpdf(chi_t, t.zeros(control_dim()), sigma_0), E);
    if (!cfg_.per_group) {
      Var logit = b.lambda_logit;  // scalar
      Var log_lam = t.neg(t.softplus(t.neg(logit)));
      Var log_one_minus = t.neg(t.softplus(logit));
      return t.sum(t.logaddexp(t.vs_add(walk, log_lam), t.vs_add(restart, log_one_minus)));
    }
    Var log_lam = t.neg(t.softplus(t.neg(b.lambda_logit)));
    Var log_one_minus = t.neg(t.softplus(b.lambda_logit));
    return t.sum(t.logaddexp(t.add(walk, log_lam), t.add(restart, log_one_minus)));
  }

  // group subset: assemble per group
  std::vector<Var> terms;
  terms.reserve(groups.size());
  for (int g : groups) {
    Var ct = t.slice(chi_t, g * E, (g + 1) * E);
    Var cp = t.slice(chi_prev, g * E, (g + 1) * E);
    Var sd = t.slice(sigma_d, g * E, (g + 1) * E);
    Var s0 = t.slice(sigma_0, g * E, (g + 1) * E);
    Var walk = t.sum(t.normal_logpdf(ct, cp, sd));
    Var restart = t.sum(t.normal_logpdf(ct, t.zeros(E), s0));
    Var logit = cfg_.per_group ? t.slice(b.lambda_logit, g, g + 1) : b.lambda_logit;
    Var log_lam = t.neg(t.softplus(t.neg(logit)));
    Var log_one_minus = t.neg(t.softplus(logit));
    terms.push_back(t.logaddexp(t.add(walk, log_lam), t.add(restart, log_one_minus)));
  }
  Var acc = terms[0];
  for (std::size_t k = 1; k < terms.size(); ++k) acc = t.add(acc, terms[k]);
  return acc;
}

Var DynamicsModel::initial_logdensity(Tape& t, const Bindings& b, Var chi) const {
  Var sigma_0 = sigma0_vec(t, b);
  return t.sum(t.normal_logpdf(chi, t.zeros(control_dim()), sigma_0));
}

}  // namespace dynaconf

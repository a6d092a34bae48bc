#include "dynaconf/posterior.hpp"

#include <array>
#include <cmath>

#include "dynaconf/errors.hpp"

namespace dynaconf {

namespace {

// softplus(x + kSigmaShift) equals 1 at x = 0, so a zero-initialized final
// layer starts every flow at the identity transform.
const double kSigmaShift = std::log(std::expm1(1.0));

Tensor uniform_init(std::vector<std::size_t> shape, int fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

std::vector<double> standard_normals(int n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

// ---- AR ---------------------------------------------------------------------

ARPosterior::ARPosterior(int control_dim, int horizon)
    : control_dim_(control_dim), horizon_(horizon) {
  if (control_dim < 1 || horizon < 1)
    throw ConfigError("ar posterior: control_dim and horizon must be positive");
  std::size_t n = static_cast<std::size_t>(horizon) * control_dim;
  // favor walk-continuation a priori: a = sigmoid(2), s = softplus^{-1}(0.1)
  params_.add("q.a_raw", Tensor::full({n}, 2.0));
  params_.add("q.m", Tensor::zeros({n}));
  params_.add("q.s_raw", Tensor::full({n}, std::log(std::expm1(0.1))));
  a_raw_ = params_.find("q.a_raw");
  m_ = params_.find("q.m");
  s_raw_ = params_.find("q.s_raw");
}

PathSample ARPosterior::sample_path(Tape& t, const DynamicsModel& anchor_prior,
                                    Rng& rng) const {
  if (anchor_prior.control_dim() != control_dim_)
    throw ContractViolation("ar posterior: prior control dimension mismatch");
  const int F = control_dim_;
  PathSample out;
  out.chi.reserve(horizon_ + 1);
  out.logq_steps.reserve(horizon_);

  auto db = anchor_prior.bind(t);
  Var sigma0 = anchor_prior.sigma0_vec(t, db);
  Var eps0 = t.constant_vector(standard_normals(F, rng), "eps0");
  out.chi.push_back(t.mul(sigma0, eps0));

  Var a_all = t.param(params_, a_raw_);
  Var m_all = t.param(params_, m_);
  Var s_all = t.param(params_, s_raw_);
  Var ones = t.ones(F);

  for (int k = 0; k < horizon_; ++k) {
    Var a = t.sigmoid(t.slice(a_all, k * F, (k + 1) * F));
    Var m = t.slice(m_all, k * F, (k + 1) * F);
    Var s = t.softplus(t.slice(s_all, k * F, (k + 1) * F));
    Var mean = t.add(t.mul(a, out.chi.back()), t.mul(t.sub(ones, a), m));
    Var eps = t.constant_vector(standard_normals(F, rng), "eps");
    Var chi = t.add(mean, t.mul(s, eps));
    Var lq = t.sum(t.normal_logpdf(chi, mean, s));
    out.chi.push_back(chi);
    out.logq_steps.push_back(lq);
  }
  Var acc = out.logq_steps[0];
  for (int k = 1; k < horizon_; ++k) acc = t.add(acc, out.logq_steps[k]);
  out.logq = acc;
  return out;
}

// ---- IAF --------------------------------------------------------------------

IAFPosterior::IAFPosterior(int control_dim, int horizon, const PosteriorConfig& cfg,
                           Rng& rng)
    : control_dim_(control_dim), horizon_(horizon), cfg_(cfg) {
  if (control_dim < 1 || horizon < 1)
    throw ConfigError("iaf posterior: control_dim and horizon must be positive");
  if (cfg_.iaf_layers < 1 || cfg_.iaf_hidden < 1 || cfg_.iaf_embed < 1)
    throw ConfigError("iaf posterior: layer/width config must be positive");

  const int Tp = horizon_, H = cfg_.iaf_hidden, Emb = cfg_.iaf_embed;

  // MADE degrees: inputs 1..T', hidden cycling over 1..T'-1, outputs 1..T'.
  // Masks give every output a strict dependence on earlier inputs only;
  // embedding columns (degree 0) feed all hidden units.
  int max_hidden_deg = std::max(Tp - 1, 1);
  std::vector<int> deg_h(H);
  for (int j = 0; j < H; ++j) deg_h[j] = 1 + (j % max_hidden_deg);

  auto m1 = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(H) * (Tp + Emb), 0.0);
  for (int j = 0; j < H; ++j) {
    for (int i = 0; i < Tp; ++i)
      (*m1)[static_cast<std::size_t>(j) * (Tp + Emb) + i] = deg_h[j] >= i + 1 ? 1.0 : 0.0;
    for (int i = Tp; i < Tp + Emb; ++i)
      (*m1)[static_cast<std::size_t>(j) * (Tp + Emb) + i] = 1.0;
  }
  auto m2 = std::make_shared<std::vector<double>>(static_cast<std::size_t>(H) * H, 0.0);
  for (int k = 0; k < H; ++k)
    for (int j = 0; j < H; ++j)
      (*m2)[static_cast<std::size_t>(k) * H + j] = deg_h[k] >= deg_h[j] ? 1.0 : 0.0;
  auto m3 = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(2 * Tp) * H, 0.0);
  for (int out = 0; out < 2 * Tp; ++out) {
    int tpos = out % Tp;  // rows [0,T') are mu, rows [T',2T') are sigma_raw
    for (int j = 0; j < H; ++j)
      (*m3)[static_cast<std::size_t>(out) * H + j] = deg_h[j] < tpos + 1 ? 1.0 : 0.0;
  }
  mask1_ = std::move(m1);
  mask2_ = std::move(m2);
  mask3_ = std::move(m3);

  for (int l = 0; l < cfg_.iaf_layers; ++l) {
    std::string p = "iaf." + std::to_string(l) + ".";
    std::array<int, 6> ids{};
    ids[0] = params_.add(p + "w1", uniform_init({(std::size_t)H, (std::size_t)(Tp + Emb)},
                                                Tp + Emb, rng));
    ids[1] = params_.add(p + "b1", uniform_init({(std::size_t)H}, Tp + Emb, rng));
    ids[2] = params_.add(p + "w2", uniform_init({(std::size_t)H, (std::size_t)H}, H, rng));
    ids[3] = params_.add(p + "b2", uniform_init({(std::size_t)H}, H, rng));
    // zero-initialized head: every layer starts as the identity flow
    ids[4] = params_.add(p + "w3", Tensor::zeros({(std::size_t)(2 * Tp), (std::size_t)H}));
    ids[5] = params_.add(p + "b3", Tensor::zeros({(std::size_t)(2 * Tp)}));
    layer_params_.push_back(ids);
  }
  embed_ = params_.add("iaf.embed",
                       uniform_init({(std::size_t)control_dim_, (std::size_t)Emb},
                                    Emb, rng));
}

IAFPosterior::FlowBindings IAFPosterior::bind_flow(Tape& t) const {
  FlowBindings fb;
  for (const auto& ids : layer_params_) {
    std::array<Var, 6> vs;
    for (int k = 0; k < 6; ++k) vs[k] = t.param(params_, ids[k]);
    fb.layers.push_back(vs);
  }
  fb.embed = t.param(params_, embed_);
  return fb;
}

std::pair<Var, Var> IAFPosterior::transform_bound(Tape& t, const FlowBindings& fb,
                                                  Var z0, int component) const {
  const int Tp = horizon_, Emb = cfg_.iaf_embed;
  Var emb = t.slice(fb.embed, component * Emb, (component + 1) * Emb);
  Var z = z0;
  Var logdet{-1};
  for (int l = 0; l < cfg_.iaf_layers; ++l) {
    Var in = t.concat(z, emb);
    Var h1 = t.tanh(t.add(t.masked_matmul(fb.layers[l][0], in, mask1_), fb.layers[l][1]));
    Var h2 = t.tanh(t.add(t.masked_matmul(fb.layers[l][2], h1, mask2_), fb.layers[l][3]));
    Var head = t.add(t.masked_matmul(fb.layers[l][4], h2, mask3_), fb.layers[l][5]);
    Var mu = t.slice(head, 0, Tp);
    Var sigma = t.softplus(t.vs_add(t.slice(head, Tp, 2 * Tp), t.scalar(kSigmaShift)));
    z = t.add(mu, t.mul(sigma, z));
    Var ld = t.sum(t.log(sigma));
    logdet = l == 0 ? ld : t.add(logdet, ld);
  }
  return {z, logdet};
}

std::pair<Var, Var> IAFPosterior::transform(Tape& t, Var z0, int component) const {
  return transform_bound(t, bind_flow(t), z0, component);
}

PathSample IAFPosterior::sample_path(Tape& t, const DynamicsModel& anchor_prior,
                                     Rng& rng) const {
  if (anchor_prior.control_dim() != control_dim_)
    throw ContractViolation("iaf posterior: prior control dimension mismatch");
  const int F = control_dim_, Tp = horizon_;

  PathSample out;
  auto db = anchor_prior.bind(t);
  Var sigma0 = anchor_prior.sigma0_vec(t, db);
  Var eps0 = t.constant_vector(standard_normals(F, rng), "eps0");
  Var anchor = t.mul(sigma0, eps0);

  FlowBindings fb = bind_flow(t);
  std::vector<Var> comp(F);
  Var logq{-1};
  for (int f = 0; f < F; ++f) {
    Var z0 = t.constant_vector(standard_normals(Tp, rng), "z0");
    Var base = t.sum(t.normal_logpdf(z0, t.zeros(Tp), t.ones(Tp)));
    auto [z, logdet] = transform_bound(t, fb, z0, f);
    comp[f] = z;
    Var lq = t.sub(base, logdet);
    logq = f == 0 ? lq : t.add(logq, lq);
  }

  out.chi.reserve(Tp + 1);
  out.chi.push_back(anchor);
  for (int k = 0; k < Tp; ++k) {
    if (F == 1) {
      out.chi.push_back(t.slice(comp[0], k, k + 1));
    } else {
      std::vector<Var> parts;
      parts.reserve(F);
      for (int f = 0; f < F; ++f) parts.push_back(t.slice(comp[f], k, k + 1));
      out.chi.push_back(t.concat(parts));
    }
  }
  out.logq = logq;
  return out;
}

std::unique_ptr<Posterior> make_posterior(const PosteriorConfig& cfg, int control_dim,
                                          int horizon, Rng& init_rng) {
  if (cfg.kind == "ar") return std::make_unique<ARPosterior>(control_dim, horizon);
  if (cfg.kind == "iaf")
    return std::make_unique<IAFPosterior>(control_dim, horizon, cfg, init_rng);
  throw ConfigError("unknown posterior kind: " + cfg.kind);
}

}  // namespace dynaconf

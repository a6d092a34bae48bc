#include "dynaconf/conditional.hpp"

#include <cmath>

#include "dynaconf/errors.hpp"

namespace dynaconf {

EncoderVariant encoder_variant_from_string(const std::string& s) {
  if (s == "pointwise" || s == "pp") return EncoderVariant::kPointwise;
  if (s == "mlp") return EncoderVariant::kMlp;
  if (s == "recurrent" || s == "lstm") return EncoderVariant::kRecurrent;
  throw ConfigError("unknown encoder variant: " + s);
}

std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::kPointwise: return "pointwise";
    case EncoderVariant::kMlp: return "mlp";
    case EncoderVariant::kRecurrent: return "recurrent";
  }
  return "?";
}

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, int fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ConditionalModel::ConditionalModel(const ConditionalConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  const auto& e = cfg_.encoder;
  if (e.window < 1 || e.target_dim < 1 || e.hidden < 1 || e.covariate_dim < 0)
    throw ConfigError("encoder config: dimensions must be positive");
  if (cfg_.latent < 1) throw ConfigError("latent width must be positive");
  if (cfg_.latent >= e.hidden)
    throw ConfigError("latent width must be smaller than the encoder width");

  switch (e.variant) {
    case EncoderVariant::kPointwise: init_pointwise(rng); break;
    case EncoderVariant::kMlp: init_mlp(rng); break;
    case EncoderVariant::kRecurrent: init_lstm(rng); break;
  }
  for (int i = 0; i < params_.count(); ++i) encoder_params_.push_back(i);

  int P = e.target_dim, D = e.hidden, E = cfg_.latent;
  for (int i = 0; i < P; ++i) {
    proj_w_.push_back(params_.add("proj.w." + std::to_string(i),
                                  uniform_init({(std::size_t)E, (std::size_t)D}, D, rng)));
    proj_b_.push_back(params_.add("proj.b." + std::to_string(i),
                                  uniform_init({(std::size_t)E}, D, rng)));
    sig_w_.push_back(params_.add("emit.w_sigma." + std::to_string(i),
                                 uniform_init({(std::size_t)E}, E, rng)));
  }
  sig_b_ = params_.add("emit.b_sigma", Tensor::zeros({(std::size_t)P}));
  mu_b_ = params_.add("emit.b_mu", Tensor::zeros({(std::size_t)P}));
}

void ConditionalModel::init_pointwise(Rng& rng) {
  const auto& e = cfg_.encoder;
  int in = e.target_dim + e.covariate_dim;
  enc_w_.push_back(params_.add("enc.w", uniform_init({(std::size_t)e.hidden,
                                                      (std::size_t)in}, in, rng)));
  enc_b_.push_back(params_.add("enc.b", uniform_init({(std::size_t)e.hidden}, in, rng)));
}

void ConditionalModel::init_mlp(Rng& rng) {
  const auto& e = cfg_.encoder;
  if (e.mlp_layers < 1) throw ConfigError("mlp encoder needs at least one layer");
  int in = e.window * e.target_dim + (e.window + 1) * e.covariate_dim;
  for (int l = 0; l < e.mlp_layers; ++l) {
    int fan_in = l == 0 ? in : e.hidden;
    enc_w_.push_back(params_.add("enc.w." + std::to_string(l),
                                 uniform_init({(std::size_t)e.hidden,
                                               (std::size_t)fan_in}, fan_in, rng)));
    enc_b_.push_back(params_.add("enc.b." + std::to_string(l),
                                 uniform_init({(std::size_t)e.hidden}, fan_in, rng)));
  }
}

void ConditionalModel::init_lstm(Rng& rng) {
  const auto& e = cfg_.encoder;
  if (e.lstm_layers < 1) throw ConfigError("lstm encoder needs at least one layer");
  int H = e.hidden;
  for (int l = 0; l < e.lstm_layers; ++l) {
    int in = (l == 0 ? e.target_dim + e.covariate_dim : H) + H;
    Tensor w = uniform_init({(std::size_t)(4 * H), (std::size_t)in}, in, rng);
    Tensor b = uniform_init({(std::size_t)(4 * H)}, in, rng);
    // gate order [i, f, g, o]; forget bias starts at 1 for trainability
    for (int j = H; j < 2 * H; ++j) b.data[j] = 1.0;
    enc_w_.push_back(params_.add("enc.w." + std::to_string(l), std::move(w)));
    enc_b_.push_back(params_.add("enc.b." + std::to_string(l), std::move(b)));
  }
}

CondBindings ConditionalModel::bind(Tape& t) const {
  CondBindings b;
  for (int id : enc_w_) b.enc_w.push_back(t.param(params_, id));
  for (int id : enc_b_) b.enc_b.push_back(t.param(params_, id));
  for (int id : proj_w_) b.proj_w.push_back(t.param(params_, id));
  for (int id : proj_b_) b.proj_b.push_back(t.param(params_, id));
  for (int id : sig_w_) b.sig_w.push_back(t.param(params_, id));
  b.sig_b = t.param(params_, sig_b_);
  b.mu_b = t.param(params_, mu_b_);
  return b;
}

Var ConditionalModel::encode(Tape& t, const CondBindings& b, const Window& w) const {
  const auto& e = cfg_.encoder;
  if (w.window_len != e.window || w.dim != e.target_dim || w.cov_dim != e.covariate_dim)
    throw ContractViolation("encode: window does not match encoder config");

  switch (e.variant) {
    case EncoderVariant::kPointwise: {
      // lag-1 observation (+ covariates at t)
      Var in = t.constant_vector(
          w.y.subspan(static_cast<std::size_t>(e.window - 1) * e.target_dim,
                      e.target_dim),
          "y_lag1");
      if (e.covariate_dim > 0) {
        Var xv = t.constant_vector(
            w.x.subspan(static_cast<std::size_t>(e.window) * e.covariate_dim,
                        e.covariate_dim),
            "x_t");
        in = t.concat(in, xv);
      }
      return t.tanh(t.affine(b.enc_w[0], in, b.enc_b[0]));
    }
    case EncoderVariant::kMlp: {
      Var in = t.constant_vector(w.y, "y_window");
      if (e.covariate_dim > 0) in = t.concat(in, t.constant_vector(w.x, "x_window"));
      Var h = in;
      for (std::size_t l = 0; l < b.enc_w.size(); ++l)
        h = t.tanh(t.affine(b.enc_w[l], h, b.enc_b[l]));
      return h;
    }
    case EncoderVariant::kRecurrent: {
      int H = e.hidden;
      int steps = e.window + (e.covariate_dim > 0 ? 1 : 0);
      std::vector<Var> hs(b.enc_w.size()), cs(b.enc_w.size());
      for (std::size_t l = 0; l < b.enc_w.size(); ++l) {
        hs[l] = t.zeros(H);
        cs[l] = t.zeros(H);
      }
      for (int j = 0; j < steps; ++j) {
        Var in{-1};
        if (j < e.window) {
          in = t.constant_vector(
              w.y.subspan(static_cast<std::size_t>(j) * e.target_dim, e.target_dim),
              "y_step");
          if (e.covariate_dim > 0)
            in = t.concat(in, t.constant_vector(
                                  w.x.subspan(static_cast<std::size_t>(j) * e.covariate_dim,
                                              e.covariate_dim),
                                  "x_step"));
        } else {
          in = t.zeros(e.target_dim);
          in = t.concat(in, t.constant_vector(
                                w.x.subspan(static_cast<std::size_t>(j) * e.covariate_dim,
                                            e.covariate_dim),
                                "x_step"));
        }
        for (std::size_t l = 0; l < b.enc_w.size(); ++l) {
          Var cat = t.concat(in, hs[l]);
          Var gates = t.affine(b.enc_w[l], cat, b.enc_b[l]);
          Var ig = t.sigmoid(t.slice(gates, 0, H));
          Var fg = t.sigmoid(t.slice(gates, H, 2 * H));
          Var gg = t.tanh(t.slice(gates, 2 * H, 3 * H));
          Var og = t.sigmoid(t.slice(gates, 3 * H, 4 * H));
          cs[l] = t.add(t.mul(fg, cs[l]), t.mul(ig, gg));
          hs[l] = t.mul(og, t.tanh(cs[l]));
          in = hs[l];
        }
      }
      return hs.back();
    }
  }
  throw ContractViolation("encode: unreachable");
}

std::vector<Var> ConditionalModel::project_latents(Tape& t, const CondBindings& b,
                                                   Var h,
                                                   std::span<const int> dims) const {
  std::vector<Var> z;
  z.reserve(dims.size());
  for (int i : dims)
    z.push_back(t.tanh(t.affine(b.proj_w[i], h, b.proj_b[i])));
  return z;
}

EmissionVars ConditionalModel::emit(Tape& t, const CondBindings& b,
                                    const std::vector<Var>& z, Var phi,
                                    std::span<const int> dims) const {
  if (z.size() != dims.size()) throw ContractViolation("emit: z/dims size mismatch");
  int E = cfg_.latent;
  std::vector<Var> mu_parts, sig_parts;
  mu_parts.reserve(dims.size());
  sig_parts.reserve(dims.size());
  for (std::size_t k = 0; k < dims.size(); ++k) {
    int i = dims[k];
    Var phi_i = t.slice(phi, i * E, (i + 1) * E);
    Var mu_i = t.add(t.dot(phi_i, z[k]), t.slice(b.mu_b, i, i + 1));
    Var sig_i = t.softplus(t.add(t.dot(b.sig_w[i], z[k]), t.slice(b.sig_b, i, i + 1)));
    mu_parts.push_back(mu_i);
    sig_parts.push_back(sig_i);
  }
  return {t.concat(mu_parts), t.concat(sig_parts)};
}

Var ConditionalModel::loglik(Tape& t, std::span<const double> y_t,
                             const EmissionVars& e, std::span<const int> dims) const {
  if (dims.empty()) throw ContractViolation("loglik: empty dimension subset");
  std::vector<double> y_sel(dims.size());
  for (std::size_t k = 0; k < dims.size(); ++k) y_sel[k] = y_t[dims[k]];
  Var yv = t.constant_vector(y_sel, "y_t");
  return t.sum(t.normal_logpdf(yv, e.mu, e.sigma));
}

// ---- value path -------------------------------------------------------------

namespace {

void affine_values(const Tensor& w, const Tensor& b, std::span<const double> x,
                   std::vector<double>& out) {
  int rows = static_cast<int>(w.shape[0]);
  int cols = static_cast<int>(w.shape[1]);
  out.assign(rows, 0.0);
  for (int i = 0; i < rows; ++i) {
    double s = b.data[i];
    for (int j = 0; j < cols; ++j) s += w.data[i * cols + j] * x[j];
    out[i] = s;
  }
}

double stable_softplus(double x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

}  // namespace

std::vector<double> ConditionalModel::encode_values(const Window& w) const {
  const auto& e = cfg_.encoder;
  if (w.window_len != e.window || w.dim != e.target_dim || w.cov_dim != e.covariate_dim)
    throw ContractViolation("encode_values: window does not match encoder config");

  switch (e.variant) {
    case EncoderVariant::kPointwise: {
      std::vector<double> in(w.y.end() - e.target_dim, w.y.end());
      if (e.covariate_dim > 0)
        in.insert(in.end(), w.x.end() - e.covariate_dim, w.x.end());
      std::vector<double> h;
      affine_values(params_.value(enc_w_[0]), params_.value(enc_b_[0]), in, h);
      for (auto& v : h) v = std::tanh(v);
      return h;
    }
    case EncoderVariant::kMlp: {
      std::vector<double> in(w.y.begin(), w.y.end());
      if (e.covariate_dim > 0) in.insert(in.end(), w.x.begin(), w.x.end());
      std::vector<double> h = std::move(in), tmp;
      for (std::size_t l = 0; l < enc_w_.size(); ++l) {
        affine_values(params_.value(enc_w_[l]), params_.value(enc_b_[l]), h, tmp);
        for (auto& v : tmp) v = std::tanh(v);
        h = tmp;
      }
      return h;
    }
    case EncoderVariant::kRecurrent: {
      int H = e.hidden;
      int steps = e.window + (e.covariate_dim > 0 ? 1 : 0);
      int L = static_cast<int>(enc_w_.size());
      std::vector<std::vector<double>> hs(L, std::vector<double>(H, 0.0));
      std::vector<std::vector<double>> cs(L, std::vector<double>(H, 0.0));
      std::vector<double> in, cat, gates;
      for (int j = 0; j < steps; ++j) {
        in.clear();
        if (j < e.window) {
          auto yrow = w.y.subspan(static_cast<std::size_t>(j) * e.target_dim, e.target_dim);
          in.assign(yrow.begin(), yrow.end());
        } else {
          in.assign(e.target_dim, 0.0);
        }
        if (e.covariate_dim > 0) {
          auto xrow = w.x.subspan(static_cast<std::size_t>(j) * e.covariate_dim, e.covariate_dim);
          in.insert(in.end(), xrow.begin(), xrow.end());
        }
        for (int l = 0; l < L; ++l) {
          cat = in;
          cat.insert(cat.end(), hs[l].begin(), hs[l].end());
          affine_values(params_.value(enc_w_[l]), params_.value(enc_b_[l]), cat, gates);
          for (int k = 0; k < H; ++k) {
            double ig = 1.0 / (1.0 + std::exp(-gates[k]));
            double fg = 1.0 / (1.0 + std::exp(-gates[H + k]));
            double gg = std::tanh(gates[2 * H + k]);
            double og = 1.0 / (1.0 + std::exp(-gates[3 * H + k]));
            cs[l][k] = fg * cs[l][k] + ig * gg;
            hs[l][k] = og * std::tanh(cs[l][k]);
          }
          in = hs[l];
        }
      }
      return hs.back();
    }
  }
  throw ContractViolation("encode_values: unreachable");
}

std::vector<double> ConditionalModel::project_values(std::span<const double> h,
                                                     int dim) const {
  std::vector<double> z;
  affine_values(params_.value(proj_w_[dim]), params_.value(proj_b_[dim]), h, z);
  for (auto& v : z) v = std::tanh(v);
  return z;
}

double ConditionalModel::sigma_value(std::span<const double> z, int dim) const {
  const Tensor& w = params_.value(sig_w_[dim]);
  double s = params_.value(sig_b_).data[dim];
  for (std::size_t j = 0; j < z.size(); ++j) s += w.data[j] * z[j];
  return stable_softplus(s);
}

double ConditionalModel::mu_value(std::span<const double> z,
                                  std::span<const double> phi_row, int dim) const {
  double s = params_.value(mu_b_).data[dim];
  for (std::size_t j = 0; j < z.size(); ++j) s += phi_row[j] * z[j];
  return s;
}

double ConditionalModel::b_mu(int dim) const { return params_.value(mu_b_).data[dim]; }

std::vector<int> ConditionalModel::all_dims() const {
  std::vector<int> d(cfg_.encoder.target_dim);
  for (int i = 0; i < cfg_.encoder.target_dim; ++i) d[i] = i;
  return d;
}

}  // namespace dynaconf

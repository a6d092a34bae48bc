#pragma once

#include <span>
#include <string>
#include <vector>

#include "dynaconf/param_store.hpp"
#include "dynaconf/rng.hpp"
#include "dynaconf/series.hpp"
#include "dynaconf/tape.hpp"

namespace dynaconf {

enum class EncoderVariant { kPointwise, kMlp, kRecurrent };

EncoderVariant encoder_variant_from_string(const std::string& s);
std::string to_string(EncoderVariant v);

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::kPointwise;
  int window = 1;        // B
  int target_dim = 1;    // P
  int covariate_dim = 0; // Q
  int hidden = 8;        // D
  int mlp_layers = 2;
  int lstm_layers = 2;
};

struct ConditionalConfig {
  EncoderConfig encoder;
  int latent = 4;  // E, must stay below the encoder width
};

/// Mean/scale of the diagonal Gaussian emission for the selected dims.
struct EmissionVars {
  Var mu;
  Var sigma;
};

/// Parameter leaves bound to one tape, reusable across time steps.
struct CondBindings {
  std::vector<Var> enc_w, enc_b;
  std::vector<Var> proj_w, proj_b;  // per output dimension
  std::vector<Var> sig_w;           // per output dimension
  Var sig_b, mu_b;
};

/// The time-invariant conditional distribution model: encoder g, per-dim
/// latent projections z_{t,i}, and Gaussian emission heads whose mean
/// weights arrive from outside as the control variable phi.
class ConditionalModel {
 public:
  ConditionalModel(const ConditionalConfig& cfg, Rng& init_rng);

  const ConditionalConfig& config() const { return cfg_; }
  int target_dim() const { return cfg_.encoder.target_dim; }
  int latent_dim() const { return cfg_.latent; }
  int control_dim() const { return cfg_.encoder.target_dim * cfg_.latent; }  // F
  int window_len() const { return cfg_.encoder.window; }

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  /// Store indices belonging to the encoder (for freezing).
  const std::vector<int>& encoder_param_indices() const { return encoder_params_; }

  // ---- tape path ----------------------------------------------------------

  CondBindings bind(Tape& t) const;
  /// h_t from the window; deterministic, freshly initialized per call.
  Var encode(Tape& t, const CondBindings& b, const Window& w) const;
  /// z_{t,i} = tanh(W_z[i] h + b_z[i]) for each selected dim.
  std::vector<Var> project_latents(Tape& t, const CondBindings& b, Var h,
                                   std::span<const int> dims) const;
  /// mu_i = phi_i . z_i + b_mu_i ; sigma_i = softplus(w_sigma_i . z_i + b_sigma_i).
  /// phi is the full F-vector control variable.
  EmissionVars emit(Tape& t, const CondBindings& b, const std::vector<Var>& z,
                    Var phi, std::span<const int> dims) const;
  /// Sum of Gaussian log-densities of y_t over the selected dims.
  Var loglik(Tape& t, std::span<const double> y_t, const EmissionVars& e,
             std::span<const int> dims) const;

  // ---- value path (no gradients; used by the particle filter) -------------

  std::vector<double> encode_values(const Window& w) const;
  std::vector<double> project_values(std::span<const double> h, int dim) const;
  double sigma_value(std::span<const double> z, int dim) const;
  double mu_value(std::span<const double> z, std::span<const double> phi_row,
                  int dim) const;
  double b_mu(int dim) const;

  std::vector<int> all_dims() const;

 private:
  void init_pointwise(Rng& rng);
  void init_mlp(Rng& rng);
  void init_lstm(Rng& rng);

  ConditionalConfig cfg_;
  ParameterStore params_;
  std::vector<int> encoder_params_;
  // store indices
  std::vector<int> enc_w_, enc_b_;
  std::vector<int> proj_w_, proj_b_, sig_w_;
  int sig_b_ = -1, mu_b_ = -1;
};

}  // namespace dynaconf

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dynaconf/param_store.hpp"
#include "dynaconf/rng.hpp"
#include "dynaconf/tape.hpp"
#include "dynaconf/tensor.hpp"

namespace dynaconf {

struct DynamicsConfig {
  int groups = 1;      // P output-dimension groups
  int group_dim = 4;   // E components per group
  bool per_group = false;  // separate (lambda, Sigma) per group instead of shared
  double init_lambda = 0.95;
  double init_var0 = 1.0;
  double init_vard = 0.01;
};

/// Latent trajectory chi over a contiguous index range; restart flags are
/// recorded only when the path was sampled from the prior.
struct LatentPath {
  int t_from = 0;
  std::vector<std::vector<double>> chi;           // per step, F values
  std::vector<std::vector<std::uint8_t>> restart; // per step, per group; empty rows at init
};

/// Generative process of the control variable: phi_t = chi_t + b_phi, with
/// chi a Bernoulli-restart random walk run independently per group.
class DynamicsModel {
 public:
  DynamicsModel(const DynamicsConfig& cfg);

  const DynamicsConfig& config() const { return cfg_; }
  int control_dim() const { return cfg_.groups * cfg_.group_dim; }  // F
  int groups() const { return cfg_.groups; }
  int group_dim() const { return cfg_.group_dim; }

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  int b_phi_index() const { return b_phi_; }

  // ---- value access --------------------------------------------------------

  double lambda(int group = 0) const;
  void set_lambda(double lam, int group = -1);  // -1: all groups
  /// Per-component variances expanded to F entries.
  std::vector<double> var0() const;
  std::vector<double> vard() const;
  void set_var0(double v);
  void set_vard(double v);
  std::span<const double> b_phi() const { return params_.value(b_phi_).data; }
  void set_b_phi(std::span<const double> v);

  /// phi = chi + b_phi, reshaped to groups x group_dim (row i modulates
  /// output dimension i).
  Tensor compose_phi(std::span<const double> chi) const;

  /// Ancestral sampling of chi over [t_from, t_to]. Without an init state
  /// the first step draws from N(0, Sigma_0).
  LatentPath sample_prior_path(int t_from, int t_to, Rng& rng,
                               const std::optional<std::vector<double>>& init = {}) const;

  // ---- tape path -------------------------------------------------------------

  struct Bindings {
    Var lambda_logit, log_var0, log_vard, b_phi;
  };
  Bindings bind(Tape& t) const;

  Var compose_phi(Tape& t, const Bindings& b, Var chi) const;
  /// F-vector of prior standard deviations sqrt(Sigma_0).
  Var sigma0_vec(Tape& t, const Bindings& b) const;
  /// log p(chi_t | chi_prev) with the restart indicator marginalized:
  /// per group log[ lambda N(chi_t; chi_prev, Sigma_d) + (1-lambda) N(chi_t; 0, Sigma_0) ],
  /// summed over the selected groups.
  Var transition_logdensity(Tape& t, const Bindings& b, Var chi_t, Var chi_prev,
                            std::span<const int> groups) const;
  Var transition_logdensity(Tape& t, const Bindings& b, Var chi_t, Var chi_prev) const;
  /// log N(chi; 0, Sigma_0) summed over all components.
  Var initial_logdensity(Tape& t, const Bindings& b, Var chi) const;

 private:
  /// Expands a shared (E) or per-group (F) parameter to a full F-vector node.
  Var expand_to_full(Tape& t, Var v) const;
  Var group_scalar(Tape& t, Var v, int group) const;

  DynamicsConfig cfg_;
  ParameterStore params_;
  int lambda_logit_ = -1, log_var0_ = -1, log_vard_ = -1, b_phi_ = -1;
};

/// Logit clamped so downstream log-densities stay finite.
double clamped_logit(double p);

}  // namespace dynaconf

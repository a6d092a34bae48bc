#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dynaconf/dynamics.hpp"
#include "dynaconf/param_store.hpp"
#include "dynaconf/rng.hpp"
#include "dynaconf/tape.hpp"

namespace dynaconf {

/// One reparameterized draw of the latent trajectory on a tape.
/// chi[0] is the unparameterized anchor state (q equals the prior there,
/// so its density cancels and is not part of logq); chi[1..horizon] carry
/// the modeled steps.
struct PathSample {
  std::vector<Var> chi;
  Var logq;                     // scalar: log q(chi_1..chi_H | anchor)
  std::vector<Var> logq_steps;  // per-step factors when the posterior factorizes
};

struct PosteriorConfig {
  std::string kind = "ar";  // "ar" | "iaf"
  int iaf_layers = 3;
  int iaf_hidden = 128;  // paper-scale default is 1024
  int iaf_embed = 32;    // paper-scale default is 512
};

/// Variational posterior over the latent trajectory; both families plug
/// into the same ELBO construction.
class Posterior {
 public:
  virtual ~Posterior() = default;
  virtual int horizon() const = 0;
  virtual int control_dim() const = 0;
  /// Draws a reparameterized path. The prior argument supplies the anchor
  /// distribution N(0, Sigma_0) (normally the same model whose transitions
  /// enter the ELBO).
  virtual PathSample sample_path(Tape& t, const DynamicsModel& anchor_prior,
                                 Rng& rng) const = 0;
  virtual bool has_stepwise_logq() const = 0;
  virtual ParameterStore& params() = 0;
  virtual const ParameterStore& params() const = 0;
  virtual const char* kind() const = 0;
};

/// Autoregressive gated-Gaussian posterior:
/// q(chi_t | chi_{t-1}) = N(a_t o chi_{t-1} + (1-a_t) o m_t, diag(s_t^2)).
class ARPosterior final : public Posterior {
 public:
  ARPosterior(int control_dim, int horizon);

  int horizon() const override { return horizon_; }
  int control_dim() const override { return control_dim_; }
  PathSample sample_path(Tape& t, const DynamicsModel& anchor_prior,
                         Rng& rng) const override;
  bool has_stepwise_logq() const override { return true; }
  ParameterStore& params() override { return params_; }
  const ParameterStore& params() const override { return params_; }
  const char* kind() const override { return "ar"; }

 private:
  int control_dim_, horizon_;
  ParameterStore params_;
  int a_raw_, m_, s_raw_;
};

/// Inverse autoregressive flow posterior over the time axis, one flow per
/// latent component with shared weights and a per-component embedding.
/// Masked layers enforce a strict autoregressive order over t; each layer
/// applies z_l = mu_l + sigma_l o z_{l-1}.
class IAFPosterior final : public Posterior {
 public:
  IAFPosterior(int control_dim, int horizon, const PosteriorConfig& cfg,
               Rng& init_rng);

  int horizon() const override { return horizon_; }
  int control_dim() const override { return control_dim_; }
  PathSample sample_path(Tape& t, const DynamicsModel& anchor_prior,
                         Rng& rng) const override;
  bool has_stepwise_logq() const override { return false; }
  ParameterStore& params() override { return params_; }
  const ParameterStore& params() const override { return params_; }
  const char* kind() const override { return "iaf"; }

  int layers() const { return cfg_.iaf_layers; }

  /// The flow for one component: base draw z0 (length horizon) to the
  /// component's time path, plus the accumulated log|Jacobian| =
  /// sum_l sum_t log sigma_{l,t}. Binds its own parameter leaves.
  std::pair<Var, Var> transform(Tape& t, Var z0, int component) const;

 private:
  struct FlowBindings {
    std::vector<std::array<Var, 6>> layers;
    Var embed;
  };
  FlowBindings bind_flow(Tape& t) const;
  std::pair<Var, Var> transform_bound(Tape& t, const FlowBindings& fb, Var z0,
                                      int component) const;

  int control_dim_, horizon_;
  PosteriorConfig cfg_;
  ParameterStore params_;
  // per layer: w1, b1, w2, b2, w3, b3
  std::vector<std::array<int, 6>> layer_params_;
  int embed_ = -1;
  std::shared_ptr<const std::vector<double>> mask1_, mask2_, mask3_;
};

std::unique_ptr<Posterior> make_posterior(const PosteriorConfig& cfg, int control_dim,
                                          int horizon, Rng& init_rng);

}  // namespace dynaconf

#pragma once

#include <vector>

#include "dynaconf/checkpoint.hpp"
#include "dynaconf/elbo.hpp"
#include "dynaconf/series.hpp"

namespace dynaconf {

struct TrainConfig {
  int max_epochs = 200;
  int updates_per_epoch = 50;
  int batch_len = 64;      // windows per conditional-model batch
  int dim_subsample = 0;   // observation dims per batch; 0 keeps all
  int n_mc = 1;
  double lr = 1e-3;
  bool onecycle = false;
  int patience = 20;
  double min_improve = 1e-4;
  std::uint64_t seed = 1;
  bool freeze_encoder = false;
  double clip_norm = 10.0;
};

/// Uniform sample of k observation dimensions without replacement.
std::vector<int> subsample_dims(int P, int k, Rng& rng);

/// Analytic one-step Gaussian CRPS of the static model over [t_begin, t_end),
/// in the series' own scale. Used for validation-based early stopping.
double static_one_step_crps(const Series& data, int t_begin, int t_end,
                            const ConditionalModel& cond, const DynamicsModel& dyn);

/// Pretraining of the static model (chi pinned at zero): maximizes the
/// conditional log-likelihood with phi = b_phi over the training split,
/// early-stopping on validation CRPS when a validation region exists.
Checkpoint train_staticonf(const Series& data, const SplitSpec& split,
                           const ModelSpec& spec, const TrainConfig& cfg,
                           const Checkpoint* resume = nullptr);

/// Alternating optimization of the full model starting from a static-model
/// checkpoint: phase A refits the conditional model on sampled window
/// batches conditioned on fresh posterior draws; phase B updates prior and
/// posterior on full-series ELBO passes. Runs until the training ELBO stops
/// improving.
Checkpoint train_dynaconf(const Series& data, const SplitSpec& split,
                          const TrainConfig& cfg, const Checkpoint& init,
                          const Checkpoint* resume = nullptr);

// Phase building blocks (also used directly by tests); both return the
// epoch's mean loss (negative objective).
double dynaconf_phase_a_epoch(const Series& data, int train_end,
                              ConditionalModel& cond, const DynamicsModel& dyn,
                              const Posterior& post, Adam& adam_cond,
                              const TrainConfig& cfg, double lr, Rng& rng);
double dynaconf_phase_b_epoch(const Series& data, int train_end,
                              const ConditionalModel& cond, DynamicsModel& dyn,
                              Posterior& post, Adam& adam_dyn, Adam& adam_post,
                              const TrainConfig& cfg, double lr, Rng& rng);

}  // namespace dynaconf

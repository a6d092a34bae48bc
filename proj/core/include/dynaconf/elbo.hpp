#pragma once

#include <vector>

#include "dynaconf/conditional.hpp"
#include "dynaconf/dynamics.hpp"
#include "dynaconf/posterior.hpp"
#include "dynaconf/series.hpp"

namespace dynaconf {

struct ElboOptions {
  /// Series indices in [B, t_end) whose likelihood terms enter the batch;
  /// empty means all of them. Batched sums are rescaled so the estimator
  /// targets the full objective.
  std::vector<int> batch_times;
  int n_mc = 1;
  /// Observation dims for the likelihood term; empty means all. The
  /// transition/entropy term always runs over all groups.
  std::vector<int> dims;
  /// Phase-A mode: only the (rescaled) likelihood term, no KL. Gradients
  /// w.r.t. the conditional model are identical to the full ELBO's.
  bool likelihood_only = false;
  /// Override for the anchor-state distribution q(chi_anchor) = p(chi_anchor).
  /// Normally null (the dynamics model itself); the seam exists so the
  /// cancellation of the anchor densities is observable.
  const DynamicsModel* anchor_prior = nullptr;
};

/// Builds the Monte Carlo ELBO over the training region [0, t_end) on the
/// tape and returns the scalar node. The posterior horizon must equal
/// t_end - B.
Var build_elbo(Tape& tape, const Series& data, int t_end,
               const ConditionalModel& cond, const DynamicsModel& dyn,
               const Posterior& posterior, Rng& rng, const ElboOptions& opts);

}  // namespace dynaconf

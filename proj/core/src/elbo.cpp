#include "dynaconf/elbo.hpp"

#include <algorithm>

#include "dynaconf/errors.hpp"

namespace dynaconf {

Var build_elbo(Tape& tape, const Series& data, int t_end,
               const ConditionalModel& cond, const DynamicsModel& dyn,
               const Posterior& posterior, Rng& rng, const ElboOptions& opts) {
  const int B = cond.window_len();
  const int Tp = t_end - B;
  if (Tp < 1) throw ContractViolation("elbo: training region shorter than window");
  if (t_end > data.length) throw ContractViolation("elbo: t_end beyond series");
  if (posterior.horizon() != Tp)
    throw ContractViolation("elbo: posterior horizon does not match region");
  if (posterior.control_dim() != dyn.control_dim() ||
      dyn.control_dim() != cond.control_dim())
    throw ContractViolation("elbo: control dimension mismatch");
  if (opts.n_mc < 1) throw ContractViolation("elbo: n_mc must be at least 1");

  std::vector<int> batch = opts.batch_times;
  if (batch.empty()) {
    batch.resize(Tp);
    for (int k = 0; k < Tp; ++k) batch[k] = B + k;
  } else {
    for (int t : batch)
      if (t < B || t >= t_end)
        throw ContractViolation("elbo: batch time outside [B, t_end)");
  }
  std::vector<int> dims = opts.dims;
  if (dims.empty()) dims = cond.all_dims();

  const int P = cond.target_dim();
  const double lik_scale = (static_cast<double>(Tp) / batch.size()) *
                           (static_cast<double>(P) / dims.size());
  const bool full_batch = static_cast<int>(batch.size()) == Tp;

  auto cb = cond.bind(tape);
  auto db = dyn.bind(tape);

  // windows are data-only, shared across Monte Carlo draws
  struct PerTime {
    int k;  // path index: chi[k] modulates y at this time
    std::vector<Var> z;
  };
  std::vector<PerTime> pre(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    int t = batch[i];
    pre[i].k = t - B + 1;
    Var h = cond.encode(tape, cb, make_window(data, t, B));
    pre[i].z = cond.project_latents(tape, cb, h, dims);
  }

  const DynamicsModel& anchor = opts.anchor_prior ? *opts.anchor_prior : dyn;
  Var total{-1};
  for (int mc = 0; mc < opts.n_mc; ++mc) {
    PathSample path = posterior.sample_path(tape, anchor, rng);

    Var lik{-1};
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Var phi = dyn.compose_phi(tape, db, path.chi[pre[i].k]);
      EmissionVars e = cond.emit(tape, cb, pre[i].z, phi, dims);
      Var lp = cond.loglik(tape, data.row(batch[i]), e, dims);
      lik = i == 0 ? lp : tape.add(lik, lp);
    }
    Var draw = tape.scale(lik, lik_scale);

    if (!opts.likelihood_only) {
      Var kl{-1};
      if (full_batch || !posterior.has_stepwise_logq()) {
        // full transition sum minus total entropy; with a flow posterior a
        // strict-subset batch still pays for the whole KL term (it does
        // not factorize over time there)
        for (int k = 1; k <= Tp; ++k) {
          Var tr = dyn.transition_logdensity(tape, db, path.chi[k], path.chi[k - 1]);
          kl = k == 1 ? tr : tape.add(kl, tr);
        }
        kl = tape.sub(kl, path.logq);
      } else {
        for (std::size_t i = 0; i < batch.size(); ++i) {
          int k = pre[i].k;
          Var tr = dyn.transition_logdensity(tape, db, path.chi[k], path.chi[k - 1]);
          Var term = tape.sub(tr, path.logq_steps[k - 1]);
          kl = i == 0 ? term : tape.add(kl, term);
        }
        kl = tape.scale(kl, static_cast<double>(Tp) / batch.size());
      }
      draw = tape.add(draw, kl);
    }
    total = mc == 0 ? draw : tape.add(total, draw);
  }
  return tape.scale(total, 1.0 / opts.n_mc);
}

}  // namespace dynaconf

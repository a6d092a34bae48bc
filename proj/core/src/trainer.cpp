#include "dynaconf/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "dynaconf/errors.hpp"

namespace dynaconf {

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot_store(const ParameterStore& ps) {
  Snapshot s;
  s.reserve(ps.count());
  for (int i = 0; i < ps.count(); ++i) s.push_back(ps.value(i).data);
  return s;
}

void restore_store(ParameterStore& ps, const Snapshot& s) {
  for (int i = 0; i < ps.count(); ++i) ps.value(i).data = s[i];
}

double gaussian_crps_closed_form(double sigma, double resid) {
  double z = resid / sigma;
  double Phi = 0.5 * std::erfc(-z / std::sqrt(2.0));
  double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return sigma * (z * (2.0 * Phi - 1.0) + 2.0 * phi - 1.0 / std::sqrt(M_PI));
}

std::vector<int> maybe_subsample(int P, int k, Rng& rng) {
  if (k <= 0 || k >= P) {
    std::vector<int> all(P);
    for (int i = 0; i < P; ++i) all[i] = i;
    return all;
  }
  return subsample_dims(P, k, rng);
}

/// One SGD update of the static model on a random window batch.
/// Returns the mean negative log-likelihood per (time, dim).
double staticonf_update(const Series& data, int train_end, ConditionalModel& cond,
                        DynamicsModel& dyn, Adam& adam_cond, Adam& adam_dyn,
                        const TrainConfig& cfg, double lr, Rng& rng) {
  const int B = cond.window_len(), P = cond.target_dim();
  Tape tape;
  auto cb = cond.bind(tape);
  auto db = dyn.bind(tape);
  std::vector<int> dims = maybe_subsample(P, cfg.dim_subsample, rng);
  Var total{-1};
  for (int j = 0; j < cfg.batch_len; ++j) {
    int t = B + rng.uniform_int(train_end - B);
    Var h = cond.encode(tape, cb, make_window(data, t, B));
    auto z = cond.project_latents(tape, cb, h, dims);
    auto e = cond.emit(tape, cb, z, db.b_phi, dims);
    Var lp = cond.loglik(tape, data.row(t), e, dims);
    total = j == 0 ? lp : tape.add(total, lp);
  }
  double scale = -1.0 / (static_cast<double>(cfg.batch_len) * dims.size());
  Var loss = tape.scale(total, scale);
  auto grads = tape.backward(loss);
  grads.clip_global_norm(cfg.clip_norm);
  adam_cond.step(cond.params(), grads, lr);
  adam_dyn.step(dyn.params(), grads, lr);
  return tape.value_scalar(loss);
}

std::shared_ptr<ConditionalModel> clone_conditional(const ConditionalConfig& cfg,
                                                    const ConditionalModel& src) {
  Rng scratch(0);
  auto out = std::make_shared<ConditionalModel>(cfg, scratch);
  for (int i = 0; i < src.params().count(); ++i)
    out->params().value(i).data = src.params().value(i).data;
  return out;
}

std::shared_ptr<DynamicsModel> clone_dynamics(const DynamicsConfig& cfg,
                                              const DynamicsModel& src) {
  auto out = std::make_shared<DynamicsModel>(cfg);
  for (int i = 0; i < src.params().count(); ++i)
    out->params().value(i).data = src.params().value(i).data;
  return out;
}

}  // namespace

std::vector<int> subsample_dims(int P, int k, Rng& rng) {
  if (k < 1 || k > P) throw ContractViolation("subsample_dims: k outside [1, P]");
  std::vector<int> pool(P);
  for (int i = 0; i < P; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    int j = i + rng.uniform_int(P - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

double static_one_step_crps(const Series& data, int t_begin, int t_end,
                            const ConditionalModel& cond, const DynamicsModel& dyn) {
  const int B = cond.window_len(), P = cond.target_dim(), E = cond.latent_dim();
  auto b_phi = dyn.b_phi();
  double total = 0.0;
  int n = 0;
  for (int t = std::max(t_begin, B); t < t_end; ++t) {
    auto h = cond.encode_values(make_window(data, t, B));
    for (int i = 0; i < P; ++i) {
      auto z = cond.project_values(h, i);
      std::span<const double> row(b_phi.data() + i * E, static_cast<std::size_t>(E));
      double mu = cond.mu_value(z, row, i);
      double sg = cond.sigma_value(z, i);
      total += gaussian_crps_closed_form(sg, data.at(t, i) - mu);
      ++n;
    }
  }
  if (n == 0) throw ContractViolation("static_one_step_crps: empty evaluation region");
  return total / n;
}

Checkpoint train_staticonf(const Series& data, const SplitSpec& split,
                           const ModelSpec& spec, const TrainConfig& cfg,
                           const Checkpoint* resume) {
  if (split.train_end <= spec.cond.encoder.window)
    throw ContractViolation("train_staticonf: training region shorter than window");

  Checkpoint ck;
  Rng rng(cfg.seed);
  int start_epoch = 0;
  if (resume) {
    ck = *resume;
    rng = Rng::deserialize(resume->rng_state);
    start_epoch = resume->epoch;
  } else {
    ck.model_kind = "staticonf";
    ck.spec = spec;
    ck.seed = cfg.seed;
    ck.train_end = split.train_end;
    Rng init_rng = rng.child(1);
    ck.cond = std::make_shared<ConditionalModel>(spec.cond, init_rng);
    ck.dyn = std::make_shared<DynamicsModel>(spec.dyn);
    ck.adam_cond = std::make_shared<Adam>(ck.cond->params());
    ck.adam_dyn = std::make_shared<Adam>(ck.dyn->params());
  }

  const bool has_val = split.val_end > split.train_end;
  OneCycleSchedule sched{std::max(1, cfg.max_epochs * cfg.updates_per_epoch), cfg.lr};

  double best_score = INFINITY;
  Snapshot best_cond = snapshot_store(ck.cond->params());
  Snapshot best_dyn = snapshot_store(ck.dyn->params());
  int since_best = 0;
  bool early_stopped = false;

  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    Snapshot safe_cond = snapshot_store(ck.cond->params());
    Snapshot safe_dyn = snapshot_store(ck.dyn->params());
    double loss_sum = 0.0;
    try {
      for (int u = 0; u < cfg.updates_per_epoch; ++u) {
        double lr = cfg.onecycle ? sched.lr(epoch * cfg.updates_per_epoch + u) : cfg.lr;
        loss_sum += staticonf_update(data, split.train_end, *ck.cond, *ck.dyn,
                                     *ck.adam_cond, *ck.adam_dyn, cfg, lr, rng);
      }
    } catch (const NumericalFailure&) {
      restore_store(ck.cond->params(), safe_cond);
      restore_store(ck.dyn->params(), safe_dyn);
      ck.diverged = true;
      ck.epoch = epoch;
      break;
    }
    ck.epoch_losses.push_back(loss_sum / cfg.updates_per_epoch);
    ck.epoch = epoch + 1;

    double score = has_val
                       ? static_one_step_crps(data, split.train_end, split.val_end,
                                              *ck.cond, *ck.dyn)
                       : ck.epoch_losses.back();
    if (score < best_score - cfg.min_improve) {
      best_score = score;
      best_cond = snapshot_store(ck.cond->params());
      best_dyn = snapshot_store(ck.dyn->params());
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      early_stopped = true;
      break;
    }
  }
  // budget exits keep the live state (resumable); convergence exits take
  // the best validation model
  if (early_stopped || ck.diverged) {
    restore_store(ck.cond->params(), best_cond);
    restore_store(ck.dyn->params(), best_dyn);
  }
  ck.rng_state = rng.serialize();
  return ck;
}

double dynaconf_phase_a_epoch(const Series& data, int train_end,
                              ConditionalModel& cond, const DynamicsModel& dyn,
                              const Posterior& post, Adam& adam_cond,
                              const TrainConfig& cfg, double lr, Rng& rng) {
  const int B = cond.window_len(), P = cond.target_dim();
  const int Tp = train_end - B;
  double loss_sum = 0.0;
  for (int u = 0; u < cfg.updates_per_epoch; ++u) {
    Tape tape;
    ElboOptions opts;
    opts.likelihood_only = true;
    opts.n_mc = 1;
    opts.dims = maybe_subsample(P, cfg.dim_subsample, rng);
    opts.batch_times.reserve(cfg.batch_len);
    for (int j = 0; j < cfg.batch_len; ++j)
      opts.batch_times.push_back(B + rng.uniform_int(Tp));
    Var e = build_elbo(tape, data, train_end, cond, dyn, post, rng, opts);
    Var loss = tape.scale(e, -1.0 / (static_cast<double>(Tp) * P));
    auto grads = tape.backward(loss);
    grads.clip_global_norm(cfg.clip_norm);
    adam_cond.step(cond.params(), grads, lr);
    loss_sum += tape.value_scalar(loss);
  }
  return loss_sum / cfg.updates_per_epoch;
}

double dynaconf_phase_b_epoch(const Series& data, int train_end,
                              const ConditionalModel& cond, DynamicsModel& dyn,
                              Posterior& post, Adam& adam_dyn, Adam& adam_post,
                              const TrainConfig& cfg, double lr, Rng& rng) {
  const int B = cond.window_len(), P = cond.target_dim();
  const int Tp = train_end - B;
  double loss_sum = 0.0;
  for (int u = 0; u < cfg.updates_per_epoch; ++u) {
    Tape tape;
    ElboOptions opts;
    opts.n_mc = cfg.n_mc;
    Var e = build_elbo(tape, data, train_end, cond, dyn, post, rng, opts);
    Var loss = tape.scale(e, -1.0 / (static_cast<double>(Tp) * P));
    auto grads = tape.backward(loss);
    grads.clip_global_norm(cfg.clip_norm);
    adam_dyn.step(dyn.params(), grads, lr);
    adam_post.step(post.params(), grads, lr);
    loss_sum += tape.value_scalar(loss);
  }
  return loss_sum / cfg.updates_per_epoch;
}

Checkpoint train_dynaconf(const Series& data, const SplitSpec& split,
                          const TrainConfig& cfg, const Checkpoint& init,
                          const Checkpoint* resume) {
  if (!init.cond || !init.dyn)
    throw ContractViolation("train_dynaconf: init checkpoint is empty");
  const int B = init.spec.cond.encoder.window;
  const int Tp = split.train_end - B;
  if (Tp < 1) throw ContractViolation("train_dynaconf: training region shorter than window");

  Checkpoint ck;
  Rng rng(cfg.seed);
  int start_epoch = 0;
  if (resume) {
    ck = *resume;
    rng = Rng::deserialize(resume->rng_state);
    start_epoch = resume->epoch;
  } else {
    ck.model_kind = "dynaconf";
    ck.spec = init.spec;
    ck.seed = cfg.seed;
    ck.train_end = split.train_end;
    ck.cond = clone_conditional(init.spec.cond, *init.cond);
    ck.dyn = clone_dynamics(init.spec.dyn, *init.dyn);
    Rng init_rng = rng.child(1);
    ck.posterior = make_posterior(init.spec.posterior, ck.dyn->control_dim(), Tp, init_rng);
    ck.adam_cond = std::make_shared<Adam>(ck.cond->params());
    ck.adam_dyn = std::make_shared<Adam>(ck.dyn->params());
    ck.adam_post = std::make_shared<Adam>(ck.posterior->params());
  }
  if (cfg.freeze_encoder)
    for (int idx : ck.cond->encoder_param_indices())
      ck.cond->params().set_trainable(idx, false);

  double best_loss = INFINITY;
  Snapshot best_cond = snapshot_store(ck.cond->params());
  Snapshot best_dyn = snapshot_store(ck.dyn->params());
  Snapshot best_post = snapshot_store(ck.posterior->params());
  int since_best = 0;
  bool early_stopped = false;
  OneCycleSchedule sched{std::max(1, cfg.max_epochs), cfg.lr};

  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    Snapshot safe_cond = snapshot_store(ck.cond->params());
    Snapshot safe_dyn = snapshot_store(ck.dyn->params());
    Snapshot safe_post = snapshot_store(ck.posterior->params());
    double phase_b_loss = 0.0;
    try {
      double lr = cfg.onecycle ? sched.lr(epoch) : cfg.lr;
      dynaconf_phase_a_epoch(data, split.train_end, *ck.cond, *ck.dyn, *ck.posterior,
                             *ck.adam_cond, cfg, lr, rng);
      phase_b_loss = dynaconf_phase_b_epoch(data, split.train_end, *ck.cond, *ck.dyn,
                                            *ck.posterior, *ck.adam_dyn, *ck.adam_post,
                                            cfg, lr, rng);
    } catch (const NumericalFailure&) {
      restore_store(ck.cond->params(), safe_cond);
      restore_store(ck.dyn->params(), safe_dyn);
      restore_store(ck.posterior->params(), safe_post);
      ck.diverged = true;
      ck.epoch = epoch;
      break;
    }
    ck.epoch_losses.push_back(phase_b_loss);
    ck.epoch = epoch + 1;

    if (phase_b_loss < best_loss - cfg.min_improve) {
      best_loss = phase_b_loss;
      best_cond = snapshot_store(ck.cond->params());
      best_dyn = snapshot_store(ck.dyn->params());
      best_post = snapshot_store(ck.posterior->params());
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      early_stopped = true;
      break;
    }
  }
  if (early_stopped || ck.diverged) {
    restore_store(ck.cond->params(), best_cond);
    restore_store(ck.dyn->params(), best_dyn);
    restore_store(ck.posterior->params(), best_post);
  }
  ck.rng_state = rng.serialize();
  return ck;
}

}  // namespace dynaconf

#pragma once

#include <span>
#include <vector>

#include "dynaconf/conditional.hpp"
#include "dynaconf/dynamics.hpp"
#include "dynaconf/forecast_result.hpp"
#include "dynaconf/rng.hpp"
#include "dynaconf/series.hpp"

namespace dynaconf {

/// One Rao-Blackwellized particle: discrete restart history represented by
/// the particle itself, continuous state handled in closed form as an
/// independent Gaussian (mean, covariance) per output-dimension group.
struct Particle {
  std::vector<double> mean;          // groups x E
  std::vector<double> cov;           // groups x (E x E), row-major blocks
  double log_weight = 0.0;
  std::vector<std::uint8_t> walked;  // last restart indicator per group (1 = walk)
};

struct ParticleEnsemble {
  int groups = 0;
  int group_dim = 0;
  std::vector<Particle> particles;
  std::vector<double> weights;  // normalized
  double ess = 0.0;
  bool weight_reset_warning = false;

  int size() const { return static_cast<int>(particles.size()); }
};

/// All particles start at the anchor prior N(0, Sigma_0) with uniform weights.
ParticleEnsemble init_ensemble(int n_particles, const DynamicsModel& dyn);

/// One observation update. The window supplies the deterministic design
/// vector z_t and emission scale per dimension; the restart indicator is
/// sampled from its locally optimal proposal, the continuous state gets an
/// exact Kalman update (Joseph form), and the ensemble resamples
/// systematically when ESS drops below half the particle count.
void filter_step(ParticleEnsemble& ens, std::span<const double> y_t,
                 const Window& window, const ConditionalModel& cond,
                 const DynamicsModel& dyn, Rng& rng);

void normalize_weights(ParticleEnsemble& ens);
void systematic_resample(ParticleEnsemble& ens, Rng& rng);

/// Weighted posterior mean of the latent state (length F).
std::vector<double> ensemble_mean(const ParticleEnsemble& ens);
/// One joint draw from the ensemble's Gaussian-mixture posterior.
std::vector<double> sample_state(const ParticleEnsemble& ens, Rng& rng);

/// H-step predictive sampling: draw a particle, draw chi_T from its
/// Gaussian, roll the prior forward (restarts included), and sample
/// observations step by step, feeding each sample back into the window.
ForecastResult forecast(const ParticleEnsemble& ens, const Series& history,
                        int t_start, int H, int n_paths,
                        const ConditionalModel& cond, const DynamicsModel& dyn,
                        Rng& rng);

/// Static-model variant: chi is pinned to zero, phi = b_phi.
ForecastResult forecast_static(const Series& history, int t_start, int H,
                               int n_paths, const ConditionalModel& cond,
                               const DynamicsModel& dyn, Rng& rng);

struct RollingPlan {
  int t_begin = 0;  // first forecast index; filtering warms up over [B, t_begin)
  int horizon = 10;
  int n_windows = 0;
  int n_paths = 100;
  int n_particles = 100;
};

/// Rolling evaluation protocol: forecast H steps, reveal the truth, filter
/// through it, repeat. Online adaptation only; no re-training.
std::vector<ForecastResult> rolling_forecast(const ConditionalModel& cond,
                                             const DynamicsModel& dyn,
                                             bool dynamic, const Series& series,
                                             const RollingPlan& plan, Rng& rng);

/// Per-step filtered posterior snapshots (median and central 90% band per
/// latent component), for latent-trace inspection. Returns rows of
/// (t, component, median, p05, p95) flattened in t-major order.
struct LatentTrace {
  std::vector<int> t;
  std::vector<int> component;
  std::vector<double> median, p05, p95;
};
LatentTrace filter_latent_trace(const ConditionalModel& cond, const DynamicsModel& dyn,
                                const Series& series, int t_end, int n_particles,
                                Rng& rng, int quantile_draws = 256);

}  // namespace dynaconf

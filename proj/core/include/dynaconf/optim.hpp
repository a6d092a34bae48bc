#pragma once

#include <cstdint>
#include <vector>

#include "dynaconf/param_store.hpp"

namespace dynaconf {

/// Adam with bias correction over one ParameterStore. Moments are kept
/// aligned with store indices; parameters marked non-trainable are
/// skipped entirely (their moments stay untouched).
class Adam {
 public:
  explicit Adam(const ParameterStore& store, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  /// One update. Parameters absent from the gradient map are treated as
  /// zero-gradient (moments still decay).
  void step(ParameterStore& store, const GradientMap& grads, double lr);

  std::int64_t step_count() const { return step_; }

  // checkpoint access
  std::vector<Tensor>& moments1() { return m_; }
  std::vector<Tensor>& moments2() { return v_; }
  void set_step_count(std::int64_t t) { step_ = t; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t step_ = 0;
  std::vector<Tensor> m_, v_;
};

/// 1cycle learning-rate schedule: cosine ramp from max_lr/initial_div up
/// to max_lr over the warmup fraction, then cosine anneal down to
/// max_lr/final_div.
struct OneCycleSchedule {
  int total_steps = 1;
  double max_lr = 1e-3;
  double warmup_fraction = 0.3;
  double initial_div = 25.0;
  double final_div = 1e4;

  double lr(int step) const;
};

}  // namespace dynaconf

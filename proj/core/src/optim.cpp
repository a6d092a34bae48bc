#include "dynaconf/optim.hpp"

#include <cmath>

#include "dynaconf/errors.hpp"

namespace dynaconf {

Adam::Adam(const ParameterStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(store.count());
  v_.reserve(store.count());
  for (int i = 0; i < store.count(); ++i) {
    m_.push_back(Tensor::zeros(store.value(i).shape));
    v_.push_back(Tensor::zeros(store.value(i).shape));
  }
}

void Adam::step(ParameterStore& store, const GradientMap& grads, double lr) {
  if (static_cast<int>(m_.size()) != store.count())
    throw ContractViolation("adam: state does not match store");
  ++step_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (int i = 0; i < store.count(); ++i) {
    if (!store.trainable(i)) continue;
    Tensor& p = store.value(i);
    const Tensor* g = grads.find(store.key(i));
    if (g && g->data.size() != p.data.size())
      throw ContractViolation("adam: gradient shape mismatch for " + store.name(i));
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      double gj = g ? g->data[j] : 0.0;
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double OneCycleSchedule::lr(int step) const {
  if (step < 0 || step >= total_steps)
    throw ContractViolation("onecycle_lr: step out of range");
  int warmup = static_cast<int>(std::lround(warmup_fraction * total_steps));
  warmup = std::max(1, std::min(warmup, total_steps - 1));
  double lo = max_lr / initial_div;
  double fin = max_lr / final_div;
  if (step < warmup) {
    // cosine ramp lo -> max, hitting max exactly at the warmup end
    double x = static_cast<double>(step) / warmup;
    return lo + (max_lr - lo) * 0.5 * (1.0 - std::cos(M_PI * x));
  }
  int span = total_steps - 1 - warmup;
  double x = span > 0 ? static_cast<double>(step - warmup) / span : 1.0;
  return fin + (max_lr - fin) * 0.5 * (1.0 + std::cos(M_PI * x));
}

}  // namespace dynaconf

#include "dynaconf/param_store.hpp"

#include <atomic>
#include <cmath>

#include "dynaconf/errors.hpp"

namespace dynaconf {

namespace {
std::atomic<std::uint64_t> g_next_store_uid{1};
}

ParameterStore::ParameterStore() : uid_(g_next_store_uid.fetch_add(1)) {}

int ParameterStore::add(std::string name, Tensor init, bool trainable) {
  if (by_name_.count(name))
    throw ContractViolation("duplicate parameter name: " + name);
  init.requires_grad = true;
  int idx = static_cast<int>(entries_.size());
  by_name_.emplace(name, idx);
  entries_.push_back({std::move(name), std::move(init), trainable});
  return idx;
}

int ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

double GradientMap::global_norm() const {
  double sq = 0.0;
  for (const auto& [key, g] : grads)
    for (double v : g.data) sq += v * v;
  return std::sqrt(sq);
}

double GradientMap::clip_global_norm(double max_norm) {
  double norm = global_norm();
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& [key, g] : grads)
      for (double& v : g.data) v *= s;
  }
  return norm;
}

}  // namespace dynaconf

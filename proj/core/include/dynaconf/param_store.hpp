#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dynaconf/tensor.hpp"

namespace dynaconf {

/// Named, owned parameter tensors for one model component. Each parameter
/// gets a process-unique key so gradients from a tape can be routed back
/// even when several stores contribute leaves to the same graph.
class ParameterStore {
 public:
  ParameterStore();

  int add(std::string name, Tensor init, bool trainable = true);

  int count() const { return static_cast<int>(entries_.size()); }
  Tensor& value(int i) { return entries_[i].value; }
  const Tensor& value(int i) const { return entries_[i].value; }
  const std::string& name(int i) const { return entries_[i].name; }
  bool trainable(int i) const { return entries_[i].trainable; }
  void set_trainable(int i, bool t) { entries_[i].trainable = t; }

  /// Index lookup by name; -1 if absent.
  int find(const std::string& name) const;

  std::uint64_t key(int i) const { return (uid_ << 24) | static_cast<std::uint64_t>(i); }

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable;
  };
  std::uint64_t uid_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> by_name_;
};

/// Result of a backward pass: parameter key -> gradient tensor.
struct GradientMap {
  std::unordered_map<std::uint64_t, Tensor> grads;

  const Tensor* find(std::uint64_t key) const {
    auto it = grads.find(key);
    return it == grads.end() ? nullptr : &it->second;
  }

  /// Global L2 norm over every stored gradient.
  double global_norm() const;

  /// Scales all gradients so the global norm is at most max_norm.
  /// Returns the pre-clip norm.
  double clip_global_norm(double max_norm);
};

}  // namespace dynaconf

#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "dynaconf/errors.hpp"

namespace dynaconf {

/// Dense row-major tensor of 64-bit floats. Plain value type: autodiff
/// happens on a Tape, not here.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
      throw ContractViolation("tensor data length does not match shape");
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<std::size_t> s, double v) {
    std::size_t n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }

  /// Row-major 2-d access; shape must be {rows, cols}.
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }
};

}  // namespace dynaconf

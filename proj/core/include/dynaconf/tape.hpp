#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dynaconf/param_store.hpp"
#include "dynaconf/tensor.hpp"

namespace dynaconf {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Define-by-run reverse-mode autodiff over small dense matrices (vectors
/// are n-by-1, scalars 1-by-1, all row-major). The tape is rebuilt per
/// forward pass; backward() walks the record once in reverse order.
///
/// Every op checks its fresh output for NaN/Inf and throws
/// NumericalFailure naming the offending node, so divergence surfaces at
/// the op that produced it.
class Tape {
 public:
  enum class Op : std::uint8_t {
    kLeaf,
    kAdd,
    kSub,
    kNeg,
    kMul,        // elementwise
    kScale,      // by compile-time constant
    kVsAdd,      // vector + broadcast scalar node
    kVsMul,      // vector * broadcast scalar node
    kMatmul,
    kMaskedMatmul,
    kTanh,
    kSigmoid,
    kSoftplus,
    kExp,
    kLog,
    kSum,
    kSumSegments,
    kSlice,
    kConcat,
    kLogAddExp,
    kNormalLogPdf,  // elementwise log N(value; mu, sigma^2)
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Drops all nodes but keeps allocated capacity for reuse.
  void reset();

  int node_count() const { return static_cast<int>(nodes_.size()); }

  // ---- leaves -----------------------------------------------------------

  Var leaf(const Tensor& t, bool requires_grad, const char* label = "leaf");
  Var constant(std::span<const double> data, int rows, int cols,
               const char* label = "const");
  Var constant_vector(std::span<const double> data, const char* label = "const");
  Var scalar(double v);
  Var zeros(int n);
  Var ones(int n);
  /// Leaf bound to a parameter; its gradient is reported under the store key.
  Var param(const ParameterStore& store, int index);

  // ---- primitive ops -----------------------------------------------------

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var vs_add(Var vec, Var scalar);
  Var vs_mul(Var vec, Var scalar);
  Var matmul(Var a, Var b);
  /// matmul with a fixed 0/1 mask applied to the left operand.
  Var masked_matmul(Var a, Var b, std::shared_ptr<const std::vector<double>> mask);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sum(Var a);
  Var sum_segments(Var a, int segment_len);
  /// Elements [from, to) of the flattened buffer, returned as a vector.
  Var slice(Var a, int from, int to);
  Var concat(Var a, Var b);
  Var concat(const std::vector<Var>& parts);
  Var logaddexp(Var a, Var b);
  /// Elementwise Gaussian log-density; all inputs share one shape.
  Var normal_logpdf(Var value, Var mu, Var sigma);

  // ---- composite helpers -------------------------------------------------

  Var dot(Var a, Var b) { return sum(mul(a, b)); }
  Var affine(Var w, Var x, Var b) { return add(matmul(w, x), b); }

  // ---- access ------------------------------------------------------------

  std::span<const double> values(Var v) const;
  double value_scalar(Var v) const;
  int rows(Var v) const { return nodes_[v.id].rows; }
  int cols(Var v) const { return nodes_[v.id].cols; }

  /// Reverse pass from a scalar loss. Returns gradients for every
  /// parameter leaf on the tape (zero tensors for leaves the loss does
  /// not reach).
  GradientMap backward(Var loss);

 private:
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    int rows = 1, cols = 1;
    std::size_t off = 0;
    int aux0 = 0, aux1 = 0;
    double auxd = 0.0;
    std::shared_ptr<const std::vector<double>> aux_data;
    std::uint64_t param_key = 0;
    const char* label = "";
    bool requires_grad = false;
  };

  int size_of(int id) const { return nodes_[id].rows * nodes_[id].cols; }
  std::span<double> val(int id);
  std::span<const double> val(int id) const;
  std::span<double> grad(int id);

  Var push(Op op, int rows, int cols, int a, int b, int c, const char* label);
  void check_finite(Var v, const char* what) const;
  void require_same_shape(Var a, Var b, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

}  // namespace dynaconf

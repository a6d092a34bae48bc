#include "dynaconf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dynaconf/errors.hpp"

namespace dynaconf {

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log sqrt(2*pi)

double stable_softplus(double x) {
  // log(1 + e^x) in overflow-safe form
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void Tape::reset() {
  nodes_.clear();
  values_.clear();
  grads_.clear();
}

std::span<double> Tape::val(int id) {
  return {values_.data() + nodes_[id].off, static_cast<std::size_t>(size_of(id))};
}

std::span<const double> Tape::val(int id) const {
  return {values_.data() + nodes_[id].off, static_cast<std::size_t>(size_of(id))};
}

std::span<double> Tape::grad(int id) {
  return {grads_.data() + nodes_[id].off, static_cast<std::size_t>(size_of(id))};
}

std::span<const double> Tape::values(Var v) const {
  if (!v.valid()) throw ContractViolation("values: invalid var");
  return val(v.id);
}

double Tape::value_scalar(Var v) const {
  auto s = values(v);
  if (s.size() != 1) throw ContractViolation("value_scalar: node is not scalar");
  return s[0];
}

Var Tape::push(Op op, int rows, int cols, int a, int b, int c, const char* label) {
  Node n;
  n.op = op;
  n.rows = rows;
  n.cols = cols;
  n.a = a;
  n.b = b;
  n.c = c;
  n.off = values_.size();
  n.label = label;
  n.requires_grad = (a >= 0 && nodes_[a].requires_grad) ||
                    (b >= 0 && nodes_[b].requires_grad) ||
                    (c >= 0 && nodes_[c].requires_grad);
  values_.resize(values_.size() + static_cast<std::size_t>(rows) * cols, 0.0);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_finite(Var v, const char* what) const {
  for (double x : val(v.id)) {
    if (!std::isfinite(x))
      throw NumericalFailure(std::string("non-finite value in node '") + what +
                             "' (id " + std::to_string(v.id) + ")");
  }
}

void Tape::require_same_shape(Var a, Var b, const char* what) const {
  if (nodes_[a.id].rows != nodes_[b.id].rows || nodes_[a.id].cols != nodes_[b.id].cols)
    throw ContractViolation(std::string(what) + ": shape mismatch");
}

// ---- leaves ---------------------------------------------------------------

Var Tape::leaf(const Tensor& t, bool requires_grad, const char* label) {
  int rows, cols;
  if (t.shape.size() == 2) {
    rows = static_cast<int>(t.shape[0]);
    cols = static_cast<int>(t.shape[1]);
  } else {
    rows = static_cast<int>(t.size());
    cols = 1;
  }
  Var v = push(Op::kLeaf, rows, cols, -1, -1, -1, label);
  nodes_[v.id].requires_grad = requires_grad;
  std::copy(t.data.begin(), t.data.end(), val(v.id).begin());
  check_finite(v, label);
  return v;
}

Var Tape::constant(std::span<const double> data, int rows, int cols, const char* label) {
  if (static_cast<int>(data.size()) != rows * cols)
    throw ContractViolation("constant: data size does not match shape");
  Var v = push(Op::kLeaf, rows, cols, -1, -1, -1, label);
  std::copy(data.begin(), data.end(), val(v.id).begin());
  check_finite(v, label);
  return v;
}

Var Tape::constant_vector(std::span<const double> data, const char* label) {
  return constant(data, static_cast<int>(data.size()), 1, label);
}

Var Tape::scalar(double v) {
  double d[1] = {v};
  return constant(std::span<const double>(d, 1), 1, 1, "scalar");
}

Var Tape::zeros(int n) {
  Var v = push(Op::kLeaf, n, 1, -1, -1, -1, "zeros");
  return v;
}

Var Tape::ones(int n) {
  Var v = push(Op::kLeaf, n, 1, -1, -1, -1, "ones");
  auto out = val(v.id);
  std::fill(out.begin(), out.end(), 1.0);
  return v;
}

Var Tape::param(const ParameterStore& store, int index) {
  const Tensor& t = store.value(index);
  Var v = leaf(t, true, "param");
  nodes_[v.id].param_key = store.key(index);
  nodes_[v.id].label = store.name(index).c_str();
  return v;
}

// ---- ops --------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Var v = push(Op::kAdd, rows(a), cols(a), a.id, b.id, -1, "add");
  auto out = val(v.id);
  auto va = val(a.id), vb = val(b.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  check_finite(v, "add");
  return v;
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Var v = push(Op::kSub, rows(a), cols(a), a.id, b.id, -1, "sub");
  auto out = val(v.id);
  auto va = val(a.id), vb = val(b.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  check_finite(v, "sub");
  return v;
}

Var Tape::neg(Var a) {
  Var v = push(Op::kNeg, rows(a), cols(a), a.id, -1, -1, "neg");
  auto out = val(v.id);
  auto va = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -va[i];
  return v;
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Var v = push(Op::kMul, rows(a), cols(a), a.id, b.id, -1, "mul");
  auto out = val(v.id);
  auto va = val(a.id), vb = val(b.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  check_finite(v, "mul");
  return v;
}

Var Tape::scale(Var a, double c) {
  Var v = push(Op::kScale, rows(a), cols(a), a.id, -1, -1, "scale");
  nodes_[v.id].auxd = c;
  auto out = val(v.id);
  auto va = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * va[i];
  check_finite(v, "scale");
  return v;
}

Var Tape::vs_add(Var vec, Var s) {
  if (size_of(s.id) != 1) throw ContractViolation("vs_add: second arg must be scalar");
  Var v = push(Op::kVsAdd, rows(vec), cols(vec), vec.id, s.id, -1, "vs_add");
  auto out = val(v.id);
  auto va = val(vec.id);
  double sv = val(s.id)[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + sv;
  check_finite(v, "vs_add");
  return v;
}

Var Tape::vs_mul(Var vec, Var s) {
  if (size_of(s.id) != 1) throw ContractViolation("vs_mul: second arg must be scalar");
  Var v = push(Op::kVsMul, rows(vec), cols(vec), vec.id, s.id, -1, "vs_mul");
  auto out = val(v.id);
  auto va = val(vec.id);
  double sv = val(s.id)[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * sv;
  check_finite(v, "vs_mul");
  return v;
}

Var Tape::matmul(Var a, Var b) {
  int m = rows(a), k = cols(a), k2 = rows(b), n = cols(b);
  if (k != k2) throw ContractViolation("matmul: inner dimensions disagree");
  Var v = push(Op::kMatmul, m, n, a.id, b.id, -1, "matmul");
  auto out = val(v.id);
  auto va = val(a.id), vb = val(b.id);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = va[i * k + p];
      if (aip == 0.0) continue;
      for (int j = 0; j < n; ++j) out[i * n + j] += aip * vb[p * n + j];
    }
  check_finite(v, "matmul");
  return v;
}

Var Tape::masked_matmul(Var a, Var b, std::shared_ptr<const std::vector<double>> mask) {
  int m = rows(a), k = cols(a), k2 = rows(b), n = cols(b);
  if (k != k2) throw ContractViolation("masked_matmul: inner dimensions disagree");
  if (!mask || static_cast<int>(mask->size()) != m * k)
    throw ContractViolation("masked_matmul: mask size mismatch");
  Var v = push(Op::kMaskedMatmul, m, n, a.id, b.id, -1, "masked_matmul");
  nodes_[v.id].aux_data = mask;
  auto out = val(v.id);
  auto va = val(a.id), vb = val(b.id);
  const std::vector<double>& mk = *mask;
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = va[i * k + p] * mk[i * k + p];
      if (aip == 0.0) continue;
      for (int j = 0; j < n; ++j) out[i * n + j] += aip * vb[p * n + j];
    }
  check_finite(v, "masked_matmul");
  return v;
}

Var Tape::tanh(Var a) {
  Var v = push(Op::kTanh, rows(a), cols(a), a.id, -1, -1, "tanh");
  auto out = val(v.id);
  auto va = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
  return v;
}

Var Tape::sigmoid(Var a) {
  Var v = push(Op::kSigmoid, rows(a), cols(a), a.id, -1, -1, "sigmoid");
  auto out = val(v.id);
  auto va = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dynaconf::sigmoid(va[i]);
  return v;
}

Var Tape::softplus(Var a) {
  Var v = push(Op::kSoftplus, rows(a), cols(a), a.id, -1, -1, "softplus");
  auto out = val(v.id);
  auto va = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(va[i]);
  check_finite(v, "softplus");
  return v;
}

Var Tape::exp(Var a) {
  Var v = push(Op::kExp, rows(a), cols(a), a.id, -1, -1, "exp");
  auto out = val(v.id);
  auto va = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(va[i]);
  check_finite(v, "exp");
  return v;
}

Var Tape::log(Var a) {
  Var v = push(Op::kLog, rows(a), cols(a), a.id, -1, -1, "log");
  auto out = val(v.id);
  auto va = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(va[i]);
  check_finite(v, "log");
  return v;
}

Var Tape::sum(Var a) {
  Var v = push(Op::kSum, 1, 1, a.id, -1, -1, "sum");
  auto va = val(a.id);
  double s = 0.0;
  for (double x : va) s += x;
  val(v.id)[0] = s;
  check_finite(v, "sum");
  return v;
}

Var Tape::sum_segments(Var a, int segment_len) {
  int n = size_of(a.id);
  if (segment_len <= 0 || n % segment_len != 0)
    throw ContractViolation("sum_segments: size not divisible by segment length");
  int out_n = n / segment_len;
  Var v = push(Op::kSumSegments, out_n, 1, a.id, -1, -1, "sum_segments");
  nodes_[v.id].aux0 = segment_len;
  auto out = val(v.id);
  auto va = val(a.id);
  for (int i = 0; i < out_n; ++i) {
    double s = 0.0;
    for (int j = 0; j < segment_len; ++j) s += va[i * segment_len + j];
    out[i] = s;
  }
  check_finite(v, "sum_segments");
  return v;
}

Var Tape::slice(Var a, int from, int to) {
  int n = size_of(a.id);
  if (from < 0 || to > n || from >= to)
    throw ContractViolation("slice: range out of bounds");
  Var v = push(Op::kSlice, to - from, 1, a.id, -1, -1, "slice");
  nodes_[v.id].aux0 = from;
  auto out = val(v.id);
  auto va = val(a.id);
  for (int i = 0; i < to - from; ++i) out[i] = va[from + i];
  return v;
}

Var Tape::concat(Var a, Var b) {
  if (cols(a) != 1 || cols(b) != 1)
    throw ContractViolation("concat: only column vectors supported");
  int na = size_of(a.id), nb = size_of(b.id);
  Var v = push(Op::kConcat, na + nb, 1, a.id, b.id, -1, "concat");
  nodes_[v.id].aux0 = na;
  auto out = val(v.id);
  auto va = val(a.id), vb = val(b.id);
  std::copy(va.begin(), va.end(), out.begin());
  std::copy(vb.begin(), vb.end(), out.begin() + na);
  return v;
}

Var Tape::concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat: empty list");
  Var acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = concat(acc, parts[i]);
  return acc;
}

Var Tape::logaddexp(Var a, Var b) {
  require_same_shape(a, b, "logaddexp");
  Var v = push(Op::kLogAddExp, rows(a), cols(a), a.id, b.id, -1, "logaddexp");
  auto out = val(v.id);
  auto va = val(a.id), vb = val(b.id);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double hi = std::max(va[i], vb[i]);
    double lo = std::min(va[i], vb[i]);
    out[i] = hi + std::log1p(std::exp(lo - hi));
  }
  check_finite(v, "logaddexp");
  return v;
}

Var Tape::normal_logpdf(Var value, Var mu, Var sigma) {
  require_same_shape(value, mu, "normal_logpdf");
  require_same_shape(value, sigma, "normal_logpdf");
  Var v = push(Op::kNormalLogPdf, rows(value), cols(value), value.id, mu.id,
               sigma.id, "normal_logpdf");
  auto out = val(v.id);
  auto vv = val(value.id), vm = val(mu.id), vs = val(sigma.id);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double z = (vv[i] - vm[i]) / vs[i];
    out[i] = -kLogSqrt2Pi - std::log(vs[i]) - 0.5 * z * z;
  }
  check_finite(v, "normal_logpdf");
  return v;
}

// ---- backward ---------------------------------------------------------------

GradientMap Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= node_count())
    throw ContractViolation("backward: invalid loss node");
  if (size_of(loss.id) != 1)
    throw ContractViolation("backward: loss must be scalar");
  if (!std::isfinite(val(loss.id)[0]))
    throw NumericalFailure(std::string("backward: loss is non-finite (node '") +
                           nodes_[loss.id].label + "')");

  grads_.assign(values_.size(), 0.0);
  grads_[nodes_[loss.id].off] = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.requires_grad && n.op != Op::kLeaf) continue;
    auto g = grad(id);
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        auto ga = grad(n.a), gb = grad(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        auto ga = grad(n.a), gb = grad(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kNeg: {
        auto ga = grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
        break;
      }
      case Op::kMul: {
        auto ga = grad(n.a), gb = grad(n.b);
        auto va = val(n.a), vb = val(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * vb[i];
          gb[i] += g[i] * va[i];
        }
        break;
      }
      case Op::kScale: {
        auto ga = grad(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.auxd * g[i];
        break;
      }
      case Op::kVsAdd: {
        auto ga = grad(n.a);
        auto gs = grad(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gs[0] += g[i];
        }
        break;
      }
      case Op::kVsMul: {
        auto ga = grad(n.a);
        auto gs = grad(n.b);
        auto va = val(n.a);
        double sv = val(n.b)[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * sv;
          gs[0] += g[i] * va[i];
        }
        break;
      }
      case Op::kMatmul: {
        int m = nodes_[n.a].rows, k = nodes_[n.a].cols, nn = nodes_[n.b].cols;
        auto ga = grad(n.a), gb = grad(n.b);
        auto va = val(n.a), vb = val(n.b);
        // dA += g * B^T ; dB += A^T * g
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < nn; ++j) {
            double gij = g[i * nn + j];
            if (gij == 0.0) continue;
            for (int p = 0; p < k; ++p) {
              ga[i * k + p] += gij * vb[p * nn + j];
              gb[p * nn + j] += va[i * k + p] * gij;
            }
          }
        break;
      }
      case Op::kMaskedMatmul: {
        int m = nodes_[n.a].rows, k = nodes_[n.a].cols, nn = nodes_[n.b].cols;
        auto ga = grad(n.a), gb = grad(n.b);
        auto va = val(n.a), vb = val(n.b);
        const std::vector<double>& mk = *n.aux_data;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < nn; ++j) {
            double gij = g[i * nn + j];
            if (gij == 0.0) continue;
            for (int p = 0; p < k; ++p) {
              double mask = mk[i * k + p];
              if (mask == 0.0) continue;
              ga[i * k + p] += mask * gij * vb[p * nn + j];
              gb[p * nn + j] += mask * va[i * k + p] * gij;
            }
          }
        break;
      }
      case Op::kTanh: {
        auto ga = grad(n.a);
        auto y = val(id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::kSigmoid: {
        auto ga = grad(n.a);
        auto y = val(id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::kSoftplus: {
        auto ga = grad(n.a);
        auto x = val(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * dynaconf::sigmoid(x[i]);
        break;
      }
      case Op::kExp: {
        auto ga = grad(n.a);
        auto y = val(id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        break;
      }
      case Op::kLog: {
        auto ga = grad(n.a);
        auto x = val(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
        break;
      }
      case Op::kSum: {
        auto ga = grad(n.a);
        double gs = g[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
        break;
      }
      case Op::kSumSegments: {
        auto ga = grad(n.a);
        int seg = n.aux0;
        for (int i = 0; i < n.rows; ++i)
          for (int j = 0; j < seg; ++j) ga[i * seg + j] += g[i];
        break;
      }
      case Op::kSlice: {
        auto ga = grad(n.a);
        int from = n.aux0;
        for (int i = 0; i < n.rows; ++i) ga[from + i] += g[i];
        break;
      }
      case Op::kConcat: {
        auto ga = grad(n.a), gb = grad(n.b);
        int na = n.aux0;
        for (int i = 0; i < na; ++i) ga[i] += g[i];
        for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
        break;
      }
      case Op::kLogAddExp: {
        auto ga = grad(n.a), gb = grad(n.b);
        auto va = val(n.a), vb = val(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double wa = dynaconf::sigmoid(va[i] - vb[i]);
          ga[i] += g[i] * wa;
          gb[i] += g[i] * (1.0 - wa);
        }
        break;
      }
      case Op::kNormalLogPdf: {
        auto gv = grad(n.a), gm = grad(n.b), gs = grad(n.c);
        auto vv = val(n.a), vm = val(n.b), vs = val(n.c);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double inv_s = 1.0 / vs[i];
          double r = (vv[i] - vm[i]) * inv_s * inv_s;
          gv[i] += g[i] * (-r);
          gm[i] += g[i] * r;
          gs[i] += g[i] * (r * (vv[i] - vm[i]) * inv_s - inv_s);
        }
        break;
      }
    }
  }

  GradientMap out;
  for (int id = 0; id <= loss.id; ++id) {
    const Node& n = nodes_[id];
    if (n.param_key == 0 || !n.requires_grad) continue;
    auto g = grad(id);
    for (double x : g)
      if (!std::isfinite(x))
        throw NumericalFailure(std::string("non-finite gradient for parameter '") +
                               n.label + "'");
    auto it = out.grads.find(n.param_key);
    if (it == out.grads.end()) {
      Tensor t;
      t.shape = {static_cast<std::size_t>(n.rows), static_cast<std::size_t>(n.cols)};
      if (n.cols == 1) t.shape = {static_cast<std::size_t>(n.rows)};
      t.data.assign(g.begin(), g.end());
      out.grads.emplace(n.param_key, std::move(t));
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g[i];
    }
  }
  return out;
}

}  // namespace dynaconf

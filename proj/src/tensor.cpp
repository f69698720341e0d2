#include "mmner/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace mmner::ad {

namespace {

thread_local std::string corrupted_rule;

double rule_factor(const char* name) { return corrupted_rule == name ? 1.5 : 1.0; }

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

struct AxisSplit {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  if (s.len == 0) throw DimensionError(std::string(op) + ": empty axis in shape " + to_string(shape));
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(Tape& tape, const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  const bool a_big = a.size() >= b.size();
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  if (big.shape() != small.shape() && !is_suffix(small.shape(), big.shape())) {
    throw DimensionError(std::string(name) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " are not broadcastable");
  }
  const std::size_t n = big.size();
  std::vector<double> out(n);
  auto av = a.data();
  auto bv = b.data();
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i % na];
    const double y = bv[i % nb];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = x + y; break;
      case BinaryKind::kSub: out[i] = x - y; break;
      case BinaryKind::kMul: out[i] = x * y; break;
    }
  }
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor result = make_result(big.shape(), std::move(out), track);
  if (track) {
    tape.record(result, [a, b, result, kind, n]() mutable {
      auto g = std::as_const(result).grad();
      const std::size_t na = a.size();
      const std::size_t nb = b.size();
      if (a.requires_grad()) {
        auto ga = a.grad();
        auto bv = std::as_const(b).data();
        for (std::size_t i = 0; i < n; ++i) {
          switch (kind) {
            case BinaryKind::kAdd:
            case BinaryKind::kSub: ga[i % na] += g[i]; break;
            case BinaryKind::kMul: ga[i % na] += g[i] * bv[i % nb]; break;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        auto av = std::as_const(a).data();
        for (std::size_t i = 0; i < n; ++i) {
          switch (kind) {
            case BinaryKind::kAdd: gb[i % nb] += g[i]; break;
            case BinaryKind::kSub: gb[i % nb] -= g[i]; break;
            case BinaryKind::kMul: gb[i % nb] += g[i] * av[i % na]; break;
          }
        }
      }
    });
  }
  return result;
}

// f computes the value, df the derivative given (input, output).
template <typename F, typename DF>
Tensor unary(Tape& tape, const Tensor& a, F f, DF df, const char* rule) {
  std::vector<double> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  Tensor result = make_result(a.shape(), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    tape.record(result, [a, result, df, rule]() mutable {
      auto g = std::as_const(result).grad();
      auto y = std::as_const(result).data();
      auto x = std::as_const(a).data();
      auto ga = a.grad();
      const double factor = rule_factor(rule);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * g[i] * df(x[i], y[i]);
    });
  }
  return result;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  if (element_count(shape) != values.size()) {
    throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  for (std::size_t d : shape)
    if (d == 0) throw DimensionError("tensor shape " + to_string(shape) + " has a zero dimension");
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = element_count(shape);
  return make_result(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_result(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return make_result({1}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return make_result({n}, std::move(values), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return make_result(node_->shape, node_->value, false); }

Tensor Tensor::clone() const { return make_result(node_->shape, node_->value, node_->requires_grad); }

void Tape::record(const Tensor& output, std::function<void()> rule) {
  entries_.push_back({output.node_, std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw ContractError("backward: loss is not connected to any parameter");
  for (auto& e : entries_) std::fill(e.output->grad.begin(), e.output->grad.end(), 0.0);
  const bool is_recorded = std::any_of(entries_.begin(), entries_.end(),
                                       [&](const Entry& e) { return e.output == loss.node_; });
  if (is_recorded) {
    loss.node_->grad[0] = 1.0;
  } else {
    loss.node_->grad[0] += 1.0;  // loss is itself a leaf
  }
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->rule();
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, BinaryKind::kAdd, "add"); }
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, BinaryKind::kSub, "sub"); }
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, BinaryKind::kMul, "mul"); }

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  return unary(
      tape, a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; }, "scale");
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor relu(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; },
      "relu");
}

Tensor one_minus(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; }, "one_minus");
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor result = make_result({m, n}, std::move(out), track);
  if (track) {
    tape.record(result, [a, b, result, m, k, n]() mutable {
      auto g = std::as_const(result).grad();
      const double factor = rule_factor("matmul");
      if (a.requires_grad()) {
        // a_grad += g · bᵀ
        auto ga = a.grad();
        auto bv = std::as_const(b).data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
            ga[i * k + p] += factor * acc;
          }
      }
      if (b.requires_grad()) {
        // b_grad += aᵀ · g
        auto gb = b.grad();
        auto av = std::as_const(a).data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += factor * x * g[i * n + j];
          }
      }
    });
  }
  return result;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + to_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  Tensor result = make_result({n, m}, std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    tape.record(result, [a, result, m, n]() mutable {
      auto g = std::as_const(result).grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return result;
}

Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = xv[base];
      for (std::size_t t = 1; t < s.len; ++t) mx = std::max(mx, xv[base + t * s.inner]);
      double total = 0.0;
      for (std::size_t t = 0; t < s.len; ++t) {
        const double e = std::exp(xv[base + t * s.inner] - mx);
        out[base + t * s.inner] = e;
        total += e;
      }
      for (std::size_t t = 0; t < s.len; ++t) out[base + t * s.inner] /= total;
    }
  Tensor result = make_result(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x, result, s]() mutable {
      auto g = std::as_const(result).grad();
      auto y = std::as_const(result).data();
      auto gx = x.grad();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.len * s.inner + in;
          double dot = 0.0;
          for (std::size_t t = 0; t < s.len; ++t) dot += g[base + t * s.inner] * y[base + t * s.inner];
          for (std::size_t t = 0; t < s.len; ++t) {
            const std::size_t i = base + t * s.inner;
            gx[i] += y[i] * (g[i] - dot);
          }
        }
    });
  }
  return result;
}

Tensor reduce_sum(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "reduce_sum");
  Shape out_shape = drop_axis(x.shape(), axis);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t t = 0; t < s.len; ++t)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += xv[(o * s.len + t) * s.inner + in];
  Tensor result = make_result(std::move(out_shape), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x, result, s]() mutable {
      auto g = std::as_const(result).grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t t = 0; t < s.len; ++t)
          for (std::size_t in = 0; in < s.inner; ++in) gx[(o * s.len + t) * s.inner + in] += g[o * s.inner + in];
    });
  }
  return result;
}

Tensor reduce_max(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "reduce_max");
  Shape out_shape = drop_axis(x.shape(), axis);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> argmax(s.outer * s.inner);
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      std::size_t best = (o * s.len) * s.inner + in;
      for (std::size_t t = 1; t < s.len; ++t) {
        const std::size_t i = (o * s.len + t) * s.inner + in;
        if (xv[i] > xv[best]) best = i;  // strict: ties keep the lowest index
      }
      out[o * s.inner + in] = xv[best];
      argmax[o * s.inner + in] = best;
    }
  Tensor result = make_result(std::move(out_shape), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x, result, argmax = std::move(argmax)]() mutable {
      auto g = std::as_const(result).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += g[i];
    });
  }
  return result;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = make_result({1}, {total}, x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x, result]() mutable {
      const double g = std::as_const(result).grad()[0];
      for (double& v : x.grad()) v += g;
    });
  }
  return result;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  Tensor result = make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
                              x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x, result]() mutable {
      auto g = std::as_const(result).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor pair_add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("pair_add: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), n = b.dim(0), d = a.dim(1);
  std::vector<double> out(m * n * d);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out.data() + (i * n + j) * d;
      for (std::size_t k = 0; k < d; ++k) o[k] = av[i * d + k] + bv[j * d + k];
    }
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor result = make_result({m * n, d}, std::move(out), track);
  if (track) {
    tape.record(result, [a, b, result, m, n, d]() mutable {
      auto g = std::as_const(result).grad();
      const bool ta = a.requires_grad(), tb = b.requires_grad();
      std::span<double> ga, gb;
      if (ta) ga = a.grad();
      if (tb) gb = b.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double* gr = g.data() + (i * n + j) * d;
          for (std::size_t k = 0; k < d; ++k) {
            if (ta) ga[i * d + k] += gr[k];
            if (tb) gb[j * d + k] += gr[k];
          }
        }
    });
  }
  return result;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<double> out(n * (p + q));
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(bv.data() + i * q, q, out.data() + i * (p + q) + p);
  }
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor result = make_result({n, p + q}, std::move(out), track);
  if (track) {
    tape.record(result, [a, b, result, n, p, q]() mutable {
      auto g = std::as_const(result).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < p; ++k) ga[i * p + k] += g[i * (p + q) + k];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < q; ++k) gb[i * q + k] += g[i * (p + q) + p + k];
      }
    });
  }
  return result;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t d = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  bool track = false;
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.size() != d) {
      throw DimensionError("stack_rows: row shape " + to_string(r.shape()) + " differs from [" +
                           std::to_string(d) + "]");
    }
    out.insert(out.end(), r.data().begin(), r.data().end());
    track = track || r.requires_grad();
  }
  Tensor result = make_result({rows.size(), d}, std::move(out), track);
  if (track) {
    std::vector<Tensor> inputs(rows.begin(), rows.end());
    tape.record(result, [inputs = std::move(inputs), result, d]() mutable {
      auto g = std::as_const(result).grad();
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!inputs[i].requires_grad()) continue;
        auto gi = inputs[i].grad();
        for (std::size_t k = 0; k < d; ++k) gi[k] += g[i * d + k];
      }
    });
  }
  return result;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> rows) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2, got " + to_string(table.shape()));
  if (rows.empty()) throw DimensionError("gather_rows: no row indices");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<double> out(rows.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= v) {
      throw DimensionError("gather_rows: index " + std::to_string(rows[i]) + " out of range for " +
                           to_string(table.shape()));
    }
    std::copy_n(tv.data() + rows[i] * d, d, out.data() + i * d);
  }
  Tensor result = make_result({rows.size(), d}, std::move(out), table.requires_grad());
  if (table.requires_grad()) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    tape.record(result, [table, result, idx = std::move(idx), d]() mutable {
      auto g = std::as_const(result).grad();
      auto gt = table.grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t k = 0; k < d; ++k) gt[idx[i] * d + k] += g[i * d + k];
    });
  }
  return result;
}

Tensor row(Tape& tape, const Tensor& x, std::size_t index) {
  if (x.rank() != 2) throw DimensionError("row: expected rank 2, got " + to_string(x.shape()));
  const std::size_t idx[] = {index};
  Tensor r = gather_rows(tape, x, idx);
  return reshape(tape, r, {x.dim(1)});
}

namespace debug {
void corrupt_backward_rule(std::string rule_name) { corrupted_rule = std::move(rule_name); }
void clear_corruption() { corrupted_rule.clear(); }
}  // namespace debug

}  // namespace mmner::ad

#pragma once

// Dense float64 tensors with a recording tape for reverse-mode gradients.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets parameters be referenced from many places in one recorded computation.
// Operations only record onto the tape when at least one input requires a
// gradient, so evaluation without training costs no tape memory.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmner/errors.hpp"

namespace mmner::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient accumulator; empty span when the tensor does not track
  /// gradients. Writable through const handles, since handles share storage.
  std::span<double> grad() const { return node_->grad; }
  void zero_grad();

  /// Fresh storage with the same values and no gradient tracking.
  Tensor detach() const;
  /// Deep copy including the requires_grad flag (gradient starts at zero).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Tape;
  friend Tensor make_result(Shape, std::vector<double>, bool);
};

/// Output tensor for a custom operation. Pair with Tape::record.
Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad);

/// Ordered record of executed operations. Backward replays the record in
/// exact reverse order of recording.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Register `output` as produced by an operation whose inputs were all
  /// created earlier. `rule` reads output.grad() and accumulates into inputs.
  void record(const Tensor& output, std::function<void()> rule);

  /// Populate gradients of every requires_grad tensor reachable from the
  /// scalar `loss`. Leaf gradients accumulate across calls; intermediate
  /// gradients are reset on each call.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<detail::Node> output;
    std::function<void()> rule;
  };
  std::vector<Entry> entries_;
};

// Elementwise. Binary operands must have equal shapes, or the shape of one
// must equal the trailing dimensions of the other (bias-style broadcast).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);
Tensor one_minus(Tape& tape, const Tensor& a);

// a[m×k] · b[k×n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);

Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis);
Tensor reduce_sum(Tape& tape, const Tensor& x, std::size_t axis);
/// Gradient flows to the lowest index among tied maxima.
Tensor reduce_max(Tape& tape, const Tensor& x, std::size_t axis);
Tensor sum_all(Tape& tape, const Tensor& x);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
/// a[m×d], b[n×d] -> [(m·n)×d] with row i·n+j equal to a[i] + b[j].
Tensor pair_add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
/// Rank-1 tensors of equal length stacked into a matrix.
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> rows);
/// Extract row `index` of a rank-2 tensor as a rank-1 tensor.
Tensor row(Tape& tape, const Tensor& x, std::size_t index);

namespace debug {
/// Test hook for gradient-check negative controls: when set, the named
/// elementwise rule ("sigmoid", "tanh", "relu", "matmul") scales its
/// backward output by 1.5.
void corrupt_backward_rule(std::string rule_name);
void clear_corruption();
}  // namespace debug

}  // namespace mmner::ad

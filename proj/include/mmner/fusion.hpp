#pragma once

#include "mmner/random.hpp"
#include "mmner/tensor.hpp"

namespace mmner {

struct GateParams {
  ad::Tensor w1;    // [d_e × d_e], applied to the first operand
  ad::Tensor w2;    // [d_e × d_e], applied to the second operand
  ad::Tensor bias;  // [d_e]

  static GateParams init(std::size_t d_e, Rng& rng);
};

struct Fused {
  ad::Tensor out;
  ad::Tensor gate;
};

/// G = sigmoid(a·W1 + b·W2 + bias); out = G⊙b + (1−G)⊙a.
/// Operands are [d_e] vectors or [m × d_e] row batches of equal shape.
Fused gated_fuse(ad::Tape& tape, const ad::Tensor& a, const ad::Tensor& b, const GateParams& p);

}  // namespace mmner

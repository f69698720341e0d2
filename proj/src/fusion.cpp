#include "mmner/fusion.hpp"

namespace mmner {

GateParams GateParams::init(std::size_t d_e, Rng& rng) {
  GateParams p;
  p.w1 = xavier(rng, d_e, d_e);
  p.w2 = xavier(rng, d_e, d_e);
  p.bias = ad::Tensor::zeros({d_e}, true);
  return p;
}

Fused gated_fuse(ad::Tape& tape, const ad::Tensor& a, const ad::Tensor& b, const GateParams& p) {
  if (a.shape() != b.shape() || a.rank() > 2) {
    throw DimensionError("gated_fuse: operands " + ad::to_string(a.shape()) + " and " + ad::to_string(b.shape()));
  }
  const std::size_t d = p.w1.dim(0);
  if (a.shape().back() != d) {
    throw DimensionError("gated_fuse: operand width " + std::to_string(a.shape().back()) + " vs gate width " +
                         std::to_string(d));
  }
  ad::Tensor a2 = a.rank() == 1 ? ad::reshape(tape, a, {1, d}) : a;
  ad::Tensor b2 = b.rank() == 1 ? ad::reshape(tape, b, {1, d}) : b;
  ad::Tensor pre = ad::add(tape, ad::add(tape, ad::matmul(tape, a2, p.w1), ad::matmul(tape, b2, p.w2)), p.bias);
  ad::Tensor gate = ad::sigmoid(tape, pre);
  ad::Tensor out = ad::add(tape, ad::mul(tape, gate, b2), ad::mul(tape, ad::one_minus(tape, gate), a2));
  if (a.rank() == 1) {
    out = ad::reshape(tape, out, {d});
    gate = ad::reshape(tape, gate, {d});
  }
  return {out, gate};
}

}  // namespace mmner

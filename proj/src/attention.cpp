#include "mmner/attention.hpp"

namespace mmner {

namespace {

ad::Tensor as_row(ad::Tape& tape, const ad::Tensor& v, std::size_t d, const char* op) {
  if (v.size() != d) {
    throw DimensionError(std::string(op) + ": vector of shape " + ad::to_string(v.shape()) +
                         " does not match d_e = " + std::to_string(d));
  }
  return ad::reshape(tape, v, {1, d});
}

ad::Tensor hidden(ad::Tape& tape, const ad::Tensor& x_i, const ad::Tensor& q, const AdditiveAttnParams& p,
                  const char* op) {
  const std::size_t d = p.dim();
  ad::Tensor xr = as_row(tape, x_i, d, op);
  ad::Tensor qr = as_row(tape, q, d, op);
  return ad::tanh(tape, ad::add(tape, ad::matmul(tape, xr, p.w_x), ad::matmul(tape, qr, p.w_q)));
}

}  // namespace

AdditiveAttnParams AdditiveAttnParams::init(std::size_t d_e, Rng& rng) {
  AdditiveAttnParams p;
  p.w_x = xavier(rng, d_e, d_e);
  p.w_q = xavier(rng, d_e, d_e);
  p.w_a = xavier(rng, d_e, d_e);
  p.w_vec = uniform_tensor(rng, {d_e}, -0.5, 0.5, true);
  return p;
}

ad::Tensor additive_score(ad::Tape& tape, const ad::Tensor& x_i, const ad::Tensor& q, const AdditiveAttnParams& p) {
  ad::Tensor h = hidden(tape, x_i, q, p, "additive_score");
  return ad::sum_all(tape, ad::mul(tape, h, p.w_vec));
}

ad::Tensor multidim_score(ad::Tape& tape, const ad::Tensor& x_i, const ad::Tensor& q, const AdditiveAttnParams& p) {
  ad::Tensor h = hidden(tape, x_i, q, p, "multidim_score");
  return ad::reshape(tape, ad::matmul(tape, h, p.w_a), {p.dim()});
}

ad::Tensor pairwise_scores(ad::Tape& tape, const ad::Tensor& x, const AdditiveAttnParams& p) {
  if (x.rank() != 2 || x.dim(1) != p.dim()) {
    throw DimensionError("pairwise_scores: tokens " + ad::to_string(x.shape()) + " do not match d_e = " +
                         std::to_string(p.dim()));
  }
  ad::Tensor token_part = ad::matmul(tape, x, p.w_x);
  ad::Tensor query_part = ad::matmul(tape, x, p.w_q);
  ad::Tensor h = ad::tanh(tape, ad::pair_add(tape, query_part, token_part));
  return ad::matmul(tape, h, p.w_a);
}

ad::Tensor feature_categorical(ad::Tape& tape, const ad::Tensor& scores) {
  if (scores.rank() != 2) throw DimensionError("feature_categorical: expected [n × d_e], got " +
                                               ad::to_string(scores.shape()));
  return ad::softmax(tape, scores, 0);
}

ad::Tensor multidim_context(ad::Tape& tape, const ad::Tensor& probs, const ad::Tensor& x) {
  if (probs.shape() != x.shape() || probs.rank() != 2) {
    throw DimensionError("multidim_context: distribution " + ad::to_string(probs.shape()) + " vs tokens " +
                         ad::to_string(x.shape()));
  }
  return ad::reduce_sum(tape, ad::mul(tape, probs, x), 0);
}

}  // namespace mmner

#pragma once

// Additive attention and feature-wise (multi-dimensional) token2token
// self-attention. Vectors are rows: x·W rather than W·x.

#include "mmner/random.hpp"
#include "mmner/tensor.hpp"

namespace mmner {

struct AdditiveAttnParams {
  ad::Tensor w_x;    // [d_e × d_e]
  ad::Tensor w_q;    // [d_e × d_e]
  ad::Tensor w_a;    // [d_e × d_e], feature-wise score head
  ad::Tensor w_vec;  // [d_e], scalar score head (additive_score only)

  static AdditiveAttnParams init(std::size_t d_e, Rng& rng);
  std::size_t dim() const { return w_x.dim(0); }
};

/// Scalar score w·tanh(x_i·W_x + q·W_q).
ad::Tensor additive_score(ad::Tape& tape, const ad::Tensor& x_i, const ad::Tensor& q, const AdditiveAttnParams& p);

/// Feature-wise alignment vector tanh(x_i·W_x + q·W_q)·W_a, length d_e.
ad::Tensor multidim_score(ad::Tape& tape, const ad::Tensor& x_i, const ad::Tensor& q, const AdditiveAttnParams& p);

/// Alignment vectors for every (query, token) pair of a sentence x [n × d_e].
/// Result is [n·n × d_e] with row q·n + i holding the score of token i for
/// query q.
ad::Tensor pairwise_scores(ad::Tape& tape, const ad::Tensor& x, const AdditiveAttnParams& p);

/// Softmax over tokens (axis 0) independently for each feature column.
ad::Tensor feature_categorical(ad::Tape& tape, const ad::Tensor& scores);

/// C_k = Σ_i P[i,k] · x[i,k].
ad::Tensor multidim_context(ad::Tape& tape, const ad::Tensor& probs, const ad::Tensor& x);

}  // namespace mmner

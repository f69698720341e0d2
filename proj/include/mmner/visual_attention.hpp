#pragma once

// Visual attention over image regions, queried by a token-pair alignment
// vector.
//
// The region context is taken over projected region features
// F̃_j = F_j·W_i, so that the context lives in R^{d_e} like the alignment
// vector it is fused with.

#include <vector>

#include "mmner/random.hpp"
#include "mmner/tensor.hpp"

namespace mmner {

/// N×d_i region descriptors for one image, row-major.
struct RegionFeatures {
  std::size_t regions = 0;
  std::size_t dims = 0;
  std::vector<double> values;

  static RegionFeatures zeros(std::size_t regions, std::size_t dims);
  ad::Tensor tensor() const;
  double at(std::size_t region, std::size_t dim) const { return values[region * dims + dim]; }
};

struct VisualAttnParams {
  ad::Tensor w_i;  // [d_i × d_e]
  ad::Tensor w_t;  // [d_e × d_e]
  ad::Tensor w_v;  // [d_e × d_e]

  static VisualAttnParams init(std::size_t d_i, std::size_t d_e, Rng& rng);
  std::size_t dim() const { return w_t.dim(0); }
  std::size_t region_dims() const { return w_i.dim(0); }
};

/// F̃ = F·W_i, [N × d_e].
ad::Tensor project_regions(ad::Tape& tape, const RegionFeatures& f, const VisualAttnParams& p);

/// Score matrix [d_e × N]; column j is tanh(a_t·W_t + F̃_j)·W_v.
ad::Tensor visual_scores(ad::Tape& tape, const ad::Tensor& a_t, const RegionFeatures& f, const VisualAttnParams& p);

/// Softmax along the region axis, independently per feature row.
ad::Tensor region_distribution(ad::Tape& tape, const ad::Tensor& scores);

/// C_v[k] = Σ_j P[k,j] · F̃_j[k], length d_e.
ad::Tensor visual_context(ad::Tape& tape, const ad::Tensor& probs, const RegionFeatures& f, const VisualAttnParams& p);

/// Batched form for m alignment vectors at once.
struct VisualBatch {
  ad::Tensor context;  // [m × d_e]
  ad::Tensor probs;    // [m × N × d_e], softmax over axis 1
};
VisualBatch visual_attend(ad::Tape& tape, const ad::Tensor& alignments, const ad::Tensor& projected,
                          const VisualAttnParams& p);

}  // namespace mmner

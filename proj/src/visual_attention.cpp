#include "mmner/visual_attention.hpp"

namespace mmner {

RegionFeatures RegionFeatures::zeros(std::size_t regions, std::size_t dims) {
  return RegionFeatures{regions, dims, std::vector<double>(regions * dims, 0.0)};
}

ad::Tensor RegionFeatures::tensor() const {
  if (regions == 0 || dims == 0 || values.size() != regions * dims) {
    throw DimensionError("region features: " + std::to_string(values.size()) + " values for " +
                         std::to_string(regions) + "x" + std::to_string(dims));
  }
  return ad::Tensor::from({regions, dims}, values);
}

VisualAttnParams VisualAttnParams::init(std::size_t d_i, std::size_t d_e, Rng& rng) {
  VisualAttnParams p;
  p.w_i = xavier(rng, d_i, d_e);
  p.w_t = xavier(rng, d_e, d_e);
  p.w_v = xavier(rng, d_e, d_e);
  return p;
}

ad::Tensor project_regions(ad::Tape& tape, const RegionFeatures& f, const VisualAttnParams& p) {
  if (f.dims != p.region_dims()) {
    throw DimensionError("region features have " + std::to_string(f.dims) + " dims but W_i expects " +
                         std::to_string(p.region_dims()));
  }
  return ad::matmul(tape, f.tensor(), p.w_i);
}

ad::Tensor visual_scores(ad::Tape& tape, const ad::Tensor& a_t, const RegionFeatures& f, const VisualAttnParams& p) {
  const std::size_t d = p.dim();
  if (a_t.size() != d) {
    throw DimensionError("visual_scores: alignment " + ad::to_string(a_t.shape()) + " does not match d_e = " +
                         std::to_string(d));
  }
  ad::Tensor projected = project_regions(tape, f, p);
  ad::Tensor query = ad::matmul(tape, ad::reshape(tape, a_t, {1, d}), p.w_t);
  ad::Tensor hidden = ad::tanh(tape, ad::pair_add(tape, query, projected));
  return ad::transpose(tape, ad::matmul(tape, hidden, p.w_v));
}

ad::Tensor region_distribution(ad::Tape& tape, const ad::Tensor& scores) {
  if (scores.rank() != 2) {
    throw DimensionError("region_distribution: expected [d_e × N], got " + ad::to_string(scores.shape()));
  }
  return ad::softmax(tape, scores, 1);
}

ad::Tensor visual_context(ad::Tape& tape, const ad::Tensor& probs, const RegionFeatures& f, const VisualAttnParams& p) {
  ad::Tensor projected = project_regions(tape, f, p);
  if (probs.rank() != 2 || probs.dim(0) != p.dim() || probs.dim(1) != f.regions) {
    throw DimensionError("visual_context: distribution " + ad::to_string(probs.shape()) + " does not match [" +
                         std::to_string(p.dim()) + "x" + std::to_string(f.regions) + "]");
  }
  ad::Tensor weighted = ad::mul(tape, ad::transpose(tape, probs), projected);
  return ad::reduce_sum(tape, weighted, 0);
}

VisualBatch visual_attend(ad::Tape& tape, const ad::Tensor& alignments, const ad::Tensor& projected,
                          const VisualAttnParams& p) {
  const std::size_t m = alignments.dim(0);
  const std::size_t regions = projected.dim(0);
  const std::size_t d = p.dim();
  ad::Tensor query = ad::matmul(tape, alignments, p.w_t);
  ad::Tensor hidden = ad::tanh(tape, ad::pair_add(tape, query, projected));
  ad::Tensor scores = ad::reshape(tape, ad::matmul(tape, hidden, p.w_v), {m, regions, d});
  ad::Tensor probs = ad::softmax(tape, scores, 1);
  ad::Tensor context = ad::reduce_sum(tape, ad::mul(tape, probs, projected), 1);
  return {context, probs};
}

}  // namespace mmner

#pragma once

// Linear-chain CRF in log space.
//
// Emissions are [n × L]. Transitions are [(L+2) × (L+2)] indexed
// (from, to); index L is the BOS pseudo-label and L+1 is EOS.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmner/tensor.hpp"

namespace mmner {

inline constexpr double kForbiddenScore = -1e4;

/// Ordered label inventory. The BIO set is O followed by B-/I- for each type.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names) : names_(std::move(names)) {}

  /// O, B-PER, I-PER, B-LOC, I-LOC, B-ORG, I-ORG, B-MISC, I-MISC.
  static LabelSet bio();
  static const std::vector<std::string>& entity_types();

  std::size_t size() const { return names_.size(); }
  std::size_t bos() const { return names_.size(); }
  std::size_t eos() const { return names_.size() + 1; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::optional<std::size_t> index(std::string_view name) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

/// Row-major (L+2)×(L+2) mask of transitions that BIO structure forbids,
/// including every move into BOS and out of EOS.
std::vector<bool> forbidden_transitions(const LabelSet& labels);

/// Trainable transition matrix: zeros, forbidden entries at kForbiddenScore.
ad::Tensor init_transitions(std::size_t labels, const std::vector<bool>& forbidden);

double sequence_score(const ad::Tensor& emissions, const ad::Tensor& transitions,
                      std::span<const std::size_t> tags);
double log_partition(const ad::Tensor& emissions, const ad::Tensor& transitions);

/// log Z − score(gold), recorded on the tape; the gradient is the
/// difference between expected and observed feature counts.
ad::Tensor crf_nll(ad::Tape& tape, const ad::Tensor& emissions, const ad::Tensor& transitions,
                   std::span<const std::size_t> tags);

struct Decoded {
  std::vector<std::size_t> tags;
  double score = 0.0;
};

/// Max-score sequence; ties resolve to the lowest label index.
Decoded viterbi(const ad::Tensor& emissions, const ad::Tensor& transitions);

double log_sum_exp(std::span<const double> xs);

}  // namespace mmner

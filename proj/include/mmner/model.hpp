#pragma once

// End-to-end tagger: per query token, feature-wise pair scores are enriched
// with visual attention over image regions, gated, normalized over tokens,
// pooled into a context vector, gated with the query's own vector, passed
// through a ReLU layer and a label projection, and decoded by a CRF.

#include <span>
#include <string>
#include <vector>

#include "mmner/attention.hpp"
#include "mmner/crf.hpp"
#include "mmner/data_io.hpp"
#include "mmner/embeddings.hpp"
#include "mmner/fusion.hpp"
#include "mmner/visual_attention.hpp"

namespace mmner {

struct ModelConfig {
  std::size_t d_word = 16;
  std::size_t d_char = 8;
  std::size_t d_hidden = 0;  // 0 selects d_e
  std::size_t char_width = 3;
  std::size_t region_dims = 16;
  bool bypass_visual = false;

  std::size_t d_e() const { return d_word + d_char; }
  std::size_t hidden() const { return d_hidden == 0 ? d_e() : d_hidden; }
};

/// Named handle to a parameter slot inside ModelParams.
struct ParamRef {
  std::string name;
  ad::Tensor* slot = nullptr;
  /// Elements excluded from optimization (same length as the tensor), or null.
  const std::vector<bool>* frozen = nullptr;

  ad::Tensor& tensor() const { return *slot; }
};

struct ModelParams {
  ModelConfig config;
  LabelSet labels;
  WordVocab words;
  CharVocab chars;
  CharCnn cnn;
  AdditiveAttnParams attn;
  VisualAttnParams visual;
  GateParams visual_gate;
  GateParams word_gate;
  ad::Tensor fc_weight;   // [d_e × d_h]
  ad::Tensor fc_bias;     // [d_h]
  ad::Tensor out_weight;  // [d_h × L]
  ad::Tensor transitions;
  std::vector<bool> frozen_transitions;

  /// Fresh parameters. `words` must already hold its frozen table; the
  /// character inventory is built from `char_source`.
  static ModelParams init(const ModelConfig& config, LabelSet labels, WordVocab words,
                          const std::vector<std::string>& char_source, std::uint64_t seed);

  /// Every stored tensor, in a fixed order.
  std::vector<ParamRef> all();
  /// Tensors updated by training (excludes the frozen word table and the
  /// unused scalar-score head).
  std::vector<ParamRef> trainable();
  void zero_grad();
  /// Deep copy. Plain copies share tensor storage with the original.
  ModelParams clone() const;
};

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  Mode mode = Mode::kEval;
  double dropout_keep = 1.0;
  Rng* rng = nullptr;  // required when mode is kTrain and dropout_keep < 1
  bool record_trace = false;
};

/// Attention internals for inspection, indexed by (query q, token i).
struct AttentionTrace {
  std::size_t tokens = 0;
  std::size_t regions = 0;
  std::size_t dim = 0;
  std::vector<double> alignment;       // [q][i][d_e]
  std::vector<double> region_weights;  // [q][i][N], feature-mean of P
  std::vector<double> visual_gate;     // [q][i], mean gate activation
  std::vector<double> token_weights;   // [q][i], feature-mean of the token distribution
  std::vector<double> word_gate;       // [q]

  std::span<const double> regions_for(std::size_t q, std::size_t i) const {
    return std::span<const double>(region_weights).subspan((q * tokens + i) * regions, regions);
  }
};

struct ForwardResult {
  ad::Tensor emissions;  // [n × L]
  ad::Tensor fused;      // [n·n × d_e], the gated alignment vectors (row q·n + i)
  AttentionTrace trace;
};

ForwardResult forward(ad::Tape& tape, const Sentence& sentence, const RegionFeatures& features,
                      const ModelParams& params, const ForwardOptions& options = {});

std::vector<std::size_t> tag_indices(const Sentence& sentence, const LabelSet& labels);

struct Example {
  const Sentence* sentence;
  const RegionFeatures* features;
};

/// Mean CRF negative log-likelihood over the batch.
ad::Tensor batch_loss(ad::Tape& tape, std::span<const Example> batch, const ModelParams& params,
                      const ForwardOptions& options = {});

std::vector<std::string> tag(const Sentence& sentence, const RegionFeatures& features, const ModelParams& params);

}  // namespace mmner

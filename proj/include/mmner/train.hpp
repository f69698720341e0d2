#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmner/model.hpp"

namespace mmner {

using FeatureMap = std::map<std::string, RegionFeatures>;

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Holds slot pointers into the ModelParams the
/// refs came from, so that object must outlive the optimizer and stay put.
class Adam {
 public:
  Adam(std::vector<ParamRef> params, AdamOptions options);

  /// Apply one update from the accumulated gradients. Elements marked
  /// frozen are left untouched.
  void step();
  std::size_t steps() const { return steps_; }

 private:
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  AdamOptions options_;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 20;
  double dropout_keep = 0.5;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  ModelConfig model;

  void validate() const;
};

struct LossRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t batch = 0;  // 1-based within the epoch
  double loss = 0.0;
};

/// Fresh model for a corpus. Without `embeddings`, frozen random word
/// vectors are drawn for the corpus vocabulary.
ModelParams build_model(const TrainConfig& config, const std::vector<Sentence>& corpus,
                        std::optional<WordVocab> embeddings = std::nullopt);

using EpochCallback = std::function<void(std::size_t epoch, ModelParams& params)>;

/// Seeded mini-batch training. Throws std::runtime_error naming the batch
/// when a loss is not finite.
std::vector<LossRecord> train(const TrainConfig& config, const std::vector<Sentence>& corpus,
                              const FeatureMap& features, ModelParams& params, const EpochCallback& on_epoch = {});

std::string format_loss_csv(const std::vector<LossRecord>& log);
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log);

/// Mean loss per epoch, in epoch order.
std::vector<double> epoch_means(const std::vector<LossRecord>& log);

const RegionFeatures& features_for(const FeatureMap& features, const Sentence& sentence);

// ---------------------------------------------------------------------------
// Evaluation

struct SpanScores {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t matched = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::map<std::string, SpanScores> per_type;
  SpanScores overall;

  std::string table() const;
  std::string csv() const;
};

/// Exact-span, exact-type entity matching.
EvalReport score_spans(const std::vector<std::vector<std::string>>& gold,
                       const std::vector<std::vector<std::string>>& predicted);

std::vector<std::vector<std::string>> predict(const ModelParams& params, const std::vector<Sentence>& corpus,
                                              const FeatureMap& features);
EvalReport evaluate(const ModelParams& params, const std::vector<Sentence>& corpus, const FeatureMap& features);

// ---------------------------------------------------------------------------
// Attention export

struct AttentionMap {
  std::vector<double> weights;  // length N, sums to 1
  std::size_t side = 0;         // sqrt(N) when N is a perfect square, else 0
};

/// Feature-mean of the region distribution for the (query, token) pair.
AttentionMap attention_map(const Sentence& sentence, const RegionFeatures& features, const ModelParams& params,
                           std::size_t query_index, std::size_t token_index);

/// Writes <prefix>.csv and, for square region grids, <prefix>.pgm. Returns
/// the files written.
std::vector<std::filesystem::path> export_attention(const AttentionMap& map, const std::filesystem::path& prefix);

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckGroup {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double tolerance = 0.0;
  bool pass = false;

  std::string format() const;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  bool bypass_visual = false;
  /// Backward rule to sabotage for negative-control runs (see ad::debug).
  std::string corrupt_rule;
};

/// |a − b| / max(|a|, |b|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central-difference check of every trainable tensor of `params` against
/// the analytic gradient of `loss`.
GradcheckReport check_gradients(ModelParams& params, const std::function<ad::Tensor(ad::Tape&)>& loss,
                                double step, double tolerance);

/// Full-model check on a tiny instance: d_e = 6, two tokens, three regions,
/// three labels.
GradcheckReport gradcheck(const GradcheckOptions& options = {});

}  // namespace mmner

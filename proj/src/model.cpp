#include "mmner/model.hpp"

#include <cmath>

namespace mmner {

namespace {

ad::Tensor dropout(ad::Tape& tape, const ad::Tensor& x, const ForwardOptions& options) {
  if (options.mode != Mode::kTrain || options.dropout_keep >= 1.0) return x;
  if (options.rng == nullptr) throw ContractError("forward: training with dropout needs an rng");
  const double keep = options.dropout_keep;
  std::vector<double> mask(x.size());
  for (double& m : mask) m = options.rng->uniform() < keep ? 1.0 / keep : 0.0;
  return ad::mul(tape, x, ad::Tensor::from(x.shape(), std::move(mask)));
}

std::vector<double> row_means(std::span<const double> values, std::size_t width) {
  std::vector<double> out(values.size() / width, 0.0);
  for (std::size_t r = 0; r < out.size(); ++r) {
    double total = 0.0;
    for (std::size_t k = 0; k < width; ++k) total += values[r * width + k];
    out[r] = total / static_cast<double>(width);
  }
  return out;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, LabelSet labels, WordVocab words,
                              const std::vector<std::string>& char_source, std::uint64_t seed) {
  if (words.dim() != config.d_word) {
    throw DimensionError("word embeddings have width " + std::to_string(words.dim()) + ", config expects " +
                         std::to_string(config.d_word));
  }
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  p.labels = std::move(labels);
  p.words = std::move(words);
  const std::size_t d_e = config.d_e();
  const std::size_t d_h = config.hidden();
  p.chars = CharVocab::build(char_source, config.d_char, rng);
  p.cnn = CharCnn::init(config.d_char, config.char_width, rng);
  p.attn = AdditiveAttnParams::init(d_e, rng);
  p.visual = VisualAttnParams::init(config.region_dims, d_e, rng);
  p.visual_gate = GateParams::init(d_e, rng);
  p.word_gate = GateParams::init(d_e, rng);
  p.fc_weight = xavier(rng, d_e, d_h);
  p.fc_bias = ad::Tensor::zeros({d_h}, true);
  p.out_weight = xavier(rng, d_h, p.labels.size());
  p.frozen_transitions = forbidden_transitions(p.labels);
  p.transitions = init_transitions(p.labels.size(), p.frozen_transitions);
  return p;
}

std::vector<ParamRef> ModelParams::all() {
  std::vector<ParamRef> refs{{"embed.word", &words.table()}, {"attn.w_vec", &attn.w_vec}};
  for (auto& r : trainable()) refs.push_back(r);
  return refs;
}

std::vector<ParamRef> ModelParams::trainable() {
  return {
      {"embed.char", &chars.table()},
      {"charcnn.weight", &cnn.weight},
      {"charcnn.bias", &cnn.bias},
      {"attn.w_x", &attn.w_x},
      {"attn.w_q", &attn.w_q},
      {"attn.w_a", &attn.w_a},
      {"visual.w_i", &visual.w_i},
      {"visual.w_t", &visual.w_t},
      {"visual.w_v", &visual.w_v},
      {"gate_visual.w1", &visual_gate.w1},
      {"gate_visual.w2", &visual_gate.w2},
      {"gate_visual.bias", &visual_gate.bias},
      {"gate_word.w1", &word_gate.w1},
      {"gate_word.w2", &word_gate.w2},
      {"gate_word.bias", &word_gate.bias},
      {"fc.weight", &fc_weight},
      {"fc.bias", &fc_bias},
      {"out.weight", &out_weight},
      {"crf.transitions", &transitions, &frozen_transitions},
  };
}

void ModelParams::zero_grad() {
  for (auto& r : trainable()) r.tensor().zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  copy.words = WordVocab::from_table(words.tokens(), words.table().clone());
  copy.chars = CharVocab::from_table(chars.chars(), chars.table().clone());
  for (auto& ref : copy.all())
    if (ref.name != "embed.word" && ref.name != "embed.char") ref.tensor() = ref.tensor().clone();
  return copy;
}

ForwardResult forward(ad::Tape& tape, const Sentence& sentence, const RegionFeatures& features,
                      const ModelParams& params, const ForwardOptions& options) {
  const std::size_t n = sentence.tokens.size();
  if (n == 0) throw ContractError("forward: empty sentence");
  const std::size_t d = params.config.d_e();

  ad::Tensor x = encode_sentence(tape, params.words, params.chars, params.cnn, sentence.tokens);
  x = dropout(tape, x, options);

  ad::Tensor alignment = pairwise_scores(tape, x, params.attn);
  ad::Tensor fused = alignment;
  VisualBatch visual;
  Fused visual_fused;
  if (!params.config.bypass_visual) {
    ad::Tensor projected = project_regions(tape, features, params.visual);
    visual = visual_attend(tape, alignment, projected, params.visual);
    visual_fused = gated_fuse(tape, alignment, visual.context, params.visual_gate);
    fused = visual_fused.out;
  }

  ad::Tensor token_probs = ad::softmax(tape, ad::reshape(tape, fused, {n, n, d}), 1);
  ad::Tensor context = ad::reduce_sum(tape, ad::mul(tape, token_probs, x), 1);
  Fused word_fused = gated_fuse(tape, context, x, params.word_gate);

  ad::Tensor hidden = ad::relu(tape, ad::add(tape, ad::matmul(tape, word_fused.out, params.fc_weight), params.fc_bias));
  hidden = dropout(tape, hidden, options);
  ad::Tensor emissions = ad::matmul(tape, hidden, params.out_weight);

  ForwardResult result{emissions, fused, {}};
  if (options.record_trace) {
    AttentionTrace& tr = result.trace;
    tr.tokens = n;
    tr.dim = d;
    tr.alignment.assign(alignment.data().begin(), alignment.data().end());
    tr.token_weights = row_means(token_probs.data(), d);
    tr.word_gate = row_means(word_fused.gate.data(), d);
    if (!params.config.bypass_visual) {
      tr.regions = features.regions;
      tr.region_weights = row_means(visual.probs.data(), d);
      tr.visual_gate = row_means(visual_fused.gate.data(), d);
    }
  }
  return result;
}

std::vector<std::size_t> tag_indices(const Sentence& sentence, const LabelSet& labels) {
  std::vector<std::size_t> out;
  out.reserve(sentence.tags.size());
  for (const auto& t : sentence.tags) {
    auto idx = labels.index(t);
    if (!idx) throw ContractError("unknown tag '" + t + "'");
    out.push_back(*idx);
  }
  return out;
}

ad::Tensor batch_loss(ad::Tape& tape, std::span<const Example> batch, const ModelParams& params,
                      const ForwardOptions& options) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  ad::Tensor total;
  for (const auto& ex : batch) {
    ForwardResult r = forward(tape, *ex.sentence, *ex.features, params, options);
    const auto gold = tag_indices(*ex.sentence, params.labels);
    ad::Tensor nll = crf_nll(tape, r.emissions, params.transitions, gold);
    total = total.defined() ? ad::add(tape, total, nll) : nll;
  }
  return ad::scale(tape, total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<std::string> tag(const Sentence& sentence, const RegionFeatures& features, const ModelParams& params) {
  ad::Tape tape;
  ForwardResult r = forward(tape, sentence, features, params);
  Decoded best = viterbi(r.emissions, params.transitions);
  std::vector<std::string> out;
  out.reserve(best.tags.size());
  for (std::size_t t : best.tags) out.push_back(params.labels.name(t));
  return out;
}

}  // namespace mmner

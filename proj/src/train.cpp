#include "mmner/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mmner {

Adam::Adam(std::vector<ParamRef> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw ContractError("Adam: learning rate must be positive");
  for (const auto& p : params_) {
    first_.emplace_back(p.tensor().size(), 0.0);
    second_.emplace_back(p.tensor().size(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::Tensor& tensor = params_[k].tensor();
    if (tensor.size() != first_[k].size()) {
      throw ContractError("Adam: parameter " + params_[k].name + " changed size from " +
                          std::to_string(first_[k].size()) + " to " + std::to_string(tensor.size()));
    }
    if (!tensor.requires_grad()) continue;
    auto values = tensor.data();
    auto grads = std::as_const(tensor).grad();
    const std::vector<bool>* frozen = params_[k].frozen;
    auto& m = first_[k];
    auto& v = second_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (frozen != nullptr && (*frozen)[i]) continue;
      const double g = grads[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be > 0");
  if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ContractError("dropout keep must be in (0, 1]");
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
}

ModelParams build_model(const TrainConfig& config, const std::vector<Sentence>& corpus,
                        std::optional<WordVocab> embeddings) {
  std::vector<std::string> tokens;
  for (const auto& s : corpus) tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
  ModelConfig model = config.model;
  WordVocab words;
  if (embeddings) {
    model.d_word = embeddings->dim();
    words = std::move(*embeddings);
  } else {
    Rng rng(config.seed ^ 0x5eedf00dULL);
    words = WordVocab::random(tokens, model.d_word, rng);
  }
  return ModelParams::init(model, LabelSet::bio(), std::move(words), tokens, config.seed);
}

const RegionFeatures& features_for(const FeatureMap& features, const Sentence& sentence) {
  auto it = features.find(sentence.image_id);
  if (it == features.end()) throw ContractError("no region features loaded for image '" + sentence.image_id + "'");
  return it->second;
}

std::vector<LossRecord> train(const TrainConfig& config, const std::vector<Sentence>& corpus,
                              const FeatureMap& features, ModelParams& params, const EpochCallback& on_epoch) {
  config.validate();
  if (corpus.empty()) throw ContractError("train: empty corpus");
  Rng rng(config.seed + 0x9e3779b97f4a7c15ULL);
  Adam adam(params.trainable(), AdamOptions{config.learning_rate});
  ForwardOptions options{Mode::kTrain, config.dropout_keep, &rng, false};

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LossRecord> log;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      ++batch_no;
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<Example> batch;
      for (std::size_t k = start; k < stop; ++k) {
        const Sentence& s = corpus[order[k]];
        batch.push_back({&s, &features_for(features, s)});
      }
      ad::Tape tape;
      params.zero_grad();
      ad::Tensor loss = batch_loss(tape, batch, params, options);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "non-finite loss " << value << " at epoch " << epoch << ", batch " << batch_no << " (sentences";
        for (std::size_t k = start; k < stop; ++k) os << ' ' << order[k];
        os << ")";
        throw std::runtime_error(os.str());
      }
      tape.backward(loss);
      adam.step();
      log.push_back({epoch, batch_no, value});
    }
    if (on_epoch) on_epoch(epoch, params);
  }
  return log;
}

std::string format_loss_csv(const std::vector<LossRecord>& log) {
  std::ostringstream os;
  os << "epoch,batch,loss\n";
  os.precision(17);
  for (const auto& r : log) os << r.epoch << ',' << r.batch << ',' << r.loss << '\n';
  return os.str();
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << format_loss_csv(log);
}

std::vector<double> epoch_means(const std::vector<LossRecord>& log) {
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (const auto& r : log) {
    if (sums.size() < r.epoch) {
      sums.resize(r.epoch, 0.0);
      counts.resize(r.epoch, 0);
    }
    sums[r.epoch - 1] += r.loss;
    ++counts[r.epoch - 1];
  }
  for (std::size_t i = 0; i < sums.size(); ++i)
    if (counts[i] > 0) sums[i] /= static_cast<double>(counts[i]);
  return sums;
}

}  // namespace mmner

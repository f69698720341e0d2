// Command-line front end: train, eval, tag, gradcheck, synth, export-attn.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mmner/checkpoint.hpp"
#include "mmner/train.hpp"

namespace fs = std::filesystem;
using namespace mmner;

namespace {

struct DataArgs {
  std::string data;
  std::string features_dir;
  std::string checkpoint;

  void add(CLI::App* cmd, bool with_checkpoint) {
    cmd->add_option("--data", data, "Corpus file (token<TAB>tag, #img headers)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--features-dir", features_dir, "Directory of <image_id>.rft region files");
    if (with_checkpoint)
      cmd->add_option("--checkpoint", checkpoint, "Model checkpoint (.mner)")->required()->check(CLI::ExistingFile);
  }
};

ModelConfig parse_dims(const std::string& text, ModelConfig base) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    std::size_t used = 0;
    unsigned long x = 0;
    try {
      x = std::stoul(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size() || part.empty()) throw CLI::ValidationError("--dims", "expected d_word,d_char[,d_h]");
    v.push_back(x);
  }
  if (v.size() < 2 || v.size() > 3 || v[0] == 0 || v[1] == 0)
    throw CLI::ValidationError("--dims", "expected d_word,d_char[,d_h] with positive sizes");
  base.d_word = v[0];
  base.d_char = v[1];
  base.d_hidden = v.size() == 3 ? v[2] : 0;
  return base;
}

FeatureMap load_features(const std::string& dir, const std::vector<Sentence>& sentences, std::size_t dims) {
  return load_feature_set(dir.empty() ? fs::path() : fs::path(dir), sentences, dims);
}

// Missing images already take the width of the files that exist.
std::size_t feature_dims(const FeatureMap& features, std::size_t fallback) {
  return features.empty() ? fallback : features.begin()->second.dims;
}

void check_width(const FeatureMap& features, const ModelParams& params) {
  for (const auto& [id, f] : features) {
    if (f.dims != params.config.region_dims) {
      throw DimensionError("region features for '" + id + "' have " + std::to_string(f.dims) +
                           " dims, the checkpoint expects " + std::to_string(params.config.region_dims));
    }
  }
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch-%04zu.mner", epoch);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal named entity recognition with visual attention"};
  app.require_subcommand(1);

  // train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train a model and write per-epoch checkpoints");
  DataArgs train_data;
  train_data.add(train_cmd, false);
  TrainConfig cfg;
  std::string embeddings, dims, out_dir;
  train_cmd->add_option("--embeddings", embeddings, "Word vectors in text format (frozen)")->check(CLI::ExistingFile);
  train_cmd->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--dropout-keep", cfg.dropout_keep, "Dropout keep probability")->capture_default_str();
  train_cmd->add_option("--epochs", cfg.epochs, "Number of epochs")->required();
  train_cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--dims", dims, "d_word,d_char[,d_h] (default 16,8)");
  train_cmd->add_flag("--bypass-visual", cfg.model.bypass_visual, "Text-only baseline: skip visual attention");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  // eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Entity-level precision/recall/F1");
  DataArgs eval_data;
  eval_data.add(eval_cmd, true);
  std::string eval_out;
  eval_cmd->add_option("--out", eval_out, "Also write the report as CSV");

  // tag -----------------------------------------------------------------
  auto* tag_cmd = app.add_subcommand("tag", "Decode tags; tag columns in the input are optional");
  DataArgs tag_data;
  tag_data.add(tag_cmd, true);
  std::string tag_out;
  tag_cmd->add_option("--out", tag_out, "Write the tagged corpus here instead of stdout");

  // gradcheck -----------------------------------------------------------
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  GradcheckOptions grad_opts;
  grad_cmd->add_option("--seed", grad_opts.seed)->capture_default_str();
  grad_cmd->add_flag("--bypass-visual", grad_opts.bypass_visual);
  grad_cmd->add_option("--corrupt-rule", grad_opts.corrupt_rule, "Negative control: sabotage a backward rule")
      ->check(CLI::IsMember({"sigmoid", "tanh", "relu", "matmul"}));

  // synth ---------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic visually-disambiguated corpus");
  SynthOptions synth_opts;
  std::string synth_out;
  synth_cmd->add_option("--seed", synth_opts.seed)->capture_default_str();
  synth_cmd->add_option("--sentences", synth_opts.sentences)->capture_default_str();
  synth_cmd->add_option("--regions", synth_opts.regions)->capture_default_str();
  synth_cmd->add_option("--region-dims", synth_opts.region_dims)->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  // export-attn ---------------------------------------------------------
  auto* attn_cmd = app.add_subcommand("export-attn", "Export a region attention heatmap");
  DataArgs attn_data;
  attn_data.add(attn_cmd, true);
  std::size_t sentence_index = 0, query_index = 0, token_index = 0;
  std::string attn_out;
  attn_cmd->add_option("--sentence", sentence_index, "0-based sentence index")->capture_default_str();
  attn_cmd->add_option("--query", query_index, "0-based query token index")->capture_default_str();
  attn_cmd->add_option("--token", token_index, "0-based attended token index")->capture_default_str();
  attn_cmd->add_option("--out", attn_out, "Output prefix (.csv and .pgm are appended)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      if (!dims.empty()) cfg.model = parse_dims(dims, cfg.model);
      cfg.validate();
      const Corpus corpus = load_corpus(train_data.data);
      if (corpus.sentences.empty()) throw ContractError("training corpus is empty");
      const FeatureMap features = load_features(train_data.features_dir, corpus.sentences, cfg.model.region_dims);
      cfg.model.region_dims = feature_dims(features, cfg.model.region_dims);
      std::optional<WordVocab> vectors;
      if (!embeddings.empty()) vectors = WordVocab::load_text(embeddings);
      ModelParams params = build_model(cfg, corpus.sentences, std::move(vectors));

      fs::create_directories(out_dir);
      std::cout << "training on " << corpus.sentences.size() << " sentences, d_e=" << params.config.d_e()
                << ", regions " << params.config.region_dims << "-dim"
                << (cfg.model.bypass_visual ? ", visual attention bypassed" : "") << '\n';
      auto on_epoch = [&](std::size_t epoch, ModelParams& p) {
        save_checkpoint(fs::path(out_dir) / epoch_name(epoch), p);
        save_checkpoint(fs::path(out_dir) / "model.mner", p);
        std::cout << "epoch " << epoch << " checkpoint " << (fs::path(out_dir) / epoch_name(epoch)).string()
                  << '\n';
      };
      const auto log = train(cfg, corpus.sentences, features, params, on_epoch);
      write_loss_csv(fs::path(out_dir) / "loss.csv", log);
      const auto means = epoch_means(log);
      std::cout << std::setprecision(6) << "final epoch mean loss " << means.back() << '\n';
      return 0;
    }

    if (*eval_cmd || *tag_cmd || *attn_cmd) {
      DataArgs& args = *eval_cmd ? eval_data : *tag_cmd ? tag_data : attn_data;
      ModelParams params = load_checkpoint(args.checkpoint);
      LoadOptions load;
      load.require_tags = !*tag_cmd;
      const Corpus corpus = load_corpus(args.data, load);
      const FeatureMap features = load_features(args.features_dir, corpus.sentences, params.config.region_dims);
      check_width(features, params);

      if (*eval_cmd) {
        const EvalReport report = evaluate(params, corpus.sentences, features);
        std::cout << report.table();
        if (!eval_out.empty()) {
          std::ofstream out(eval_out);
          if (!out) throw FormatError("cannot write " + eval_out);
          out << report.csv();
        }
      } else if (*tag_cmd) {
        std::vector<Sentence> tagged = corpus.sentences;
        const auto predicted = predict(params, corpus.sentences, features);
        for (std::size_t i = 0; i < tagged.size(); ++i) tagged[i].tags = predicted[i];
        if (tag_out.empty()) {
          std::cout << format_corpus(tagged);
        } else {
          write_corpus(tag_out, tagged);
        }
      } else {
        if (sentence_index >= corpus.sentences.size()) {
          throw ContractError("--sentence " + std::to_string(sentence_index) + " out of range (corpus has " +
                              std::to_string(corpus.sentences.size()) + ")");
        }
        const Sentence& s = corpus.sentences[sentence_index];
        const AttentionMap map = attention_map(s, features_for(features, s), params, query_index, token_index);
        for (const auto& path : export_attention(map, attn_out)) std::cout << "wrote " << path.string() << '\n';
        if (map.side == 0)
          std::cout << "note: " << map.weights.size() << " regions is not a square grid, heatmap image skipped\n";
      }
      return 0;
    }

    if (*grad_cmd) {
      const GradcheckReport report = gradcheck(grad_opts);
      std::cout << report.format();
      return report.pass ? 0 : 1;
    }

    if (*synth_cmd) {
      const SynthCorpus corpus = synth_corpus(synth_opts);
      write_synth(synth_out, corpus);
      std::cout << "wrote " << corpus.sentences.size() << " sentences to " << (fs::path(synth_out) / "corpus.txt").string()
                << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

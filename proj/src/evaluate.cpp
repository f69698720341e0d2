#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "mmner/train.hpp"

namespace mmner {

namespace {

void finalize(SpanScores& s) {
  s.precision = s.predicted == 0 ? 0.0 : static_cast<double>(s.matched) / static_cast<double>(s.predicted);
  s.recall = s.gold == 0 ? 0.0 : static_cast<double>(s.matched) / static_cast<double>(s.gold);
  const double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
}

}  // namespace

EvalReport score_spans(const std::vector<std::vector<std::string>>& gold,
                       const std::vector<std::vector<std::string>>& predicted) {
  if (gold.size() != predicted.size()) {
    throw ContractError("score_spans: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(predicted.size()) + " predicted sentences");
  }
  EvalReport report;
  for (const auto& type : LabelSet::entity_types()) report.per_type[type] = {};
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != predicted[s].size()) {
      throw ContractError("score_spans: sentence " + std::to_string(s) + " length mismatch");
    }
    const auto g = extract_spans(gold[s]);
    const auto p = extract_spans(predicted[s]);
    const std::set<Span> gold_set(g.begin(), g.end());
    for (const auto& span : g) ++report.per_type[span.type].gold;
    for (const auto& span : p) {
      ++report.per_type[span.type].predicted;
      if (gold_set.contains(span)) ++report.per_type[span.type].matched;
    }
  }
  for (auto& [type, scores] : report.per_type) {
    report.overall.gold += scores.gold;
    report.overall.predicted += scores.predicted;
    report.overall.matched += scores.matched;
    finalize(scores);
  }
  finalize(report.overall);
  return report;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(9) << "type" << std::right << std::setw(7) << "gold" << std::setw(7) << "pred"
     << std::setw(7) << "match" << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(9) << "f1"
     << '\n';
  auto line = [&](const std::string& name, const SpanScores& s) {
    os << std::left << std::setw(9) << name << std::right << std::setw(7) << s.gold << std::setw(7) << s.predicted
       << std::setw(7) << s.matched << std::fixed << std::setprecision(4) << std::setw(11) << s.precision
       << std::setw(9) << s.recall << std::setw(9) << s.f1 << '\n';
  };
  for (const auto& [type, s] : per_type) line(type, s);
  line("overall", overall);
  return os.str();
}

std::string EvalReport::csv() const {
  std::ostringstream os;
  os << "type,gold,predicted,matched,precision,recall,f1\n";
  os.precision(10);
  auto line = [&](const std::string& name, const SpanScores& s) {
    os << name << ',' << s.gold << ',' << s.predicted << ',' << s.matched << ',' << s.precision << ',' << s.recall
       << ',' << s.f1 << '\n';
  };
  for (const auto& [type, s] : per_type) line(type, s);
  line("overall", overall);
  return os.str();
}

std::vector<std::vector<std::string>> predict(const ModelParams& params, const std::vector<Sentence>& corpus,
                                              const FeatureMap& features) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(tag(s, features_for(features, s), params));
  return out;
}

EvalReport evaluate(const ModelParams& params, const std::vector<Sentence>& corpus, const FeatureMap& features) {
  std::vector<std::vector<std::string>> gold;
  gold.reserve(corpus.size());
  for (const auto& s : corpus) gold.push_back(s.tags);
  return score_spans(gold, predict(params, corpus, features));
}

AttentionMap attention_map(const Sentence& sentence, const RegionFeatures& features, const ModelParams& params,
                           std::size_t query_index, std::size_t token_index) {
  const std::size_t n = sentence.tokens.size();
  if (query_index >= n || token_index >= n) {
    throw ContractError("attention_map: indices (" + std::to_string(query_index) + ", " +
                        std::to_string(token_index) + ") out of range for " + std::to_string(n) + " tokens");
  }
  if (params.config.bypass_visual) throw ContractError("attention_map: model was trained without visual attention");
  ad::Tape tape;
  ForwardOptions options;
  options.record_trace = true;
  ForwardResult r = forward(tape, sentence, features, params, options);
  AttentionMap map;
  const auto w = r.trace.regions_for(query_index, token_index);
  map.weights.assign(w.begin(), w.end());
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(w.size()))));
  map.side = side * side == w.size() ? side : 0;
  return map;
}

std::vector<std::filesystem::path> export_attention(const AttentionMap& map, const std::filesystem::path& prefix) {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  std::vector<std::filesystem::path> written;
  const std::filesystem::path csv_path = prefix.string() + ".csv";
  {
    std::ofstream out(csv_path);
    if (!out) throw FormatError("cannot write " + csv_path.string());
    out << "region,weight\n";
    out.precision(17);
    for (std::size_t j = 0; j < map.weights.size(); ++j) out << j << ',' << map.weights[j] << '\n';
  }
  written.push_back(csv_path);
  if (map.side == 0) return written;

  double top = 0.0;
  for (double w : map.weights) top = std::max(top, w);
  const std::filesystem::path pgm_path = prefix.string() + ".pgm";
  std::ofstream out(pgm_path);
  if (!out) throw FormatError("cannot write " + pgm_path.string());
  out << "P2\n" << map.side << ' ' << map.side << "\n255\n";
  for (std::size_t r = 0; r < map.side; ++r) {
    for (std::size_t c = 0; c < map.side; ++c) {
      const double w = map.weights[r * map.side + c];
      const long pixel = top > 0.0 ? std::lround(255.0 * w / top) : 0;
      out << (c ? " " : "") << pixel;
    }
    out << '\n';
  }
  written.push_back(pgm_path);
  return written;
}

}  // namespace mmner

#include "mmner/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mmner {

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    if (lead >= 0xF8 || i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// WordVocab

void WordVocab::index_tokens() {
  index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  unk_ = index_.at(std::string(kUnkToken));
  pad_ = index_.at(std::string(kPadToken));
}

WordVocab WordVocab::random(const std::vector<std::string>& tokens, std::size_t dim, Rng& rng) {
  std::vector<std::string> list{std::string(kPadToken), std::string(kUnkToken)};
  std::unordered_map<std::string, bool> seen{{list[0], true}, {list[1], true}};
  for (const auto& t : tokens)
    if (seen.emplace(t, true).second) list.push_back(t);
  const double limit = 1.0 / std::sqrt(static_cast<double>(dim));
  ad::Tensor table = uniform_tensor(rng, {list.size(), dim}, -limit, limit, false);
  return from_table(std::move(list), std::move(table));
}

WordVocab WordVocab::from_table(std::vector<std::string> tokens, ad::Tensor table) {
  if (table.rank() != 2 || table.dim(0) != tokens.size()) {
    throw DimensionError("word table " + ad::to_string(table.shape()) + " does not match " +
                         std::to_string(tokens.size()) + " tokens");
  }
  if (table.requires_grad()) table = table.detach();
  WordVocab v;
  v.tokens_ = std::move(tokens);
  v.table_ = std::move(table);
  v.index_tokens();
  if (v.index_.size() != v.tokens_.size()) throw FormatError("word vocabulary contains duplicate tokens");
  return v;
}

WordVocab WordVocab::load_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file " + path.string());
  std::vector<std::string> tokens;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (!ls.eof()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value");
    if (line_no == 1 && row.size() == 1 && token.find_first_not_of("0123456789") == std::string::npos) {
      // "<count> <dim>" header
      dim = static_cast<std::size_t>(row[0]);
      continue;
    }
    if (dim == 0) dim = row.size();
    if (row.size() != dim || dim == 0) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                        " values, found " + std::to_string(row.size()));
    }
    tokens.push_back(token);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (tokens.empty()) throw FormatError("embedding file " + path.string() + " has no vectors");
  for (auto special : {kPadToken, kUnkToken}) {
    bool present = false;
    for (const auto& t : tokens) present = present || t == special;
    if (!present) {
      tokens.emplace_back(special);
      values.insert(values.end(), dim, 0.0);
    }
  }
  const std::size_t n = tokens.size();
  return from_table(std::move(tokens), ad::Tensor::from({n, dim}, std::move(values)));
}

std::size_t WordVocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_ : it->second;
}

// ---------------------------------------------------------------------------
// CharVocab

void CharVocab::index_chars() {
  index_.clear();
  for (std::size_t i = 0; i < chars_.size(); ++i) index_.emplace(chars_[i], i);
  unk_ = index_.at(std::string(kUnkToken));
  pad_ = index_.at(std::string(kPadToken));
}

CharVocab CharVocab::build(const std::vector<std::string>& words, std::size_t dim, Rng& rng) {
  std::vector<std::string> list{std::string(kPadToken), std::string(kUnkToken)};
  std::unordered_map<std::string, bool> seen{{list[0], true}, {list[1], true}};
  for (const auto& w : words)
    for (auto& c : utf8_chars(w))
      if (seen.emplace(c, true).second) list.push_back(c);
  ad::Tensor table = uniform_tensor(rng, {list.size(), dim}, -0.5, 0.5, true);
  return from_table(std::move(list), std::move(table));
}

CharVocab CharVocab::from_table(std::vector<std::string> chars, ad::Tensor table) {
  if (table.rank() != 2 || table.dim(0) != chars.size()) {
    throw DimensionError("char table " + ad::to_string(table.shape()) + " does not match " +
                         std::to_string(chars.size()) + " characters");
  }
  CharVocab v;
  v.chars_ = std::move(chars);
  v.table_ = std::move(table);
  v.index_chars();
  return v;
}

std::size_t CharVocab::lookup(std::string_view ch) const {
  auto it = index_.find(std::string(ch));
  return it == index_.end() ? unk_ : it->second;
}

std::vector<std::size_t> CharVocab::encode(std::string_view word) const {
  std::vector<std::size_t> ids;
  for (const auto& c : utf8_chars(word)) ids.push_back(lookup(c));
  return ids;
}

CharCnn CharCnn::init(std::size_t d_char, std::size_t width, Rng& rng) {
  CharCnn cnn;
  cnn.width = width;
  cnn.weight = xavier(rng, width * d_char, d_char);
  cnn.bias = ad::Tensor::zeros({d_char}, true);
  return cnn;
}

// ---------------------------------------------------------------------------

ad::Tensor embed_word(const WordVocab& vocab, std::string_view token) {
  const std::size_t row = vocab.lookup(token);
  const std::size_t d = vocab.dim();
  auto src = vocab.table().data().subspan(row * d, d);
  return ad::Tensor::vector(std::vector<double>(src.begin(), src.end()));
}

ad::Tensor embed_chars(ad::Tape& tape, const CharVocab& chars, const CharCnn& cnn, std::string_view word) {
  if (word.empty()) throw ContractError("embed_chars: empty word");
  std::vector<std::size_t> ids = chars.encode(word);
  const std::size_t k = cnn.width;
  while (ids.size() < k) ids.push_back(chars.pad_index());
  const std::size_t positions = ids.size() - k + 1;
  std::vector<std::size_t> windows;
  windows.reserve(positions * k);
  for (std::size_t t = 0; t < positions; ++t)
    for (std::size_t j = 0; j < k; ++j) windows.push_back(ids[t + j]);

  const std::size_t d = chars.dim();
  ad::Tensor gathered = ad::gather_rows(tape, chars.table(), windows);
  ad::Tensor unfolded = ad::reshape(tape, gathered, {positions, k * d});
  ad::Tensor response = ad::add(tape, ad::matmul(tape, unfolded, cnn.weight), cnn.bias);
  return ad::reduce_max(tape, response, 0);
}

ad::Tensor encode_sentence(ad::Tape& tape, const WordVocab& words, const CharVocab& chars, const CharCnn& cnn,
                           const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ContractError("encode_sentence: empty sentence");
  std::vector<std::size_t> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) rows.push_back(words.lookup(t));
  ad::Tensor word_part = ad::gather_rows(tape, words.table(), rows);
  std::vector<ad::Tensor> char_rows;
  char_rows.reserve(tokens.size());
  for (const auto& t : tokens) char_rows.push_back(embed_chars(tape, chars, cnn, t));
  ad::Tensor char_part = ad::stack_rows(tape, char_rows);
  return ad::concat_cols(tape, word_part, char_part);
}

}  // namespace mmner

#pragma once

// Token vectors: frozen word embeddings concatenated with a trained
// character CNN (width-k convolution, max over window positions).

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmner/random.hpp"
#include "mmner/tensor.hpp"

namespace mmner {

inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kPadToken = "<pad>";

/// Token -> row map over a frozen embedding table.
class WordVocab {
 public:
  WordVocab() = default;
  /// Vocabulary over `tokens` (deduplicated, first occurrence order) with
  /// random frozen rows of width `dim`.
  static WordVocab random(const std::vector<std::string>& tokens, std::size_t dim, Rng& rng);
  /// Rows taken from `table`; tokens must be unique and table [tokens×dim].
  static WordVocab from_table(std::vector<std::string> tokens, ad::Tensor table);
  /// Text embedding file: optional "<count> <dim>" header, then
  /// "token v1 ... vd" per line.
  static WordVocab load_text(const std::filesystem::path& path);

  std::size_t lookup(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  std::size_t dim() const { return table_.dim(1); }
  std::size_t unk_index() const { return unk_; }
  std::size_t pad_index() const { return pad_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const ad::Tensor& table() const { return table_; }
  ad::Tensor& table() { return table_; }

 private:
  void index_tokens();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  ad::Tensor table_;
  std::size_t unk_ = 0;
  std::size_t pad_ = 0;
};

/// Character inventory with a trained embedding table. Characters are
/// UTF-8 code points.
class CharVocab {
 public:
  CharVocab() = default;
  static CharVocab build(const std::vector<std::string>& words, std::size_t dim, Rng& rng);
  static CharVocab from_table(std::vector<std::string> chars, ad::Tensor table);

  std::size_t lookup(std::string_view ch) const;
  std::vector<std::size_t> encode(std::string_view word) const;
  std::size_t size() const { return chars_.size(); }
  std::size_t dim() const { return table_.dim(1); }
  std::size_t unk_index() const { return unk_; }
  std::size_t pad_index() const { return pad_; }
  const std::vector<std::string>& chars() const { return chars_; }
  const ad::Tensor& table() const { return table_; }
  ad::Tensor& table() { return table_; }

 private:
  void index_chars();

  std::vector<std::string> chars_;
  std::unordered_map<std::string, std::size_t> index_;
  ad::Tensor table_;
  std::size_t unk_ = 0;
  std::size_t pad_ = 0;
};

struct CharCnn {
  std::size_t width = 3;
  ad::Tensor weight;  // [width·d_char × d_char]
  ad::Tensor bias;    // [d_char]

  static CharCnn init(std::size_t d_char, std::size_t width, Rng& rng);
};

/// Split a UTF-8 string into code points. Invalid bytes become single units.
std::vector<std::string> utf8_chars(std::string_view text);

ad::Tensor embed_word(const WordVocab& vocab, std::string_view token);
ad::Tensor embed_chars(ad::Tape& tape, const CharVocab& chars, const CharCnn& cnn, std::string_view word);
/// Row i = [word(tokens[i]) ; chars(tokens[i])], shape [n × (d_word + d_char)].
ad::Tensor encode_sentence(ad::Tape& tape, const WordVocab& words, const CharVocab& chars, const CharCnn& cnn,
                           const std::vector<std::string>& tokens);

}  // namespace mmner

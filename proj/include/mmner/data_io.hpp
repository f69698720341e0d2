#pragma once

// Corpus, region-feature and synthetic-fixture I/O.
//
// Corpus format (UTF-8): a sentence starts with an optional "#img <id>"
// header ("IMGID:<id>" is accepted too), then one "token<TAB>tag" line per
// token, terminated by a blank line or end of file.
//
// Region-feature file: "RFT1", u32 N, u32 d_i, then N·d_i float32 values,
// all little-endian, stored as <dir>/<image_id>.rft.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmner/crf.hpp"
#include "mmner/visual_attention.hpp"

namespace mmner {

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::string image_id;  // empty: no image

  bool operator==(const Sentence&) const = default;
};

/// Entity mention counts per type (PER, LOC, ORG, MISC) plus sentence count.
struct CorpusStats {
  std::size_t sentences = 0;
  std::map<std::string, std::size_t> mentions;

  std::size_t count(const std::string& type) const;
  std::size_t total_mentions() const;
};

struct Corpus {
  std::vector<Sentence> sentences;
  CorpusStats stats;
};

struct Span {
  std::size_t begin = 0;  // inclusive token index
  std::size_t end = 0;    // inclusive
  std::string type;
  auto operator<=>(const Span&) const = default;
};

/// Entity spans of a BIO sequence. An I-X that does not continue an X span
/// opens a new span.
std::vector<Span> extract_spans(const std::vector<std::string>& tags);

/// Empty when the tag sequence is well-formed BIO over the label set,
/// otherwise a description of the first problem.
std::string validate_bio(const std::vector<std::string>& tags, const LabelSet& labels);

/// Normalizes tag spellings: OTHER/OTHERS/MISC all map to MISC.
std::string normalize_tag(std::string_view tag);

CorpusStats compute_stats(const std::vector<Sentence>& sentences);

struct LoadOptions {
  /// When false, lines may carry only a token; tags default to "O".
  bool require_tags = true;
};

/// Throws FormatError listing every malformed line with its line number.
Corpus load_corpus(const std::filesystem::path& path, LoadOptions options = {});
Corpus parse_corpus(std::string_view text, const std::string& source, LoadOptions options = {});
std::string format_corpus(const std::vector<Sentence>& sentences);
void write_corpus(const std::filesystem::path& path, const std::vector<Sentence>& sentences);

void write_region_features(const std::filesystem::path& path, const RegionFeatures& features);
RegionFeatures read_region_features(const std::filesystem::path& path);
std::filesystem::path region_file(const std::filesystem::path& dir, const std::string& image_id);

/// Features for `image_id` from `dir`; a missing id (empty, or no file)
/// yields a single all-zero region of width `fallback_dims` and a warning on
/// stderr.
RegionFeatures load_region_features(const std::filesystem::path& dir, const std::string& image_id,
                                    std::size_t fallback_dims = 512);

/// Features for every image referenced by a corpus, keyed by image id.
/// Missing images fall back to a zero region whose width matches the others.
std::map<std::string, RegionFeatures> load_feature_set(const std::filesystem::path& dir,
                                                       const std::vector<Sentence>& sentences,
                                                       std::size_t fallback_dims = 512);

// ---------------------------------------------------------------------------
// Synthetic visually-disambiguated corpus

inline constexpr std::string_view kAmbiguousToken = "apple";

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t sentences = 40;
  std::size_t regions = 49;
  std::size_t region_dims = 16;
  std::size_t signal_regions = 7;
};

struct SynthCorpus {
  std::vector<Sentence> sentences;
  std::map<std::string, RegionFeatures> features;
  /// Regions carrying the planted class signal, per image id.
  std::map<std::string, std::vector<std::size_t>> signal_regions;
  CorpusStats stats;
};

/// Sentences come in pairs with identical text: one tags the ambiguous
/// token B-LOC, the other B-ORG, and only the region features differ (the
/// first half of the feature dims is raised on the signal regions for LOC,
/// the second half for ORG).
SynthCorpus synth_corpus(const SynthOptions& options);

/// Writes <dir>/corpus.txt and <dir>/features/<id>.rft.
void write_synth(const std::filesystem::path& dir, const SynthCorpus& corpus);

}  // namespace mmner

#include "mmner/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "mmner/random.hpp"

namespace mmner {

namespace {

constexpr std::array<char, 4> kRegionMagic{'R', 'F', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::size_t CorpusStats::count(const std::string& type) const {
  auto it = mentions.find(type);
  return it == mentions.end() ? 0 : it->second;
}

std::size_t CorpusStats::total_mentions() const {
  std::size_t total = 0;
  for (const auto& [type, n] : mentions) total += n;
  return total;
}

std::string normalize_tag(std::string_view tag) {
  std::string t(tag);
  for (std::string_view other : {"OTHER", "OTHERS"}) {
    for (std::string_view prefix : {"B-", "I-"}) {
      if (t == std::string(prefix) + std::string(other)) return std::string(prefix) + "MISC";
    }
  }
  return t;
}

std::vector<Span> extract_spans(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  std::optional<Span> open;
  auto close = [&] {
    if (open) spans.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (starts_with(tag, "B-")) {
      close();
      open = Span{i, i, tag.substr(2)};
    } else if (starts_with(tag, "I-")) {
      const std::string type = tag.substr(2);
      if (open && open->type == type) {
        open->end = i;
      } else {
        close();
        open = Span{i, i, type};
      }
    } else {
      close();
    }
  }
  close();
  return spans;
}

std::string validate_bio(const std::vector<std::string>& tags, const LabelSet& labels) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!labels.index(tags[i])) return "invalid tag '" + tags[i] + "' at token " + std::to_string(i + 1);
    if (starts_with(tags[i], "I-")) {
      const std::string type = tags[i].substr(2);
      const bool continues = i > 0 && (tags[i - 1] == "B-" + type || tags[i - 1] == "I-" + type);
      if (!continues) return "'" + tags[i] + "' at token " + std::to_string(i + 1) + " does not continue a " + type +
                             " entity";
    }
  }
  return {};
}

CorpusStats compute_stats(const std::vector<Sentence>& sentences) {
  CorpusStats stats;
  stats.sentences = sentences.size();
  for (const auto& type : LabelSet::entity_types()) stats.mentions[type] = 0;
  for (const auto& s : sentences)
    for (const auto& span : extract_spans(s.tags)) ++stats.mentions[span.type];
  return stats;
}

Corpus parse_corpus(std::string_view text, const std::string& source, LoadOptions options) {
  const LabelSet labels = LabelSet::bio();
  Corpus corpus;
  std::vector<std::string> errors;
  Sentence current;
  std::size_t sentence_line = 0;
  bool has_header = false;

  auto finish = [&] {
    if (!current.tokens.empty()) {
      const std::string problem = validate_bio(current.tags, labels);
      if (!problem.empty()) {
        errors.push_back(source + ":" + std::to_string(sentence_line) + ": " + problem);
      } else {
        corpus.sentences.push_back(std::move(current));
      }
    } else if (has_header) {
      errors.push_back(source + ":" + std::to_string(sentence_line) + ": image header without tokens");
    }
    current = Sentence{};
    has_header = false;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos && pos == text.size()) break;
    std::string_view line = trim_cr(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (trim(line).empty()) {
      finish();
      continue;
    }
    std::string header_id;
    bool is_header = false;
    if (starts_with(line, "#img")) {
      is_header = true;
      header_id = trim(line.substr(4));
    } else if (starts_with(line, "IMGID:")) {
      is_header = true;
      header_id = trim(line.substr(6));
    }
    if (is_header) {
      if (!current.tokens.empty() || has_header) finish();
      current.image_id = header_id;
      has_header = true;
      sentence_line = line_no;
      continue;
    }
    if (current.tokens.empty() && !has_header) sentence_line = line_no;

    const auto tab = line.find('\t');
    std::string token = std::string(tab == std::string_view::npos ? line : line.substr(0, tab));
    std::string tag = tab == std::string_view::npos ? std::string() : trim(line.substr(tab + 1));
    if (token.empty()) {
      errors.push_back(source + ":" + std::to_string(line_no) + ": empty token");
      continue;
    }
    if (tag.empty()) {
      if (options.require_tags) {
        errors.push_back(source + ":" + std::to_string(line_no) + ": missing tag for token '" + token + "'");
        continue;
      }
      tag = "O";
    }
    tag = normalize_tag(tag);
    if (!labels.index(tag)) {
      errors.push_back(source + ":" + std::to_string(line_no) + ": invalid tag '" + tag + "'");
      continue;
    }
    current.tokens.push_back(std::move(token));
    current.tags.push_back(std::move(tag));
  }
  finish();

  if (!errors.empty()) {
    std::ostringstream os;
    os << errors.size() << " malformed entr" << (errors.size() == 1 ? "y" : "ies") << " in " << source << ":";
    for (const auto& e : errors) os << "\n  " << e;
    throw FormatError(os.str());
  }
  corpus.stats = compute_stats(corpus.sentences);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, LoadOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), path.string(), options);
}

std::string format_corpus(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!s.image_id.empty()) out += "#img " + s.image_id + "\n";
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out += s.tokens[i] + "\t" + s.tags[i] + "\n";
    out += "\n";
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write corpus " + path.string());
  out << format_corpus(sentences);
}

// ---------------------------------------------------------------------------
// Region features

void write_region_features(const std::filesystem::path& path, const RegionFeatures& features) {
  if (features.values.size() != features.regions * features.dims) {
    throw DimensionError("region features: value count does not match N x d_i");
  }
  std::string bytes(kRegionMagic.begin(), kRegionMagic.end());
  put_u32(bytes, static_cast<std::uint32_t>(features.regions));
  put_u32(bytes, static_cast<std::uint32_t>(features.dims));
  for (double v : features.values) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write region file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

RegionFeatures read_region_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open region file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || !std::equal(kRegionMagic.begin(), kRegionMagic.end(), bytes.begin())) {
    throw FormatError(path.string() + ": bad magic, expected RFT1");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  RegionFeatures f;
  f.regions = get_u32(p + 4);
  f.dims = get_u32(p + 8);
  const std::size_t expected = 12 + 4 * f.regions * f.dims;
  if (bytes.size() != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  if (f.regions == 0 || f.dims == 0) throw FormatError(path.string() + ": empty region matrix");
  f.values.resize(f.regions * f.dims);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const float x = std::bit_cast<float>(get_u32(p + 12 + 4 * i));
    f.values[i] = static_cast<double>(x);
  }
  return f;
}

std::filesystem::path region_file(const std::filesystem::path& dir, const std::string& image_id) {
  return dir / (image_id + ".rft");
}

RegionFeatures load_region_features(const std::filesystem::path& dir, const std::string& image_id,
                                    std::size_t fallback_dims) {
  if (!image_id.empty()) {
    const auto path = region_file(dir, image_id);
    if (std::filesystem::exists(path)) return read_region_features(path);
    std::cerr << "warning: no region features for image '" << image_id << "', using a zero region\n";
  } else {
    std::cerr << "warning: sentence has no image, using a zero region\n";
  }
  return RegionFeatures::zeros(1, fallback_dims);
}

std::map<std::string, RegionFeatures> load_feature_set(const std::filesystem::path& dir,
                                                       const std::vector<Sentence>& sentences,
                                                       std::size_t fallback_dims) {
  std::map<std::string, RegionFeatures> out;
  std::set<std::string> missing;
  for (const auto& s : sentences) {
    if (out.contains(s.image_id) || missing.contains(s.image_id)) continue;
    const auto path = region_file(dir, s.image_id);
    if (!s.image_id.empty() && !dir.empty() && std::filesystem::exists(path)) {
      out.emplace(s.image_id, read_region_features(path));
    } else {
      missing.insert(s.image_id);
    }
  }
  std::size_t dims = fallback_dims;
  if (!out.empty()) dims = out.begin()->second.dims;
  for (const auto& [id, f] : out) {
    if (f.dims != dims) {
      throw FormatError("region file for '" + id + "' has " + std::to_string(f.dims) + " dims, expected " +
                        std::to_string(dims));
    }
  }
  for (const auto& id : missing) {
    std::cerr << "warning: no region features for image '" << id << "', using a zero region\n";
    out.emplace(id, RegionFeatures::zeros(1, dims));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct Template {
  std::vector<std::string_view> words;  // slot markers: {A} {P} {O} {L}
};

const std::vector<Template>& templates() {
  static const std::vector<Template> t{
      {{"{A}", "is", "trending", "today"}},
      {{"{P}", "visited", "{A}", "yesterday"}},
      {{"photos", "from", "{A}", "look", "great"}},
      {{"{P}", "talks", "about", "{A}", "and", "{O}"}},
      {{"new", "store", "near", "{L}", "by", "{A}"}},
      {{"{A}", "with", "{P}", "tonight"}},
  };
  return t;
}

const std::vector<std::vector<std::string>>& person_names() {
  static const std::vector<std::vector<std::string>> names{
      {"john", "smith"}, {"maria", "lopez"}, {"ahmed"}, {"li", "wei"}, {"sara"}, {"tom", "baker"}};
  return names;
}

const std::vector<std::string>& org_names() {
  static const std::vector<std::string> names{"google", "microsoft", "nasa"};
  return names;
}

const std::vector<std::string>& loc_names() {
  static const std::vector<std::string> names{"paris", "london", "texas"};
  return names;
}

Sentence instantiate(const Template& t, Rng& rng) {
  Sentence s;
  for (auto w : t.words) {
    if (w == "{A}") {
      s.tokens.emplace_back(kAmbiguousToken);
      s.tags.emplace_back("B-LOC");  // class applied later
    } else if (w == "{P}") {
      const auto& name = person_names()[rng.index(person_names().size())];
      for (std::size_t i = 0; i < name.size(); ++i) {
        s.tokens.push_back(name[i]);
        s.tags.emplace_back(i == 0 ? "B-PER" : "I-PER");
      }
    } else if (w == "{O}") {
      s.tokens.push_back(org_names()[rng.index(org_names().size())]);
      s.tags.emplace_back("B-ORG");
    } else if (w == "{L}") {
      s.tokens.push_back(loc_names()[rng.index(loc_names().size())]);
      s.tags.emplace_back("B-LOC");
    } else {
      s.tokens.emplace_back(w);
      s.tags.emplace_back("O");
    }
  }
  return s;
}

}  // namespace

SynthCorpus synth_corpus(const SynthOptions& options) {
  if (options.sentences < 2) throw ContractError("synth_corpus: need at least 2 sentences");
  if (options.region_dims < 2 || options.regions == 0 || options.signal_regions == 0 ||
      options.signal_regions > options.regions) {
    throw ContractError("synth_corpus: invalid region layout");
  }
  Rng rng(options.seed);
  SynthCorpus out;
  const std::size_t half = options.region_dims / 2;

  auto make_image = [&](const std::string& id, bool is_loc) {
    RegionFeatures f = RegionFeatures::zeros(options.regions, options.region_dims);
    for (double& v : f.values) v = rng.uniform(0.0, 0.2);
    std::vector<std::size_t> order(options.regions);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < options.signal_regions; ++i) {
      const std::size_t j = i + rng.index(order.size() - i);
      std::swap(order[i], order[j]);
    }
    std::vector<std::size_t> signal(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(options.signal_regions));
    std::sort(signal.begin(), signal.end());
    const std::size_t lo = is_loc ? 0 : half;
    const std::size_t hi = is_loc ? half : options.region_dims;
    for (std::size_t r : signal)
      for (std::size_t d = lo; d < hi; ++d) f.values[r * options.region_dims + d] += 1.0 + rng.uniform(0.0, 0.2);
    for (double& v : f.values) v = static_cast<double>(static_cast<float>(v));  // what RFT1 stores
    out.features.emplace(id, std::move(f));
    out.signal_regions.emplace(id, std::move(signal));
  };

  std::size_t index = 0;
  auto emit = [&](Sentence s, bool is_loc) {
    char id[64];
    std::snprintf(id, sizeof(id), "s%llu_%04zu", static_cast<unsigned long long>(options.seed), index++);
    s.image_id = id;
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      if (s.tokens[i] == kAmbiguousToken) s.tags[i] = is_loc ? "B-LOC" : "B-ORG";
    make_image(s.image_id, is_loc);
    out.sentences.push_back(std::move(s));
  };

  while (out.sentences.size() < options.sentences) {
    const Sentence text = instantiate(templates()[rng.index(templates().size())], rng);
    if (options.sentences - out.sentences.size() >= 2) {
      const bool loc_first = rng.uniform() < 0.5;
      emit(text, loc_first);
      emit(text, !loc_first);
    } else {
      emit(text, rng.uniform() < 0.5);
    }
  }
  out.stats = compute_stats(out.sentences);
  return out;
}

void write_synth(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  std::filesystem::create_directories(dir / "features");
  write_corpus(dir / "corpus.txt", corpus.sentences);
  for (const auto& [id, f] : corpus.features) write_region_features(region_file(dir / "features", id), f);
}

}  // namespace mmner

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <iterator>
#include <set>

#include "mmner/checkpoint.hpp"
#include "mmner/data_io.hpp"
#include "mmner/train.hpp"
#include "support.hpp"

using namespace mmner;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

// Emits a small corpus and counts its own entity mentions as it goes.
struct FixtureWriter {
  std::string text;
  std::map<std::string, std::size_t> counted;

  void sentence(const std::string& image, const std::vector<std::pair<std::string, std::string>>& tokens) {
    text += "#img " + image + "\n";
    for (const auto& [tok, tag] : tokens) {
      text += tok + "\t" + tag + "\n";
      if (tag.rfind("B-", 0) == 0) ++counted[tag.substr(2)];
    }
    text += "\n";
  }
};

}  // namespace

TEST_CASE("empty corpus") {
  auto c = parse_corpus("", "empty");
  CHECK(c.sentences.empty());
  CHECK(c.stats.sentences == 0);
  CHECK(c.stats.total_mentions() == 0);
}

TEST_CASE("stats agree with the fixture generator") {
  FixtureWriter w;
  w.sentence("img1", {{"Alice", "B-PER"}, {"Smith", "I-PER"}, {"left", "O"}});
  w.sentence("img2", {{"Paris", "B-LOC"}, {"is", "O"}, {"big", "O"}});
  w.sentence("img3", {{"Bob", "B-PER"}, {"waved", "O"}});
  testing::TempDir dir("corpus");
  std::ofstream(dir / "c.txt") << w.text;
  auto c = load_corpus(dir / "c.txt");
  CHECK(c.stats.sentences == 3);
  CHECK(c.stats.count("PER") == w.counted["PER"]);
  CHECK(c.stats.count("LOC") == w.counted["LOC"]);
  CHECK(c.stats.count("PER") == 2);
  CHECK(c.stats.count("LOC") == 1);
  CHECK(c.stats.count("ORG") == 0);
  CHECK(c.stats.total_mentions() == 3);
  CHECK(c.sentences[1].image_id == "img2");
}

TEST_CASE("corpus round trip normalizes spellings") {
  const std::string raw = "IMGID:42\r\nAcme\tB-OTHER\r\nCorp\tI-OTHER\r\n\r\n#img 7\nhi\tO\n";
  auto c = parse_corpus(raw, "raw");
  REQUIRE(c.sentences.size() == 2);
  CHECK(c.sentences[0].tags == std::vector<std::string>{"B-MISC", "I-MISC"});
  const std::string formatted = format_corpus(c.sentences);
  CHECK(formatted == "#img 42\nAcme\tB-MISC\nCorp\tI-MISC\n\n#img 7\nhi\tO\n\n");
  auto again = parse_corpus(formatted, "again");
  CHECK(again.sentences == c.sentences);
  CHECK(format_corpus(again.sentences) == formatted);
}

TEST_CASE("malformed lines are reported with line numbers") {
  const std::string bad = "#img a\nx\tB-PER\ny\tB-FOO\n\n#img b\nz\tI-LOC\n\n#img c\nw\n";
  const std::string msg = error_of([&] { parse_corpus(bad, "bad.txt"); });
  CHECK(msg.find("bad.txt:3: invalid tag 'B-FOO'") != std::string::npos);
  CHECK(msg.find("bad.txt:5:") != std::string::npos);
  CHECK(msg.find("does not continue") != std::string::npos);
  CHECK(msg.find("bad.txt:9: missing tag") != std::string::npos);
  CHECK_THROWS_AS(parse_corpus(bad, "bad.txt"), FormatError);
  LoadOptions loose;
  loose.require_tags = false;
  CHECK(parse_corpus("#img c\nw\n", "t", loose).sentences[0].tags == std::vector<std::string>{"O"});
}

TEST_CASE("span extraction and BIO validation") {
  CHECK(extract_spans({"B-PER", "I-PER", "O", "B-LOC"}) ==
        std::vector<Span>{{0, 1, "PER"}, {3, 3, "LOC"}});
  CHECK(extract_spans({"I-ORG", "I-ORG", "B-ORG"}) == std::vector<Span>{{0, 1, "ORG"}, {2, 2, "ORG"}});
  const auto labels = LabelSet::bio();
  CHECK(validate_bio({"B-PER", "I-PER"}, labels).empty());
  CHECK_FALSE(validate_bio({"O", "I-PER"}, labels).empty());
  CHECK_FALSE(validate_bio({"B-LOC", "I-PER"}, labels).empty());
  CHECK_FALSE(validate_bio({"B-XYZ"}, labels).empty());
}

TEST_CASE("region features round trip bitwise") {
  testing::TempDir dir("rft");
  Rng rng(1);
  RegionFeatures f = RegionFeatures::zeros(49, 512);
  for (double& v : f.values) v = static_cast<float>(rng.uniform(-3, 3));
  const auto path = region_file(dir.path(), "img");
  write_region_features(path, f);
  CHECK(std::filesystem::file_size(path) == 12 + 49 * 512 * 4);
  auto g = read_region_features(path);
  CHECK(g.regions == 49);
  CHECK(g.dims == 512);
  CHECK(g.values == f.values);
  write_region_features(dir / "again.rft", g);
  CHECK(slurp(path) == slurp(dir / "again.rft"));
  CHECK(slurp(path).substr(0, 4) == "RFT1");
}

TEST_CASE("region file errors") {
  testing::TempDir dir("rft_bad");
  RegionFeatures f = RegionFeatures::zeros(2, 3);
  write_region_features(dir / "ok.rft", f);
  std::string bytes = slurp(dir / "ok.rft");
  std::ofstream(dir / "short.rft", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  const std::string msg = error_of([&] { read_region_features(dir / "short.rft"); });
  CHECK(msg.find("expected 36 bytes, found 31") != std::string::npos);
  bytes[0] = 'X';
  std::ofstream(dir / "magic.rft", std::ios::binary) << bytes;
  CHECK(error_of([&] { read_region_features(dir / "magic.rft"); }).find("bad magic") != std::string::npos);
}

TEST_CASE("missing image falls back to a zero region") {
  testing::TempDir dir("rft_missing");
  auto f = load_region_features(dir.path(), "nope");
  CHECK(f.regions == 1);
  CHECK(f.dims == 512);
  for (double v : f.values) CHECK(v == 0.0);
  CHECK(load_region_features(dir.path(), "").regions == 1);
}

TEST_CASE("feature sets match widths for missing images") {
  testing::TempDir dir("rft_set");
  write_region_features(region_file(dir.path(), "a"), RegionFeatures::zeros(4, 6));
  std::vector<Sentence> s{{{"x"}, {"O"}, "a"}, {{"y"}, {"O"}, "b"}};
  auto set = load_feature_set(dir.path(), s);
  CHECK(set.at("a").regions == 4);
  CHECK(set.at("b").regions == 1);
  CHECK(set.at("b").dims == 6);
}

TEST_CASE("synthetic corpus construction") {
  const auto labels = LabelSet::bio();
  for (std::size_t n : {2, 3, 40, 41}) {
    auto c = synth_corpus({.seed = 5, .sentences = n});
    REQUIRE(c.sentences.size() == n);
    std::size_t loc = 0, org = 0;
    for (const auto& s : c.sentences) {
      CHECK(validate_bio(s.tags, labels).empty());
      CHECK(c.features.count(s.image_id) == 1);
      for (std::size_t i = 0; i < s.tokens.size(); ++i)
        if (s.tokens[i] == kAmbiguousToken) (s.tags[i] == "B-LOC" ? loc : org) += 1;
    }
    CHECK(loc + org >= n);
    CHECK(std::max(loc, org) - std::min(loc, org) <= 1);
  }
}

TEST_CASE("synthetic pairs share text but not tags or features") {
  auto c = synth_corpus({.seed = 9, .sentences = 20});
  for (std::size_t k = 0; k + 1 < c.sentences.size(); k += 2) {
    const auto& a = c.sentences[k];
    const auto& b = c.sentences[k + 1];
    CHECK(a.tokens == b.tokens);
    CHECK(a.tags != b.tags);
    CHECK(c.features.at(a.image_id).values != c.features.at(b.image_id).values);
  }
}

TEST_CASE("planted signal separates the classes") {
  auto c = synth_corpus({.seed = 3, .sentences = 10});
  for (const auto& s : c.sentences) {
    bool is_loc = false;
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      if (s.tokens[i] == kAmbiguousToken) is_loc = s.tags[i] == "B-LOC";
    const auto& f = c.features.at(s.image_id);
    const auto& signal = c.signal_regions.at(s.image_id);
    CHECK(signal.size() == 7);
    for (std::size_t r : signal) {
      double first = 0, second = 0;
      for (std::size_t d = 0; d < f.dims / 2; ++d) first += f.at(r, d);
      for (std::size_t d = f.dims / 2; d < f.dims; ++d) second += f.at(r, d);
      CHECK((first > second) == is_loc);
    }
  }
}

TEST_CASE("synthetic output is byte-deterministic per seed") {
  testing::TempDir a("synth_a"), b("synth_b");
  write_synth(a.path(), synth_corpus({.seed = 11, .sentences = 6}));
  write_synth(b.path(), synth_corpus({.seed = 11, .sentences = 6}));
  CHECK(slurp(a / "corpus.txt") == slurp(b / "corpus.txt"));
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a / "features")) {
    ++files;
    CHECK(slurp(entry.path()) == slurp(b / "features" / entry.path().filename()));
  }
  CHECK(files == 6);
  auto reloaded = load_corpus(a / "corpus.txt");
  CHECK(reloaded.sentences == synth_corpus({.seed = 11, .sentences = 6}).sentences);
  CHECK(format_corpus(synth_corpus({.seed = 12, .sentences = 6}).sentences) != slurp(a / "corpus.txt"));
  CHECK_THROWS_AS(synth_corpus({.seed = 1, .sentences = 1}), ContractError);
}

TEST_CASE("tensor container round trip") {
  std::vector<NamedArray> t{{"a", {2, 2}, {1, -2.5, 3, 0.125}}, {"b.c", {3}, {0, 1, 2}}};
  auto bytes = encode_tensors(t);
  auto back = decode_tensors(bytes, "mem");
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK(back[0].shape == ad::Shape{2, 2});
  CHECK(back[0].values == t[0].values);
  CHECK(encode_tensors(back) == bytes);
  CHECK(error_of([&] { decode_tensors(bytes.substr(0, bytes.size() - 2), "mem"); }).find("truncated") !=
        std::string::npos);
  CHECK(error_of([&] { decode_tensors(bytes + "x", "mem"); }).find("trailing") != std::string::npos);
}

TEST_CASE("checkpoint round trip is bitwise") {
  testing::TempDir dir("ckpt");
  auto synth = synth_corpus({.seed = 2, .sentences = 4});
  TrainConfig cfg;
  cfg.epochs = 1;
  auto params = build_model(cfg, synth.sentences);
  save_checkpoint(dir / "m.mner", params);
  auto loaded = load_checkpoint(dir / "m.mner");
  save_checkpoint(dir / "again.mner", loaded);
  CHECK(slurp(dir / "m.mner") == slurp(dir / "again.mner"));
  CHECK(slurp(sidecar_path(dir / "m.mner")) == slurp(sidecar_path(dir / "again.mner")));
  CHECK(slurp(dir / "m.mner").substr(0, 4) == "MNER");

  const auto& s = synth.sentences[0];
  CHECK(tag(s, synth.features.at(s.image_id), loaded) ==
        tag(s, synth.features.at(s.image_id), load_checkpoint(dir / "again.mner")));
}

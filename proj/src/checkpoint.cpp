#include "mmner/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>

#include "json.hpp"

namespace mmner {

namespace {

constexpr std::uint32_t kVersion = 1;

void put(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  std::uint64_t get(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(source_ + ": truncated checkpoint, needed " + std::to_string(pos_ + n) + " bytes, found " +
                        std::to_string(bytes_.size()));
    }
  }
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::string encode_tensors(const std::vector<NamedArray>& tensors) {
  std::string out = "MNER";
  put(out, kVersion, 4);
  put(out, tensors.size(), 4);
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw ContractError("tensor name too long: " + t.name.substr(0, 32));
    if (t.shape.size() > 0xFF) throw ContractError("tensor rank too large: " + t.name);
    if (ad::element_count(t.shape) != t.values.size()) throw DimensionError("tensor " + t.name + " shape/value mismatch");
    put(out, t.name.size(), 2);
    out += t.name;
    put(out, t.shape.size(), 1);
    for (std::size_t d : t.shape) put(out, d, 4);
    for (double v : t.values) put(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
  }
  return out;
}

std::vector<NamedArray> decode_tensors(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  if (r.take(4) != "MNER") throw FormatError(source + ": bad magic, expected MNER");
  const auto version = r.get(4);
  if (version != kVersion) throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get(4);
  std::vector<NamedArray> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray t;
    t.name = std::string(r.take(r.get(2)));
    const auto rank = r.get(1);
    for (std::uint64_t k = 0; k < rank; ++k) t.shape.push_back(r.get(4));
    const std::size_t n = ad::element_count(t.shape);
    t.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.values[k] = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(r.get(4))));
    out.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError(source + ": trailing bytes after " + std::to_string(r.position()));
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_checkpoint(const std::filesystem::path& path, ModelParams& params) {
  std::vector<NamedArray> arrays;
  for (auto& ref : params.all()) {
    const ad::Tensor& t = ref.tensor();
    arrays.push_back({ref.name, t.shape(), {t.data().begin(), t.data().end()}});
  }
  write_file(path, encode_tensors(arrays));

  const ModelConfig& c = params.config;
  nlohmann::ordered_json meta;
  meta["format"] = "mmner-vocab";
  meta["version"] = 1;
  meta["config"] = {{"d_word", c.d_word},           {"d_char", c.d_char},
                    {"d_hidden", c.d_hidden},       {"char_width", c.char_width},
                    {"region_dims", c.region_dims}, {"bypass_visual", c.bypass_visual}};
  meta["labels"] = params.labels.names();
  meta["words"] = params.words.tokens();
  meta["chars"] = params.chars.chars();
  write_file(sidecar_path(path), meta.dump(1) + "\n");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  const auto arrays = decode_tensors(read_file(path), path.string());
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(sidecar_path(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar_path(path).string() + ": " + e.what());
  }

  ModelParams p;
  const auto& c = meta.at("config");
  p.config.d_word = c.at("d_word");
  p.config.d_char = c.at("d_char");
  p.config.d_hidden = c.at("d_hidden");
  p.config.char_width = c.at("char_width");
  p.config.region_dims = c.at("region_dims");
  p.config.bypass_visual = c.at("bypass_visual");
  p.labels = LabelSet(meta.at("labels").get<std::vector<std::string>>());

  auto tensor = [&](const std::string& name, bool requires_grad) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(path.string() + ": missing tensor " + name);
    return ad::Tensor::from(it->second->shape, it->second->values, requires_grad);
  };

  p.words = WordVocab::from_table(meta.at("words").get<std::vector<std::string>>(), tensor("embed.word", false));
  p.chars = CharVocab::from_table(meta.at("chars").get<std::vector<std::string>>(), tensor("embed.char", true));
  p.cnn.width = p.config.char_width;
  p.frozen_transitions = forbidden_transitions(p.labels);
  for (auto& ref : p.all()) {
    if (ref.name == "embed.word" || ref.name == "embed.char") continue;
    ref.tensor() = tensor(ref.name, true);
  }
  return p;
}

}  // namespace mmner

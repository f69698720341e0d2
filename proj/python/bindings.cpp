#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mmner/checkpoint.hpp"
#include "mmner/train.hpp"

namespace py = pybind11;
using namespace mmner;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ad::Tensor matrix(const Array& a, const char* what) {
  if (a.ndim() != 2) throw DimensionError(std::string(what) + " must be a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return ad::Tensor::from({rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_numpy(const ad::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

RegionFeatures features_from(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("region features must be a 2-D array [regions, dims]");
  RegionFeatures f;
  f.regions = static_cast<std::size_t>(a.shape(0));
  f.dims = static_cast<std::size_t>(a.shape(1));
  f.values.assign(a.data(), a.data() + f.regions * f.dims);
  return f;
}

Array features_to_numpy(const RegionFeatures& f) {
  Array out({static_cast<py::ssize_t>(f.regions), static_cast<py::ssize_t>(f.dims)});
  std::copy(f.values.begin(), f.values.end(), out.mutable_data());
  return out;
}

py::dict scores_dict(const SpanScores& s) {
  py::dict d;
  d["gold"] = s.gold;
  d["predicted"] = s.predicted;
  d["matched"] = s.matched;
  d["precision"] = s.precision;
  d["recall"] = s.recall;
  d["f1"] = s.f1;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d, types;
  for (const auto& [type, s] : r.per_type) types[py::str(type)] = scores_dict(s);
  d["per_type"] = types;
  d["overall"] = scores_dict(r.overall);
  return d;
}

// Python-facing model: owns parameters and accepts features as arrays.
class Model {
 public:
  explicit Model(ModelParams params) : params_(std::move(params)) {}

  static Model build(const TrainConfig& config, const std::vector<Sentence>& sentences) {
    return Model(build_model(config, sentences));
  }
  static Model load(const std::filesystem::path& path) { return Model(load_checkpoint(path)); }
  void save(const std::filesystem::path& path) { save_checkpoint(path, params_); }

  std::vector<std::tuple<std::size_t, std::size_t, double>> fit(const TrainConfig& config,
                                                                const std::vector<Sentence>& sentences,
                                                                const FeatureMap& features) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> out;
    for (const auto& r : train(config, sentences, features, params_)) out.emplace_back(r.epoch, r.batch, r.loss);
    return out;
  }

  std::vector<std::string> tag_sentence(const Sentence& s, const RegionFeatures& f) const {
    return tag(s, f, params_);
  }
  Array emissions(const Sentence& s, const RegionFeatures& f) const {
    ad::Tape tape;
    return to_numpy(forward(tape, s, f, params_).emissions);
  }
  py::dict eval(const std::vector<Sentence>& sentences, const FeatureMap& features) const {
    return report_dict(evaluate(params_, sentences, features));
  }
  std::vector<double> attention(const Sentence& s, const RegionFeatures& f, std::size_t query, std::size_t token) const {
    return attention_map(s, f, params_, query, token).weights;
  }
  const ModelConfig& config() const { return params_.config; }
  std::vector<std::string> labels() const { return params_.labels.names(); }
  std::vector<std::string> parameter_names() {
    std::vector<std::string> names;
    for (const auto& r : params_.all()) names.push_back(r.name);
    return names;
  }
  Array parameter(const std::string& name) {
    for (const auto& r : params_.all())
      if (r.name == name) return to_numpy(r.tensor());
    throw py::key_error(name);
  }

 private:
  ModelParams params_;
};

}  // namespace

PYBIND11_MODULE(_mmner, m) {
  m.doc() = "Multimodal NER with visual attention over image regions";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<Sentence>(m, "Sentence")
      .def(py::init<>())
      .def(py::init([](std::vector<std::string> tokens, std::vector<std::string> tags, std::string image_id) {
             if (tags.empty()) tags.assign(tokens.size(), "O");
             if (tags.size() != tokens.size()) throw ContractError("tokens and tags differ in length");
             return Sentence{std::move(tokens), std::move(tags), std::move(image_id)};
           }),
           py::arg("tokens"), py::arg("tags") = std::vector<std::string>{}, py::arg("image_id") = "")
      .def_readwrite("tokens", &Sentence::tokens)
      .def_readwrite("tags", &Sentence::tags)
      .def_readwrite("image_id", &Sentence::image_id)
      .def("__eq__", [](const Sentence& a, const Sentence& b) { return a == b; })
      .def("__repr__", [](const Sentence& s) {
        return "Sentence(" + std::to_string(s.tokens.size()) + " tokens, image '" + s.image_id + "')";
      });

  py::class_<RegionFeatures>(m, "RegionFeatures")
      .def(py::init(&features_from), py::arg("values"))
      .def_readonly("regions", &RegionFeatures::regions)
      .def_readonly("dims", &RegionFeatures::dims)
      .def("numpy", &features_to_numpy);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("d_word", &ModelConfig::d_word)
      .def_readwrite("d_char", &ModelConfig::d_char)
      .def_readwrite("d_hidden", &ModelConfig::d_hidden)
      .def_readwrite("char_width", &ModelConfig::char_width)
      .def_readwrite("region_dims", &ModelConfig::region_dims)
      .def_readwrite("bypass_visual", &ModelConfig::bypass_visual)
      .def_property_readonly("d_e", &ModelConfig::d_e);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("dropout_keep", &TrainConfig::dropout_keep)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("model", &TrainConfig::model)
      .def("validate", &TrainConfig::validate);

  // data-io
  m.def(
      "load_corpus",
      [](const std::filesystem::path& path, bool require_tags) {
        LoadOptions opts;
        opts.require_tags = require_tags;
        Corpus c = load_corpus(path, opts);
        return py::make_tuple(c.sentences, c.stats.mentions);
      },
      py::arg("path"), py::arg("require_tags") = true,
      "Returns (sentences, mention counts per entity type).");
  m.def("parse_corpus", [](const std::string& text) { return parse_corpus(text, "<string>").sentences; });
  m.def("format_corpus", &format_corpus);
  m.def("validate_bio", [](const std::vector<std::string>& tags) { return validate_bio(tags, LabelSet::bio()); });
  m.def("extract_spans", [](const std::vector<std::string>& tags) {
    std::vector<std::tuple<std::size_t, std::size_t, std::string>> out;
    for (const auto& s : extract_spans(tags)) out.emplace_back(s.begin, s.end, s.type);
    return out;
  });
  m.def("read_region_features", &read_region_features);
  m.def("write_region_features", &write_region_features);
  m.def("load_region_features", &load_region_features, py::arg("dir"), py::arg("image_id"),
        py::arg("fallback_dims") = 512);
  m.def(
      "synth_corpus",
      [](std::uint64_t seed, std::size_t sentences, std::size_t regions, std::size_t region_dims) {
        SynthCorpus c = synth_corpus({seed, sentences, regions, region_dims});
        return py::make_tuple(c.sentences, c.features, c.signal_regions);
      },
      py::arg("seed") = 0, py::arg("sentences") = 40, py::arg("regions") = 49, py::arg("region_dims") = 16,
      "Returns (sentences, features by image id, planted-signal regions by image id).");
  m.attr("AMBIGUOUS_TOKEN") = std::string(kAmbiguousToken);

  // crf
  m.def("bio_labels", [] { return LabelSet::bio().names(); });
  m.def("forbidden_transitions", [](const std::vector<std::string>& labels) {
    const auto mask = forbidden_transitions(LabelSet(labels));
    const auto side = static_cast<py::ssize_t>(labels.size() + 2);
    py::array_t<bool> out({side, side});
    std::copy(mask.begin(), mask.end(), out.mutable_data());
    return out;
  });
  m.def("log_partition", [](const Array& e, const Array& t) {
    return log_partition(matrix(e, "emissions"), matrix(t, "transitions"));
  });
  m.def("sequence_score", [](const Array& e, const Array& t, const std::vector<std::size_t>& y) {
    return sequence_score(matrix(e, "emissions"), matrix(t, "transitions"), y);
  });
  m.def("viterbi", [](const Array& e, const Array& t) {
    Decoded d = viterbi(matrix(e, "emissions"), matrix(t, "transitions"));
    return py::make_tuple(d.tags, d.score);
  });

  // model, training, evaluation
  py::class_<Model>(m, "Model")
      .def_static("build", &Model::build, py::arg("config"), py::arg("sentences"))
      .def_static("load", &Model::load)
      .def("save", &Model::save)
      .def("fit", &Model::fit, py::arg("config"), py::arg("sentences"), py::arg("features"),
           "Train in place; returns [(epoch, batch, loss)].")
      .def("tag", &Model::tag_sentence)
      .def("emissions", &Model::emissions)
      .def("evaluate", &Model::eval)
      .def("attention", &Model::attention, py::arg("sentence"), py::arg("features"), py::arg("query"),
           py::arg("token"))
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("labels", &Model::labels)
      .def("parameter_names", &Model::parameter_names)
      .def("parameter", &Model::parameter);

  m.def("score_spans", [](const std::vector<std::vector<std::string>>& gold,
                          const std::vector<std::vector<std::string>>& predicted) {
    return report_dict(score_spans(gold, predicted));
  });

  m.def(
      "gradcheck",
      [](std::uint64_t seed, bool bypass_visual, const std::string& corrupt_rule) {
        GradcheckOptions opts;
        opts.seed = seed;
        opts.bypass_visual = bypass_visual;
        opts.corrupt_rule = corrupt_rule;
        const GradcheckReport r = gradcheck(opts);
        py::dict groups;
        for (const auto& g : r.groups) groups[py::str(g.name)] = g.max_rel_error;
        py::dict out;
        out["pass"] = r.pass;
        out["tolerance"] = r.tolerance;
        out["groups"] = groups;
        return out;
      },
      py::arg("seed") = 0, py::arg("bypass_visual") = false, py::arg("corrupt_rule") = "");
}

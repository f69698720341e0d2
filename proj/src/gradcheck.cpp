#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "mmner/train.hpp"

namespace mmner {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport check_gradients(ModelParams& params, const std::function<ad::Tensor(ad::Tape&)>& loss, double step,
                                double tolerance) {
  params.zero_grad();
  {
    ad::Tape tape;
    ad::Tensor value = loss(tape);
    tape.backward(value);
  }
  auto evaluate = [&] {
    ad::Tape tape;
    return loss(tape).item();
  };

  GradcheckReport report;
  report.tolerance = tolerance;
  report.pass = true;
  for (auto& ref : params.trainable()) {
    ad::Tensor& t = ref.tensor();
    GradcheckGroup group;
    group.name = ref.name;
    group.elements = t.size();
    auto values = t.data();
    auto grads = std::as_const(t).grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (ref.frozen != nullptr && (*ref.frozen)[i]) continue;
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = evaluate();
      values[i] = saved - step;
      const double minus = evaluate();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      group.max_rel_error = std::max(group.max_rel_error, relative_error(grads[i], numeric));
    }
    group.pass = group.max_rel_error < tolerance;
    report.pass = report.pass && group.pass;
    report.groups.push_back(group);
  }
  return report;
}

GradcheckReport gradcheck(const GradcheckOptions& options) {
  ModelConfig config;
  config.d_word = 4;
  config.d_char = 2;
  config.region_dims = 4;
  config.bypass_visual = options.bypass_visual;

  Sentence sentence{{"alpha", "be"}, {"L1", "L2"}, "img"};
  Rng rng(options.seed);
  WordVocab words = WordVocab::random(sentence.tokens, config.d_word, rng);
  ModelParams params =
      ModelParams::init(config, LabelSet({"L0", "L1", "L2"}), std::move(words), sentence.tokens, options.seed + 1);
  RegionFeatures features = RegionFeatures::zeros(3, config.region_dims);
  for (double& v : features.values) v = rng.uniform(-1.0, 1.0);

  const Example example{&sentence, &features};
  auto loss = [&](ad::Tape& tape) { return batch_loss(tape, std::span(&example, 1), params); };

  if (!options.corrupt_rule.empty()) ad::debug::corrupt_backward_rule(options.corrupt_rule);
  GradcheckReport report;
  try {
    report = check_gradients(params, loss, options.step, options.tolerance);
  } catch (...) {
    ad::debug::clear_corruption();
    throw;
  }
  ad::debug::clear_corruption();
  return report;
}

std::string GradcheckReport::format() const {
  std::ostringstream os;
  os << std::left << std::setw(20) << "group" << std::right << std::setw(9) << "elements" << std::setw(14)
     << "max_rel_err" << "  status\n";
  for (const auto& g : groups) {
    os << std::left << std::setw(20) << g.name << std::right << std::setw(9) << g.elements << std::setw(14)
       << std::scientific << std::setprecision(3) << g.max_rel_error << "  " << (g.pass ? "ok" : "FAIL") << '\n';
  }
  os << (pass ? "PASS" : "FAIL") << " (tolerance " << std::scientific << std::setprecision(1) << tolerance << ")\n";
  return os.str();
}

}  // namespace mmner

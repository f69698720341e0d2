#include "mmner/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace mmner {

namespace {

std::size_t check_shapes(const ad::Tensor& emissions, const ad::Tensor& transitions) {
  if (emissions.rank() != 2) throw DimensionError("crf: emissions must be [n x L], got " +
                                                  ad::to_string(emissions.shape()));
  const std::size_t labels = emissions.dim(1);
  if (transitions.rank() != 2 || transitions.dim(0) != labels + 2 || transitions.dim(1) != labels + 2) {
    throw DimensionError("crf: transitions " + ad::to_string(transitions.shape()) + " do not fit " +
                         std::to_string(labels) + " labels plus BOS/EOS");
  }
  return labels;
}

void check_tags(std::span<const std::size_t> tags, std::size_t n, std::size_t labels) {
  if (tags.size() != n) {
    throw ContractError("crf: " + std::to_string(tags.size()) + " tags for " + std::to_string(n) + " tokens");
  }
  for (std::size_t t : tags)
    if (t >= labels) throw ContractError("crf: invalid label index " + std::to_string(t));
}

struct Lattice {
  std::vector<double> alpha;  // [n × L]
  std::vector<double> beta;   // [n × L]
  double log_z = 0.0;
};

Lattice forward_backward(const ad::Tensor& emissions, const ad::Tensor& transitions, bool with_beta) {
  const std::size_t n = emissions.dim(0);
  const std::size_t labels = emissions.dim(1);
  const std::size_t stride = labels + 2;
  const std::size_t bos = labels, eos = labels + 1;
  auto e = emissions.data();
  auto t = transitions.data();
  Lattice lat;
  lat.alpha.assign(n * labels, 0.0);
  std::vector<double> buf(labels);
  for (std::size_t y = 0; y < labels; ++y) lat.alpha[y] = t[bos * stride + y] + e[y];
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t y = 0; y < labels; ++y) {
      for (std::size_t p = 0; p < labels; ++p) buf[p] = lat.alpha[(i - 1) * labels + p] + t[p * stride + y];
      lat.alpha[i * labels + y] = e[i * labels + y] + log_sum_exp(buf);
    }
  for (std::size_t y = 0; y < labels; ++y) buf[y] = lat.alpha[(n - 1) * labels + y] + t[y * stride + eos];
  lat.log_z = log_sum_exp(buf);
  if (with_beta) {
    lat.beta.assign(n * labels, 0.0);
    for (std::size_t y = 0; y < labels; ++y) lat.beta[(n - 1) * labels + y] = t[y * stride + eos];
    for (std::size_t i = n - 1; i-- > 0;)
      for (std::size_t p = 0; p < labels; ++p) {
        for (std::size_t y = 0; y < labels; ++y)
          buf[y] = t[p * stride + y] + e[(i + 1) * labels + y] + lat.beta[(i + 1) * labels + y];
        lat.beta[i * labels + p] = log_sum_exp(buf);
      }
  }
  return lat;
}

}  // namespace

LabelSet LabelSet::bio() {
  std::vector<std::string> names{"O"};
  for (const auto& type : entity_types()) {
    names.push_back("B-" + type);
    names.push_back("I-" + type);
  }
  return LabelSet(std::move(names));
}

const std::vector<std::string>& LabelSet::entity_types() {
  static const std::vector<std::string> types{"PER", "LOC", "ORG", "MISC"};
  return types;
}

std::optional<std::size_t> LabelSet::index(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::vector<bool> forbidden_transitions(const LabelSet& labels) {
  const std::size_t count = labels.size();
  const std::size_t stride = count + 2;
  std::vector<bool> mask(stride * stride, false);
  for (std::size_t from = 0; from < stride; ++from)
    for (std::size_t to = 0; to < stride; ++to) {
      bool bad = to == labels.bos() || from == labels.eos();
      if (!bad && to < count) {
        const std::string& to_name = labels.name(to);
        if (to_name.rfind("I-", 0) == 0) {
          const std::string type = to_name.substr(2);
          const bool ok = from < count && (labels.name(from) == "B-" + type || labels.name(from) == "I-" + type);
          bad = !ok;
        }
      }
      mask[from * stride + to] = bad;
    }
  return mask;
}

ad::Tensor init_transitions(std::size_t labels, const std::vector<bool>& forbidden) {
  const std::size_t stride = labels + 2;
  std::vector<double> v(stride * stride, 0.0);
  for (std::size_t i = 0; i < v.size() && i < forbidden.size(); ++i)
    if (forbidden[i]) v[i] = kForbiddenScore;
  return ad::Tensor::from({stride, stride}, std::move(v), true);
}

double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double total = 0.0;
  for (double x : xs) total += std::exp(x - mx);
  return mx + std::log(total);
}

double sequence_score(const ad::Tensor& emissions, const ad::Tensor& transitions,
                      std::span<const std::size_t> tags) {
  const std::size_t labels = check_shapes(emissions, transitions);
  const std::size_t n = emissions.dim(0);
  check_tags(tags, n, labels);
  const std::size_t stride = labels + 2;
  auto e = emissions.data();
  auto t = transitions.data();
  // Same association order as the forward recursion, so that rounding can
  // never push the gold score above log Z.
  double score = t[labels * stride + tags[0]] + e[tags[0]];
  for (std::size_t i = 1; i < n; ++i) score = e[i * labels + tags[i]] + (score + t[tags[i - 1] * stride + tags[i]]);
  return score + t[tags[n - 1] * stride + labels + 1];
}

double log_partition(const ad::Tensor& emissions, const ad::Tensor& transitions) {
  check_shapes(emissions, transitions);
  return forward_backward(emissions, transitions, false).log_z;
}

ad::Tensor crf_nll(ad::Tape& tape, const ad::Tensor& emissions, const ad::Tensor& transitions,
                   std::span<const std::size_t> tags) {
  const std::size_t labels = check_shapes(emissions, transitions);
  const std::size_t n = emissions.dim(0);
  check_tags(tags, n, labels);
  Lattice lat = forward_backward(emissions, transitions, true);
  const double value = lat.log_z - sequence_score(emissions, transitions, tags);
  const bool track = emissions.requires_grad() || transitions.requires_grad();
  ad::Tensor result = ad::make_result({1}, {value}, track);
  if (track) {
    std::vector<std::size_t> gold(tags.begin(), tags.end());
    tape.record(result, [emissions, transitions, result, lat = std::move(lat), gold = std::move(gold), n,
                         labels]() mutable {
      const double g = std::as_const(result).grad()[0];
      const std::size_t stride = labels + 2;
      const std::size_t bos = labels, eos = labels + 1;
      auto e = std::as_const(emissions).data();
      auto t = std::as_const(transitions).data();
      auto marginal = [&](std::size_t i, std::size_t y) {
        return std::exp(lat.alpha[i * labels + y] + lat.beta[i * labels + y] - lat.log_z);
      };
      if (emissions.requires_grad()) {
        auto ge = emissions.grad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t y = 0; y < labels; ++y) ge[i * labels + y] += g * marginal(i, y);
          ge[i * labels + gold[i]] -= g;
        }
      }
      if (transitions.requires_grad()) {
        auto gt = transitions.grad();
        for (std::size_t y = 0; y < labels; ++y) {
          gt[bos * stride + y] += g * marginal(0, y);
          gt[y * stride + eos] += g * marginal(n - 1, y);
        }
        for (std::size_t i = 1; i < n; ++i)
          for (std::size_t p = 0; p < labels; ++p)
            for (std::size_t y = 0; y < labels; ++y) {
              const double xi = std::exp(lat.alpha[(i - 1) * labels + p] + t[p * stride + y] + e[i * labels + y] +
                                         lat.beta[i * labels + y] - lat.log_z);
              gt[p * stride + y] += g * xi;
            }
        gt[bos * stride + gold[0]] -= g;
        gt[gold[n - 1] * stride + eos] -= g;
        for (std::size_t i = 1; i < n; ++i) gt[gold[i - 1] * stride + gold[i]] -= g;
      }
    });
  }
  return result;
}

Decoded viterbi(const ad::Tensor& emissions, const ad::Tensor& transitions) {
  const std::size_t labels = check_shapes(emissions, transitions);
  const std::size_t n = emissions.dim(0);
  const std::size_t stride = labels + 2;
  auto e = emissions.data();
  auto t = transitions.data();
  std::vector<double> best(n * labels);
  std::vector<std::size_t> back(n * labels, 0);
  for (std::size_t y = 0; y < labels; ++y) best[y] = t[labels * stride + y] + e[y];
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t y = 0; y < labels; ++y) {
      std::size_t arg = 0;
      double top = best[(i - 1) * labels] + t[y];
      for (std::size_t p = 1; p < labels; ++p) {
        const double s = best[(i - 1) * labels + p] + t[p * stride + y];
        if (s > top) {
          top = s;
          arg = p;
        }
      }
      best[i * labels + y] = top + e[i * labels + y];
      back[i * labels + y] = arg;
    }
  std::size_t last = 0;
  double top = best[(n - 1) * labels] + t[labels + 1];
  for (std::size_t y = 1; y < labels; ++y) {
    const double s = best[(n - 1) * labels + y] + t[y * stride + labels + 1];
    if (s > top) {
      top = s;
      last = y;
    }
  }
  Decoded out;
  out.score = top;
  out.tags.assign(n, 0);
  out.tags[n - 1] = last;
  for (std::size_t i = n - 1; i > 0; --i) out.tags[i - 1] = back[i * labels + out.tags[i]];
  return out;
}

}  // namespace mmner

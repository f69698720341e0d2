#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>

#include "mmner/visual_attention.hpp"
#include "support.hpp"

using namespace mmner;
using ad::Tape;
using ad::Tensor;

namespace {

RegionFeatures random_regions(Rng& rng, std::size_t n, std::size_t d) {
  RegionFeatures f = RegionFeatures::zeros(n, d);
  for (double& v : f.values) v = rng.uniform(-1, 1);
  return f;
}

// F·W_i by plain loops.
std::vector<double> projected(const RegionFeatures& f, const VisualAttnParams& p) {
  const std::size_t de = p.dim();
  std::vector<double> out(f.regions * de, 0.0);
  for (std::size_t j = 0; j < f.regions; ++j)
    for (std::size_t k = 0; k < de; ++k)
      for (std::size_t i = 0; i < f.dims; ++i) out[j * de + k] += f.at(j, i) * p.w_i[i * de + k];
  return out;
}

}  // namespace

TEST_CASE("visual score shapes") {
  Rng rng(1);
  SUBCASE("single region") {
    auto p = VisualAttnParams::init(4, 6, rng);
    Tape tape;
    CHECK(visual_scores(tape, testing::random_tensor(rng, {6}), random_regions(rng, 1, 4), p).shape() ==
          ad::Shape{6, 1});
  }
  SUBCASE("7x7 grid of 512-dim regions") {
    auto p = VisualAttnParams::init(512, 6, rng);
    Tape tape;
    CHECK(visual_scores(tape, testing::random_tensor(rng, {6}), random_regions(rng, 49, 512), p).shape() ==
          ad::Shape{6, 49});
  }
}

TEST_CASE("zero W_v gives a zero score matrix") {
  Rng rng(2);
  auto p = VisualAttnParams::init(4, 5, rng);
  for (double& v : p.w_v.data()) v = 0.0;
  Tape tape;
  auto scores = visual_scores(tape, testing::random_tensor(rng, {5}), random_regions(rng, 7, 4), p);
  for (double v : scores.data())
    CHECK(v == 0.0);
}

TEST_CASE("visual scores match a hand-rolled evaluation") {
  Rng rng(3);
  auto p = VisualAttnParams::init(4, 3, rng);
  auto f = random_regions(rng, 5, 4);
  auto a = testing::random_tensor(rng, {3});
  Tape tape;
  auto s = visual_scores(tape, a, f, p);
  const auto ft = projected(f, p);
  for (std::size_t j = 0; j < 5; ++j) {
    std::vector<double> h(3);
    for (std::size_t m = 0; m < 3; ++m) {
      double z = ft[j * 3 + m];
      for (std::size_t i = 0; i < 3; ++i) z += a[i] * p.w_t[i * 3 + m];
      h[m] = std::tanh(z);
    }
    for (std::size_t k = 0; k < 3; ++k) {
      double expected = 0;
      for (std::size_t m = 0; m < 3; ++m) expected += h[m] * p.w_v[m * 3 + k];
      CHECK(std::abs(s[k * 5 + j] - expected) < 1e-12);
    }
  }
}

TEST_CASE("dims mismatch between F and W_i is rejected") {
  Rng rng(4);
  auto p = VisualAttnParams::init(4, 3, rng);
  Tape tape;
  CHECK_THROWS_AS(project_regions(tape, random_regions(rng, 2, 5), p), DimensionError);
}

TEST_CASE("region distribution examples") {
  Rng rng(5);
  Tape tape;
  auto flat = region_distribution(tape, Tensor::full({2, 7}, 3.0));
  for (double v : flat.data()) CHECK(std::abs(v - 1.0 / 7) < 1e-15);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = region_distribution(tape, testing::random_tensor(rng, {4, 9}, -10, 10, false));
    for (std::size_t k = 0; k < 4; ++k) {
      double total = 0;
      for (std::size_t j = 0; j < 9; ++j) total += p[k * 9 + j];
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
  auto spiky = testing::random_tensor(rng, {3, 5}, -1, 1, false);
  for (std::size_t k = 0; k < 3; ++k) spiky.data()[k * 5 + k] = 50.0;
  auto ps = region_distribution(tape, spiky);
  for (std::size_t k = 0; k < 3; ++k) CHECK(ps[k * 5 + k] > 0.999);
}

TEST_CASE("one-hot distribution selects projected regions") {
  Rng rng(6);
  auto p = VisualAttnParams::init(4, 3, rng);
  auto f = random_regions(rng, 4, 4);
  auto probs = Tensor::from({3, 4}, {0, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0});
  Tape tape;
  auto c = visual_context(tape, probs, f, p);
  const auto ft = projected(f, p);
  CHECK(std::abs(c[0] - ft[1 * 3 + 0]) < 1e-12);
  CHECK(std::abs(c[1] - ft[3 * 3 + 1]) < 1e-12);
  CHECK(std::abs(c[2] - ft[0 * 3 + 2]) < 1e-12);
}

TEST_CASE("visual context is convex per feature over projected regions") {
  Rng rng(7);
  auto p = VisualAttnParams::init(5, 4, rng);
  for (int trial = 0; trial < 200; ++trial) {
    auto f = random_regions(rng, 6, 5);
    Tape tape;
    auto probs = region_distribution(tape, visual_scores(tape, testing::random_tensor(rng, {4}), f, p));
    auto c = visual_context(tape, probs, f, p);
    const auto ft = projected(f, p);
    for (std::size_t k = 0; k < 4; ++k) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t j = 0; j < 6; ++j) {
        lo = std::min(lo, ft[j * 4 + k]);
        hi = std::max(hi, ft[j * 4 + k]);
      }
      CHECK(c[k] >= lo - 1e-12);
      CHECK(c[k] <= hi + 1e-12);
    }
  }
}

TEST_CASE("region permutation equivariance") {
  Rng rng(8);
  auto p = VisualAttnParams::init(4, 3, rng);
  auto f = random_regions(rng, 5, 4);
  auto a = testing::random_tensor(rng, {3}, -2, 2, false);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  RegionFeatures g = RegionFeatures::zeros(5, 4);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t i = 0; i < 4; ++i) g.values[j * 4 + i] = f.at(perm[j], i);
  Tape tape;
  auto sf = visual_scores(tape, a, f, p);
  auto sg = visual_scores(tape, a, g, p);
  auto pf = region_distribution(tape, sf);
  auto pg = region_distribution(tape, sg);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(sg[k * 5 + j] - sf[k * 5 + perm[j]]) < 1e-12);
      CHECK(std::abs(pg[k * 5 + j] - pf[k * 5 + perm[j]]) < 1e-12);
    }
  auto cf = visual_context(tape, pf, f, p);
  auto cg = visual_context(tape, pg, g, p);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(cf[k] - cg[k]) < 1e-12);
}

TEST_CASE("a different image changes the context") {
  Rng rng(9);
  auto p = VisualAttnParams::init(4, 3, rng);
  auto a = testing::random_tensor(rng, {3}, -2, 2, false);
  Tape tape;
  auto context_for = [&](const RegionFeatures& f) {
    return testing::values(visual_context(tape, region_distribution(tape, visual_scores(tape, a, f, p)), f, p));
  };
  const auto c1 = context_for(random_regions(rng, 5, 4));
  const auto c2 = context_for(random_regions(rng, 5, 4));
  double diff = 0;
  for (std::size_t k = 0; k < 3; ++k) diff += std::abs(c1[k] - c2[k]);
  CHECK(diff > 0.0);
}

TEST_CASE("visual attention gradients") {
  Rng rng(10);
  auto p = VisualAttnParams::init(4, 3, rng);
  auto f = random_regions(rng, 5, 4);
  auto a = testing::random_tensor(rng, {3});
  auto w = testing::random_tensor(rng, {3}, -2, 2, false);
  auto loss = [&](Tape& t) {
    auto probs = region_distribution(t, visual_scores(t, a, f, p));
    return testing::weighted_sum(t, visual_context(t, probs, f, p), w);
  };
  CHECK(testing::fd_max_error({p.w_i, p.w_t, p.w_v, a}, loss) < 1e-5);
}

TEST_CASE("batched attention equals per-vector evaluation") {
  Rng rng(11);
  auto p = VisualAttnParams::init(4, 3, rng);
  auto f = random_regions(rng, 6, 4);
  auto alignments = testing::random_tensor(rng, {4, 3}, -2, 2, false);
  Tape tape;
  auto batch = visual_attend(tape, alignments, project_regions(tape, f, p), p);
  REQUIRE(batch.context.shape() == ad::Shape{4, 3});
  REQUIRE(batch.probs.shape() == ad::Shape{4, 6, 3});
  for (std::size_t m = 0; m < 4; ++m) {
    auto a = ad::row(tape, alignments, m);
    auto probs = region_distribution(tape, visual_scores(tape, a, f, p));
    auto c = visual_context(tape, probs, f, p);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(std::abs(batch.context[m * 3 + k] - c[k]) < 1e-12);
      for (std::size_t j = 0; j < 6; ++j)
        CHECK(std::abs(batch.probs[(m * 6 + j) * 3 + k] - probs[k * 6 + j]) < 1e-12);
    }
  }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mmner/random.hpp"
#include "mmner/tensor.hpp"

namespace testing {

using mmner::ad::Tape;
using mmner::ad::Tensor;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Max elementwise relative error between the tape gradient and central
/// differences of `f` for every tensor in `inputs`.
inline double fd_max_error(const std::vector<Tensor>& inputs, const std::function<Tensor(Tape&)>& f,
                           double h = 1e-5) {
  for (const auto& t : inputs) std::fill(t.grad().begin(), t.grad().end(), 0.0);
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (Tensor t : inputs) {
    auto v = t.data();
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      double plus, minus;
      {
        Tape tape;
        plus = f(tape).item();
      }
      v[i] = saved - h;
      {
        Tape tape;
        minus = f(tape).item();
      }
      v[i] = saved;
      worst = std::max(worst, rel_err(analytic[i], (plus - minus) / (2.0 * h)));
    }
  }
  return worst;
}

inline Tensor random_tensor(mmner::Rng& rng, mmner::ad::Shape shape, double lo = -2.0, double hi = 2.0,
                            bool requires_grad = true) {
  return mmner::uniform_tensor(rng, std::move(shape), lo, hi, requires_grad);
}

/// sum(y ⊙ w) for a fixed random w, so every output element gets a distinct
/// upstream gradient.
inline Tensor weighted_sum(Tape& tape, const Tensor& y, const Tensor& w) {
  return mmner::ad::sum_all(tape, mmner::ad::mul(tape, y, w));
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mmner_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

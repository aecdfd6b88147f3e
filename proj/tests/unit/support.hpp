#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "dssa/ops.hpp"

namespace testing {

using dssa::Shape;
using dssa::Tensor;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(dssa::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dssau_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

inline Tensor<float> to_float(const Tensor<double>& t, bool requires_grad = false) {
  std::vector<float> v(t.data().begin(), t.data().end());
  return Tensor<float>(t.shape(), std::move(v), requires_grad);
}

// Central-difference check of d(sum(f() * w))/dx against autodiff for every
// tensor in `inputs`; w is a fixed random weighting. Returns the largest
// relative error, |a - n| / max(|a|, |n|, floor).
inline double max_grad_error(const std::function<Tensor<double>()>& f,
                             std::vector<Tensor<double>> inputs, std::uint64_t seed = 7,
                             double h = 1e-5, double floor = 1e-6) {
  std::mt19937_64 rng(seed);
  Tensor<double> probe = f();
  std::vector<double> weights(probe.numel());
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& w : weights) w = dist(rng);
  auto objective = [&] {
    Tensor<double> out = f();
    double s = 0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += out.data()[i] * weights[i];
    return s;
  };
  for (auto& in : inputs) in.zero_grad();
  {
    Tensor<double> out = f();
    Tensor<double> w(out.shape(), weights);
    dssa::Tensor<double> loss = dssa::sum(dssa::mul(out, w));
    loss.backward();
  }
  double worst = 0;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.numel(), 0.0);
    if (in.has_grad()) analytic.assign(in.grad().begin(), in.grad().end());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const double saved = in.data()[i];
      in.data()[i] = saved + h;
      const double up = objective();
      in.data()[i] = saved - h;
      const double down = objective();
      in.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace testing

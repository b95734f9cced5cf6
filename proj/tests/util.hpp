#pragma once

#include <cmath>
#include <vector>

#include "artuda/nn.hpp"
#include "artuda/rng.hpp"
#include "artuda/tensor.hpp"

namespace testutil {

using artuda::Rng;
using artuda::Shape;
using artuda::Tensor;

inline Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -2.0,
                            double hi = 2.0) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

/// Random values in [-2,2] kept away from zero by `margin` (for primitives
/// whose derivative jumps there).
inline Tensor random_tensor_no_kink(Rng& rng, const Shape& shape,
                                    double margin) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) {
    do {
      x = rng.uniform(-2.0, 2.0);
    } while (std::abs(x) < margin);
  }
  return Tensor(shape, std::move(v));
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, int k) {
  std::vector<int> out(n);
  for (auto& y : out) y = static_cast<int>(rng.bounded(k));
  return out;
}

inline artuda::nn::ModelSpec tiny_spec(std::size_t input_dim = 2,
                                       std::size_t width = 4,
                                       std::size_t classes = 2) {
  artuda::nn::ModelSpec spec;
  spec.input_dim = input_dim;
  spec.feature_widths = {width};
  spec.num_classes = classes;
  spec.discriminator_widths = {width};
  return spec;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace testutil

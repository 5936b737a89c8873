#pragma once

// Shared helpers and straight-line oracles for the test suites. Nothing here
// calls into the library's kernels.

#include <cmath>
#include <random>

#include "sfnet/tensor.hpp"

namespace testutil {

template <typename T = double>
sfnet::Tensor<T> randn(const sfnet::Shape& s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  sfnet::Tensor<T> t(s);
  for (auto& v : t.buffer()) v = static_cast<T>(nd(rng));
  return t;
}

template <typename T>
double max_abs(const sfnet::Tensor<T>& a, const sfnet::Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

using Vol = sfnet::Tensor<double>;

// Direct summation over every output voxel and tap.
inline Vol conv_oracle(const Vol& x, const Vol& w, const Vol* b, std::size_t s, std::size_t p, std::size_t d) {
  const std::size_t n = x.dim(0), ci = x.dim(1), co = w.dim(0), k = w.dim(2);
  auto out_ext = [&](std::size_t e) {
    std::size_t cnt = 0;
    while (cnt * s + d * (k - 1) <= e + 2 * p - 1) ++cnt;
    return cnt;
  };
  const std::size_t ox = out_ext(x.dim(2)), oy = out_ext(x.dim(3)), oz = out_ext(x.dim(4));
  Vol out({n, co, ox, oy, oz});
  for (std::size_t b0 = 0; b0 < n; ++b0)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < ox; ++i)
        for (std::size_t j = 0; j < oy; ++j)
          for (std::size_t l = 0; l < oz; ++l) {
            double acc = b ? (*b)[o] : 0.0;
            for (std::size_t c = 0; c < ci; ++c)
              for (std::size_t a = 0; a < k; ++a)
                for (std::size_t bb = 0; bb < k; ++bb)
                  for (std::size_t cc = 0; cc < k; ++cc) {
                    const long xi = long(i * s + a * d) - long(p);
                    const long yi = long(j * s + bb * d) - long(p);
                    const long zi = long(l * s + cc * d) - long(p);
                    if (xi < 0 || yi < 0 || zi < 0 || xi >= long(x.dim(2)) || yi >= long(x.dim(3)) ||
                        zi >= long(x.dim(4)))
                      continue;
                    acc += w.at(o, c, a, bb, cc) * x.at(b0, c, xi, yi, zi);
                  }
            out.at(b0, o, i, j, l) = acc;
          }
  return out;
}

// Training-mode batch norm, biased variance, eps 1e-5.
inline Vol bn_train_oracle(const Vol& x, const Vol& gamma, const Vol& beta) {
  const std::size_t n = x.dim(0), c = x.dim(1), v = x.numel() / (n * c);
  Vol out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m = 0, var = 0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < v; ++i) m += x[(b * c + ch) * v + i];
    m /= double(n * v);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < v; ++i) var += std::pow(x[(b * c + ch) * v + i] - m, 2);
    var /= double(n * v);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < v; ++i) {
        const std::size_t k = (b * c + ch) * v + i;
        out[k] = gamma[ch] * (x[k] - m) / std::sqrt(var + 1e-5) + beta[ch];
      }
  }
  return out;
}

inline Vol relu_oracle(Vol x) {
  for (auto& v : x.buffer()) v = v > 0 ? v : 0;
  return x;
}

inline double sigmoid_oracle(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline double gelu_oracle(double v) {
  return 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
}

// [.., Din] x [Din, Dout] + b over the last axis.
inline Vol linear_oracle(const Vol& x, const Vol& w, const Vol* b) {
  const std::size_t din = w.dim(0), dout = w.dim(1), rows = x.numel() / din;
  sfnet::Shape s = x.shape();
  s.back() = dout;
  Vol out(s);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = b ? (*b)[o] : 0.0;
      for (std::size_t i = 0; i < din; ++i) acc += x[r * din + i] * w[i * dout + o];
      out[r * dout + o] = acc;
    }
  return out;
}

// Layer norm over the last axis, biased variance, eps 1e-5.
inline Vol layer_norm_oracle(const Vol& x, const Vol& gamma, const Vol& beta) {
  const std::size_t d = x.shape().back(), rows = x.numel() / d;
  Vol out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double m = 0, var = 0;
    for (std::size_t i = 0; i < d; ++i) m += x[r * d + i];
    m /= double(d);
    for (std::size_t i = 0; i < d; ++i) var += std::pow(x[r * d + i] - m, 2);
    var /= double(d);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = gamma[i] * (x[r * d + i] - m) / std::sqrt(var + 1e-5) + beta[i];
  }
  return out;
}

}  // namespace testutil

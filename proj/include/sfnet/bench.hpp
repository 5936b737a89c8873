#pragma once

// Token-mixing microbenchmark: dense self-attention against FFT global
// filtering, both applied to [L, D] token matrices in isolation.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "sfnet/tensor.hpp"

namespace sfnet::bench {

/// softmax(X X^T / sqrt(D)) X for X [L, D], evaluated in row blocks so memory
/// stays O(block * L).
Tensor<float> attention_mix(const Tensor<float>& tokens, std::size_t block = 64);

/// ifft3(K * fft3(X)) on the cubic token grid of side round(L^(1/3)).
/// filter_re / filter_im: [D, G, G, G/2 + 1].
Tensor<float> fft_mix(const Tensor<float>& tokens, const Tensor<float>& filter_re,
                      const Tensor<float>& filter_im);

/// Side of the cube with side^3 == tokens and a power-of-two side; throws otherwise.
std::size_t cube_side(std::size_t tokens);

struct BenchRow {
  std::size_t tokens = 0;
  double attention_ms = 0;
  double fft_ms = 0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  double attention_slope = 0;
  double fft_slope = 0;

  void write_csv(std::ostream& os) const;
  nlohmann::json to_json() const;
};

struct BenchOptions {
  std::vector<std::size_t> tokens{512, 4096, 32768};
  std::size_t dim = 16;
  std::size_t repeats = 3;
  double min_ms = 50.0;  // each timed sample loops the kernel until this much time passes
  std::uint64_t seed = 0;
};

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Median over `repeats` samples of the per-call time, each sample looping
/// fn until min_ms has elapsed.
template <typename Fn>
double median_ms(Fn&& fn, std::size_t repeats, double min_ms) {
  using clock = std::chrono::steady_clock;
  std::vector<double> samples;
  for (std::size_t r = 0; r < repeats; ++r) {
    std::size_t calls = 0;
    const auto t0 = clock::now();
    double elapsed = 0;
    do {
      fn();
      ++calls;
      elapsed = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    } while (elapsed < min_ms);
    samples.push_back(elapsed / static_cast<double>(calls));
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

BenchResult bench_mixing(const BenchOptions& options);

}  // namespace sfnet::bench

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sfnet/bench.hpp"
#include "test_util.hpp"

using namespace sfnet;
using namespace sfnet::bench;

namespace {

Tensor<double> attention_oracle(const Tensor<float>& x) {
  const std::size_t L = x.dim(0), D = x.dim(1);
  Tensor<double> out({L, D});
  std::vector<double> s(L);
  for (std::size_t i = 0; i < L; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < L; ++j) {
      double dot = 0;
      for (std::size_t d = 0; d < D; ++d) dot += double(x[i * D + d]) * x[j * D + d];
      s[j] = dot / std::sqrt(double(D));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (auto& v : s) z += (v = std::exp(v - mx));
    for (std::size_t j = 0; j < L; ++j)
      for (std::size_t d = 0; d < D; ++d) out[i * D + d] += s[j] / z * x[j * D + d];
  }
  return out;
}

}  // namespace

TEST_CASE("log-log slope of exact power laws") {
  CHECK(loglog_slope({512, 4096, 32768}, {3, 192, 12288}) == doctest::Approx(2.0));
  CHECK(loglog_slope({1, 10, 100}, {5, 5, 5}) == doctest::Approx(0.0));
  CHECK(loglog_slope({2, 4, 8, 16}, {7, 14, 28, 56}) == doctest::Approx(1.0));
}

TEST_CASE("cube side") {
  CHECK(cube_side(512) == 8);
  CHECK(cube_side(32768) == 32);
  CHECK(cube_side(1) == 1);
  CHECK_THROWS(cube_side(1000));  // 10^3, not a power-of-two side
  CHECK_THROWS(cube_side(100));
}

TEST_CASE("attention mixing matches the dense formula") {
  auto x = testutil::randn<float>({1100, 8}, 1, 0.5f);  // spans three column tiles
  const auto ref = attention_oracle(x);
  for (std::size_t block : {1, 7, 64, 2000}) {
    const auto y = attention_mix(x, block);
    double err = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) err = std::max(err, std::abs(y[i] - ref[i]));
    CHECK(err < 1e-5);
  }
}

TEST_CASE("fft mixing with an all-pass filter is the identity") {
  auto x = testutil::randn<float>({64, 3}, 2);
  Tensor<float> re({3, 4, 4, 3}, 1.0f), im({3, 4, 4, 3});
  const auto y = fft_mix(x, re, im);
  CHECK(testutil::max_abs(y, x) < 1e-5);
  re.fill(2.0f);
  const auto y2 = fft_mix(x, re, im);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(y2[i] - 2 * x[i]) < 1e-5);
}

TEST_CASE("bench contract") {
  BenchOptions o;
  o.tokens = {8, 64, 512};
  o.dim = 4;
  o.repeats = 3;
  o.min_ms = 1;
  const auto r = bench_mixing(o);
  REQUIRE(r.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.rows[i].tokens == o.tokens[i]);
    CHECK(r.rows[i].attention_ms > 0);
    CHECK(r.rows[i].fft_ms > 0);
  }
  std::ostringstream os;
  r.write_csv(os);
  std::string line;
  std::istringstream is(os.str());
  std::size_t n = 0;
  while (std::getline(is, line)) ++n;
  CHECK(n == 4);
  CHECK(r.to_json().contains("attention_slope"));
  CHECK(std::isfinite(r.attention_slope));
}

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sfnet/fragments.hpp"
#include "sfnet/ops.hpp"
#include "test_util.hpp"

using namespace sfnet;
using kernels::ConvParams;
using testutil::randn;

using testutil::conv_oracle;

TEST_SUITE("tensor") {
  TEST_CASE("extents and buffer length are validated") {
    CHECK_THROWS_AS(Tensor<float>({2, 0, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), std::invalid_argument);
    Tensor<float> t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
    CHECK(t.reshaped({3, 2})[5] == 6);
    CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
  }
}

TEST_SUITE("conv3d") {
  TEST_CASE("output extent formula matches enumeration") {
    for (std::size_t k = 1; k <= 3; ++k)
      for (std::size_t s : {1, 2})
        for (std::size_t p = 0; p <= 2; ++p)
          for (std::size_t d = 1; d <= 3; ++d) {
            std::size_t count = 0;
            for (std::size_t o = 0; o < 64; ++o)
              if (o * s + d * (k - 1) + 1 <= 8 + 2 * p) ++count;
            CHECK(kernels::conv_out_extent(8, k, {s, p, d}) == count);
            Tensor<double> x({1, 1, 8, 8, 8}, 1.0), w({1, 1, k, k, k}, 1.0);
            CHECK(kernels::conv3d<double>(x, w, nullptr, {s, p, d}).dim(2) == count);
            if (d == 1 && p < k) {
              std::vector<std::size_t> am;
              CHECK(kernels::maxpool3d(x, k, s, p, &am).dim(4) == count);
            }
          }
  }

  TEST_CASE("ones scaled by a 1x1x1 weight") {
    Tensor<float> x({1, 1, 3, 3, 3}, 1.f), w({1, 1, 1, 1, 1}, 2.f);
    auto y = kernels::conv3d<float>(x, w, nullptr, {1, 0, 1});
    CHECK(y.shape() == Shape{1, 1, 3, 3, 3});
    for (float v : y.buffer()) CHECK(v == 2.f);
  }

  TEST_CASE("delta through a dilated kernel lands on the stencil") {
    Tensor<double> x({1, 1, 5, 5, 5});
    x.at(0, 0, 2, 2, 2) = 1.0;
    auto w = randn({1, 1, 3, 3, 3}, 3);
    auto y = kernels::conv3d<double>(x, w, nullptr, {1, 2, 2});
    CHECK(y.shape() == Shape{1, 1, 5, 5, 5});
    CHECK(testutil::max_abs(y, conv_oracle(x, w, nullptr, 1, 2, 2)) < 1e-14);
    // out[2 + 2(1-a)] = w[a]: the weight reflected on the dilated stencil
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t c = 0; c < 3; ++c)
          CHECK(y.at(0, 0, 4 - 2 * a, 4 - 2 * b, 4 - 2 * c) == doctest::Approx(w.at(0, 0, a, b, c)));
  }

  TEST_CASE("stride 2 pad 1 halves 8 to 4") {
    CHECK(kernels::conv_out_extent(8, 3, {2, 1, 1}) == 4);
  }

  TEST_CASE("im2col and direct paths match the summation oracle") {
    std::uint64_t seed = 10;
    for (std::size_t s : {1, 2})
      for (std::size_t p : {0, 1, 2})
        for (std::size_t d : {1, 2}) {
          auto x = randn({2, 3, 6, 5, 7}, ++seed);
          auto w = randn({4, 3, 3, 3, 3}, ++seed);
          auto b = randn({4}, ++seed);
          const auto ref = conv_oracle(x, w, &b, s, p, d);
          CHECK(testutil::max_abs(kernels::conv3d(x, w, &b, {s, p, d}), ref) < 1e-12);
          CHECK(testutil::max_abs(kernels::conv3d_direct(x, w, &b, {s, p, d}), ref) < 1e-12);
        }
  }

  TEST_CASE("channel mismatch names both shapes") {
    Tensor<float> x({1, 2, 4, 4, 4}), w({3, 5, 3, 3, 3});
    try {
      kernels::conv3d<float>(x, w, nullptr, {1, 1, 1});
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      const std::string m = e.what();
      CHECK(m.find("[1,2,4,4,4]") != std::string::npos);
      CHECK(m.find("[3,5,3,3,3]") != std::string::npos);
    }
  }

  TEST_CASE("linear in the input (32-bit)") {
    auto x = randn<float>({1, 2, 6, 6, 6}, 1), y = randn<float>({1, 2, 6, 6, 6}, 2);
    auto w = randn<float>({3, 2, 3, 3, 3}, 3);
    const float a = 0.7f, b = -1.3f;
    Tensor<float> mix(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) mix[i] = a * x[i] + b * y[i];
    auto lhs = kernels::conv3d<float>(mix, w, nullptr, {1, 1, 1});
    auto cx = kernels::conv3d<float>(x, w, nullptr, {1, 1, 1});
    auto cy = kernels::conv3d<float>(y, w, nullptr, {1, 1, 1});
    float peak = 0;
    for (float v : lhs.buffer()) peak = std::max(peak, std::abs(v));
    for (std::size_t i = 0; i < lhs.numel(); ++i) CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) < 1e-5 * peak);
  }
}

TEST_SUITE("conv1d_channels") {
  Tensor<double> chan(std::vector<double> v) {
    const std::size_t c = v.size();
    return Tensor<double>({1, c, 1, 1, 1}, std::move(v));
  }
  TEST_CASE("worked examples") {
    CHECK(kernels::conv1d_channels(chan({1, 2, 3, 4}), Tensor<double>({3}, {0, 1, 0})).buffer() ==
          std::vector<double>{1, 2, 3, 4});
    CHECK(kernels::conv1d_channels(chan({1, 2, 3, 4}), Tensor<double>({3}, {1, 1, 1})).buffer() ==
          std::vector<double>{3, 6, 9, 7});
    CHECK(kernels::conv1d_channels(chan({5}), Tensor<double>({3}, {0, 1, 0})).buffer() == std::vector<double>{5});
  }
  TEST_CASE("even kernel rejected") {
    CHECK_THROWS_AS(kernels::conv1d_channels(chan({1, 2}), Tensor<double>({2}, {1, 1})), std::invalid_argument);
  }
}

TEST_SUITE("pooling") {
  TEST_CASE("max of a 2x2x2 cube") {
    Tensor<double> x({1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    std::vector<std::size_t> am;
    auto y = kernels::maxpool3d(x, 2, 2, 0, &am);
    CHECK(y.numel() == 1);
    CHECK(y[0] == 8);
    x[5] = NAN;
    CHECK(std::isnan(kernels::maxpool3d(x, 2, 2, 0, &am)[0]));
  }

  TEST_CASE("ties route the gradient to the first index") {
    Tape<double> t;
    Parameter<double> p("x", Tensor<double>({1, 1, 4, 4, 4}, 2.0));
    auto y = ops::maxpool3d(t.parameter(p), 2, 2, 0);
    for (double v : y.value().buffer()) CHECK(v == 2.0);
    t.backward(ops::sum(y));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 4; ++k) {
          const bool first = i % 2 == 0 && j % 2 == 0 && k % 2 == 0;
          CHECK(p.grad.at(0, 0, i, j, k) == (first ? 1.0 : 0.0));
        }
  }

  TEST_CASE("ramp windows match exhaustive scan") {
    Tensor<double> x({1, 1, 4, 4, 4});
    std::iota(x.buffer().begin(), x.buffer().end(), 0.0);
    std::vector<std::size_t> am;
    auto y = kernels::maxpool3d(x, 3, 2, 1, &am);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2, 2});
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k) {
          double best = -1e300;
          for (long a = -1; a <= 1; ++a)
            for (long b = -1; b <= 1; ++b)
              for (long c = -1; c <= 1; ++c) {
                const long xi = long(2 * i) + a, yi = long(2 * j) + b, zi = long(2 * k) + c;
                if (xi < 0 || yi < 0 || zi < 0 || xi > 3 || yi > 3 || zi > 3) continue;
                best = std::max(best, x.at(0, 0, xi, yi, zi));
              }
          CHECK(y.at(0, 0, i, j, k) == best);
        }
  }

  TEST_CASE("oversized window rejected") {
    Tensor<double> x({1, 1, 2, 2, 2});
    std::vector<std::size_t> am;
    CHECK_THROWS(kernels::maxpool3d(x, 5, 1, 0, &am));
  }

  TEST_CASE("global average pool") {
    CHECK(kernels::global_avg_pool(Tensor<double>({1, 1, 3, 3, 3}, 7.0))[0] == 7.0);
    Tensor<double> x({1, 1, 2, 2, 2});
    std::iota(x.buffer().begin(), x.buffer().end(), 0.0);
    CHECK(kernels::global_avg_pool(x)[0] == 3.5);
    Tape<double> t;
    Parameter<double> p("x", x);
    auto y = ops::global_avg_pool(t.parameter(p));
    t.backward(ops::scale_const(ops::sum(y), 4.0));
    for (double g : p.grad.buffer()) CHECK(g == doctest::Approx(0.5));
  }
}

TEST_SUITE("batchnorm") {
  TEST_CASE("train mode normalizes each channel") {
    auto x = randn({3, 2, 4, 4, 4}, 5, 3.0);
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] += 10.0;
    Tensor<double> xhat;
    kernels::BatchNormStats st;
    auto y = kernels::batchnorm_train(x, Tensor<double>({2}, 1.0), Tensor<double>({2}, 0.0), 1e-5, xhat, st);
    for (std::size_t c = 0; c < 2; ++c) {
      double m = 0, v = 0, n = 0;
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = 0; i < 64; ++i) m += y[(b * 2 + c) * 64 + i], ++n;
      m /= n;
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = 0; i < 64; ++i) v += std::pow(y[(b * 2 + c) * 64 + i] - m, 2);
      v /= n;
      CHECK(std::abs(m) < 1e-5);
      CHECK(std::abs(v - 1) < 1e-4);
    }
    auto z = kernels::batchnorm_train(x, Tensor<double>({2}, 2.0), Tensor<double>({2}, 3.0), 1e-5, xhat, st);
    double m = 0;
    for (double v : z.buffer()) m += v;
    CHECK(m / z.numel() == doctest::Approx(3.0).epsilon(1e-9));
  }

  TEST_CASE("eval with identity statistics is the affine map") {
    auto x = randn({1, 2, 2, 2, 2}, 6);
    auto y = kernels::batchnorm_eval(x, Tensor<double>({2}, 1.5), Tensor<double>({2}, 0.5), Tensor<double>({2}, 0.0),
                                     Tensor<double>({2}, 1.0), 1e-5);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(1.5 * x[i] + 0.5).epsilon(1e-5));
  }

  TEST_CASE("running statistics follow momentum with biased variance") {
    auto x = randn({2, 1, 2, 2, 2}, 7);
    double m = 0, v = 0;
    for (double a : x.buffer()) m += a;
    m /= 16;
    for (double a : x.buffer()) v += (a - m) * (a - m);
    v /= 16;
    Tape<double> t;
    Parameter<double> g("g", Tensor<double>({1}, 1.0)), b("b", Tensor<double>({1}, 0.0));
    Parameter<double> rm("rm", Tensor<double>({1}, 0.0), false), rv("rv", Tensor<double>({1}, 1.0), false);
    ops::batchnorm3d(t.constant(x), t.parameter(g), t.parameter(b), rm, rv, ops::Mode::kTrain);
    CHECK(rm.value[0] == doctest::Approx(0.1 * m));
    CHECK(rv.value[0] == doctest::Approx(0.9 + 0.1 * v));
  }
}

TEST_SUITE("elementwise and dense") {
  TEST_CASE("activations") {
    CHECK(kernels::relu(-1.0) == 0.0);
    CHECK(kernels::relu(2.0) == 2.0);
    CHECK(std::isnan(kernels::relu(double(NAN))));
    CHECK(kernels::sigmoid(0.0) == 0.5);
    CHECK(kernels::gelu(0.0) == 0.0);
    CHECK(kernels::gelu(20.0) == doctest::Approx(20.0));
    CHECK(kernels::kGeluTanhScale == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-15));
    CHECK(kernels::sigmoid(-800.0) >= 0.0);
  }

  TEST_CASE("linear layer arithmetic") {
    Tensor<double> x({1, 2}, {1, 2}), w({2, 2}, {1, 0, 0, 1}), b({2}, {1, 1});
    CHECK(kernels::linear(x, w, &b).buffer() == std::vector<double>{2, 3});
    CHECK(kernels::linear<double>(x, w, nullptr).buffer() == std::vector<double>{1, 2});
    CHECK_THROWS_AS(kernels::linear<double>(x, Tensor<double>({3, 2}), nullptr), std::invalid_argument);
  }

  TEST_CASE("concat, split and broadcasting") {
    auto a = randn({2, 2, 3, 3, 3}, 1), b = randn({2, 3, 3, 3, 3}, 2);
    auto c = kernels::concat_channels<double>({&a, &b});
    CHECK(c.dim(1) == 5);
    auto parts = kernels::split_channels(c, {2, 3});
    CHECK(parts[0] == a);
    CHECK(parts[1] == b);
    Tensor<double> odd({2, 1, 3, 3, 4});
    CHECK_THROWS_AS(kernels::concat_channels<double>({&a, &odd}), std::invalid_argument);

    Tape<double> t;
    auto f = randn({2, 3, 2, 3, 4}, 3);
    auto ones = t.constant(Tensor<double>({2, 3, 2, 3, 4}, 1.0));
    CHECK(ops::mul(t.constant(f), ones).value() == f);
    auto m = randn({2, 3, 1, 1, 1}, 4);
    auto y = ops::mul(t.constant(f), t.constant(m)).value();
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < 24; ++i) CHECK(y[(n * 3 + ch) * 24 + i] == m[n * 3 + ch] * f[(n * 3 + ch) * 24 + i]);
    CHECK_THROWS(ops::mul(t.constant(f), t.constant(Tensor<double>({2, 2, 1, 1, 1}))));
  }

  TEST_CASE("cross entropy values") {
    CHECK(kernels::softmax_cross_entropy<double>(Tensor<double>({1, 2}, {0, 0}), {0}, nullptr) ==
          doctest::Approx(std::log(2.0)));
    CHECK(kernels::softmax_cross_entropy<double>(Tensor<double>({1, 2}, {10, -10}), {0}, nullptr) < 1e-4);
    CHECK(std::isfinite(kernels::softmax_cross_entropy<double>(Tensor<double>({1, 2}, {1000, -1000}), {1}, nullptr)));
  }

  TEST_CASE("patch token order and round trip") {
    auto x = randn({2, 3, 4, 6, 2}, 8);
    const std::size_t P = 2;
    auto tok = kernels::patchify(x, P);
    REQUIRE(tok.shape() == Shape{2, 6, 24});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t k = 0; k < 2; ++k) {
              const std::size_t l = i / P + 2 * (j / P + 3 * (k / P));
              const std::size_t f = ((c * P + i % P) * P + j % P) * P + k % P;
              CHECK(tok[(n * 6 + l) * 24 + f] == x.at(n, c, i, j, k));
            }
    CHECK(kernels::unpatchify(tok, x.shape(), P) == x);
    CHECK(kernels::patchify(x, 1).shape() == Shape{2, 48, 3});
    CHECK_THROWS_AS(kernels::patchify(x, 4), std::invalid_argument);
  }
}

TEST_SUITE("tape") {
  TEST_CASE("scalar derivatives") {
    Tape<double> t;
    Parameter<double> x("x", Tensor<double>({1}, 2.0));
    t.backward(ops::scale_const(t.parameter(x), 3.0));
    CHECK(x.grad[0] == 3.0);
    x.zero_grad();
    Tape<double> t2;
    auto v = t2.parameter(x);
    t2.backward(ops::mul(v, v));
    CHECK(x.grad[0] == 4.0);
  }

  TEST_CASE("non-scalar loss rejected") {
    Tape<double> t;
    Parameter<double> x("x", Tensor<double>({3}, 1.0));
    CHECK_THROWS_AS(t.backward(t.parameter(x)), std::invalid_argument);
  }

  TEST_CASE("unreached parameters keep a zero gradient of their own shape") {
    Tape<double> t;
    Parameter<double> a("a", Tensor<double>({2}, 1.0)), b("b", Tensor<double>({3, 2}, 1.0));
    t.parameter(b);
    t.backward(ops::sum(t.parameter(a)));
    CHECK(b.grad.shape() == b.value.shape());
    for (double g : b.grad.buffer()) CHECK(g == 0.0);
  }

  TEST_CASE("parents precede children") {
    Tape<double> t;
    Parameter<double> a("a", randn({2, 3}, 1));
    ops::sum(ops::gelu(ops::mul(t.parameter(a), t.parameter(a))));
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t p : t.parents(i)) CHECK(p < i);
  }

  TEST_CASE("grad disabled records no closures") {
    Tape<double> t;
    t.set_grad_enabled(false);
    Parameter<double> a("a", randn({2, 3}, 1));
    auto y = ops::sum(t.parameter(a));
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_SUITE("gradient checks") {
  TEST_CASE("identity linear layer is exact") {
    GradCheckOptions o;
    o.tolerance = 1e-9;
    Parameter<double> x("x", randn({3, 4}, 2));
    Parameter<double> w("w", Tensor<double>({4, 4}));
    for (std::size_t i = 0; i < 4; ++i) w.value[i * 4 + i] = 1.0;
    auto r = randn({3, 4}, 3);
    auto rep = grad_check({&x, &w},
                          [&](Tape<double>& t) {
                            return ops::sum(ops::mul(ops::linear<double>(t.parameter(x), t.parameter(w), nullptr), t.constant(r)));
                          },
                          o);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-9);
  }

  // 1e-5 overall; near-zero coordinates carry ~1e-9 absolute roundoff from
  // the central difference, which the 1e-3 floor turns into ~1e-6.
  TEST_CASE("every op and layer on five seeds") {
    for (const auto& name : layer_fragment_names()) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(name);
        CAPTURE(seed);
        const auto rep = check_fragment(name, seed);
        CAPTURE(rep.max_rel_error);
        CHECK(rep.passed);
        CHECK(rep.max_rel_error < 1e-5);
      }
    }
  }

  TEST_CASE("composite graph, cross entropy and fft filter below 1e-6") {
    for (const char* name : {"composite", "softmax-ce", "global-filter", "linear"}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(name);
        CAPTURE(seed);
        const auto rep = check_fragment(name, seed);
        CAPTURE(rep.max_rel_error);
        CHECK(rep.max_rel_error < 1e-6);
      }
    }
  }
}

#include "sfnet/bench.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "sfnet/autodiff.hpp"
#include "sfnet/ops.hpp"

namespace sfnet::bench {

namespace {
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

Tensor<float> attention_mix(const Tensor<float>& tokens, std::size_t block) {
  if (tokens.rank() != 2) throw std::invalid_argument("attention_mix expects [L, D], got " + shape_str(tokens.shape()));
  if (block == 0) throw std::invalid_argument("attention_mix needs block >= 1");
  const auto l = static_cast<Eigen::Index>(tokens.dim(0));
  const auto d = static_cast<Eigen::Index>(tokens.dim(1));
  Eigen::Map<const RowMat> x(tokens.data(), l, d);
  Tensor<float> out(tokens.shape());
  Eigen::Map<RowMat> y(out.data(), l, d);
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));
  // column tiles with a running max / sum keep the score block cache-resident
  constexpr Eigen::Index kTile = 512;
  RowMat scores, acc;
  Eigen::VectorXf run_max, run_sum;
  for (Eigen::Index r0 = 0; r0 < l; r0 += static_cast<Eigen::Index>(block)) {
    const Eigen::Index rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(block), l - r0);
    acc.setZero(rows, d);
    run_max.setConstant(rows, -std::numeric_limits<float>::infinity());
    run_sum.setZero(rows);
    for (Eigen::Index c0 = 0; c0 < l; c0 += kTile) {
      const Eigen::Index cols = std::min(kTile, l - c0);
      scores.noalias() = (x.middleRows(r0, rows) * x.middleRows(c0, cols).transpose()) * scale;
      for (Eigen::Index i = 0; i < rows; ++i) {
        auto row = scores.row(i);
        const float m = std::max(run_max[i], row.maxCoeff());
        const float shrink = std::exp(run_max[i] - m);
        row = (row.array() - m).exp();
        run_sum[i] = run_sum[i] * shrink + row.sum();
        acc.row(i) *= shrink;
        run_max[i] = m;
      }
      acc.noalias() += scores * x.middleRows(c0, cols);
    }
    y.middleRows(r0, rows) = acc.array().colwise() / run_sum.array();
  }
  return out;
}

std::size_t cube_side(std::size_t tokens) {
  std::size_t g = 1;
  while (g * g * g < tokens) g *= 2;
  if (g * g * g != tokens)
    throw std::invalid_argument("token count " + std::to_string(tokens) + " is not a power-of-two cube");
  return g;
}

Tensor<float> fft_mix(const Tensor<float>& tokens, const Tensor<float>& filter_re,
                      const Tensor<float>& filter_im) {
  const std::size_t g = cube_side(tokens.dim(0));
  Tape<float> tape;
  tape.set_grad_enabled(false);
  Var<float> x = tape.constant(tokens.reshaped({1, tokens.dim(0), tokens.dim(1)}));
  Var<float> out = ops::global_filter(x, tape.constant(filter_re), tape.constant(filter_im),
                                      spectral::Grid3{g, g, g});
  return out.value().reshaped(tokens.shape());
}

void BenchResult::write_csv(std::ostream& os) const {
  os << "L,attention_ms,fft_ms\n";
  for (const auto& r : rows) os << r.tokens << ',' << r.attention_ms << ',' << r.fft_ms << '\n';
}

nlohmann::json BenchResult::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) rs.push_back({{"L", r.tokens}, {"attention_ms", r.attention_ms}, {"fft_ms", r.fft_ms}});
  return {{"rows", rs}, {"attention_slope", attention_slope}, {"fft_slope", fft_slope}};
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope fit needs >= 2 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw std::invalid_argument("slope fit needs distinct x values");
  return sxy / sxx;
}

BenchResult bench_mixing(const BenchOptions& opt) {
  if (opt.repeats < 3) throw std::invalid_argument("bench-mixing needs repeats >= 3");
  if (opt.tokens.size() < 2) throw std::invalid_argument("bench-mixing needs at least two token counts");
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  BenchResult res;
  for (std::size_t l : opt.tokens) {
    const std::size_t g = cube_side(l);
    Tensor<float> x({l, opt.dim});
    for (float& v : x.buffer()) v = nd(rng);
    Tensor<float> kr({opt.dim, g, g, g / 2 + 1}), ki(kr.shape());
    for (float& v : kr.buffer()) v = 1.0f + 0.02f * nd(rng);
    for (float& v : ki.buffer()) v = 0.02f * nd(rng);
    float sink = 0;
    BenchRow row;
    row.tokens = l;
    row.attention_ms = median_ms([&] { sink += attention_mix(x)[0]; }, opt.repeats, opt.min_ms);
    row.fft_ms = median_ms([&] { sink += fft_mix(x, kr, ki)[0]; }, opt.repeats, opt.min_ms);
    if (!std::isfinite(sink)) throw std::runtime_error("benchmark produced non-finite output");
    res.rows.push_back(row);
  }
  std::vector<double> ls, at, ft;
  for (const auto& r : res.rows) {
    ls.push_back(static_cast<double>(r.tokens));
    at.push_back(r.attention_ms);
    ft.push_back(r.fft_ms);
  }
  res.attention_slope = loglog_slope(ls, at);
  res.fft_slope = loglog_slope(ls, ft);
  return res;
}

}  // namespace sfnet::bench

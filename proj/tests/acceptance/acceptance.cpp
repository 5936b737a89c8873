// Acceptance runner. Each criterion prints one PASS/FAIL line; the exit code
// is non-zero when any selected criterion fails.
//
//   acceptance            run all criteria
//   acceptance 3 5 12     run the listed criteria

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sfnet/bench.hpp"
#include "sfnet/data.hpp"
#include "sfnet/fragments.hpp"
#include "sfnet/model/accounting.hpp"
#include "sfnet/model/checkpoint.hpp"
#include "sfnet/model/filters.hpp"
#include "sfnet/model/sfnet.hpp"
#include "sfnet/spectral.hpp"
#include "sfnet/train.hpp"
#include "test_util.hpp"

using namespace sfnet;
namespace fs = std::filesystem;
using cd = std::complex<double>;
using testutil::randn;
using model::Rng;

namespace {

// Pinned tolerances.
constexpr double kFftTol = 1e-10;
constexpr double kRoundTripTol = 1e-12;
constexpr double kParsevalTol = 1e-6;
constexpr double kGradTol = 1e-5;
constexpr double kAdjointTol = 1e-10;
constexpr double kOracleTol = 1e-6;
constexpr double kFilterCsvTol = 1e-6;
constexpr double kLearnAcc = 0.90;
constexpr double kLearnAuc = 0.95;
constexpr std::size_t kLearnEpochs = 20;
constexpr double kAttentionSlopeLo = 1.7, kAttentionSlopeHi = 2.3;
constexpr double kFftSlopeLo = 0.9, kFftSlopeHi = 1.4;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sfnet_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1 ---------------------------------------------------------------------

Outcome fft_oracle() {
  double worst = 0;
  for (std::size_t n : {2, 4, 8})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto x = randn({n, n, n}, seed);
      const auto half = spectral::fft3(x);
      const auto full = spectral::naive_dft3(x);
      const std::size_t hz = n / 2 + 1;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < hz; ++c) {
            const std::size_t h = (a * n + b) * hz + c, f = (a * n + b) * n + c;
            worst = std::max(worst, std::abs(cd(half.coeffs.re[h], half.coeffs.im[h]) - cd(full.re[f], full.im[f])));
          }
    }
  return {worst < kFftTol, "max |fft3 - naive_dft3| = " + fmt(worst) + " over {2,4,8}^3 x 5 seeds"};
}

// ---- 2 ---------------------------------------------------------------------

Outcome round_trip() {
  double rt = 0, pv = 0;
  const std::vector<spectral::Grid3> grids{{2, 2, 2}, {4, 4, 4}, {8, 8, 8}, {16, 16, 16}, {4, 8, 16}};
  for (std::size_t i = 0; i < grids.size(); ++i)
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto& g = grids[i];
      const auto x = randn({2, g.x, g.y, g.z}, 100 * i + seed);
      const auto s = spectral::fft3(x);
      rt = std::max(rt, testutil::max_abs(spectral::ifft3(s), x));
      double e = 0;
      for (double v : x.buffer()) e += v * v;
      pv = std::max(pv, std::abs(spectral::half_spectrum_energy(s) / double(g.volume()) - e) / e);
    }
  return {rt < kRoundTripTol && pv < kParsevalTol, "round trip " + fmt(rt) + ", Parseval relative " + fmt(pv)};
}

// ---- 3 ---------------------------------------------------------------------

Outcome grad_certification() {
  GradCheckOptions o;
  o.tolerance = kGradTol;
  o.step = 1e-5;
  o.coords_per_tensor = 32;
  double worst = 0;
  std::string worst_name, failed;
  auto names = layer_fragment_names();
  names.push_back("sfnet-tiny");
  for (const auto& name : names) {
    const auto r = check_fragment(name, 0, o);
    if (r.max_rel_error > worst) worst = r.max_rel_error, worst_name = name;
    if (!r.passed) failed += " " + name;
  }
  return {failed.empty(), std::to_string(names.size()) + " fragments incl. sfnet-tiny, worst " + fmt(worst) + " (" +
                              worst_name + ")" + (failed.empty() ? "" : "; failed:" + failed)};
}

// ---- 4 ---------------------------------------------------------------------

// <A x, y> against <x, A^T y>, with A^T y taken from the tape's backward pass.
Outcome spectral_adjoint() {
  double worst = 0;
  const std::vector<spectral::Grid3> grids{{2, 2, 2}, {4, 4, 4}, {4, 2, 8}, {8, 8, 8}, {2, 8, 4}};
  for (std::uint64_t seed = 0; seed < grids.size(); ++seed) {
    Rng rng(seed);
    const auto g = grids[seed];
    model::GlobalFilterBlock<double> blk("f", 6, g, 8, 2, 2, false, rng);
    auto fr = randn(blk.filter_real.value.shape(), seed + 10), fi = randn(blk.filter_imag.value.shape(), seed + 20);
    blk.filter_real.value = fr;
    blk.filter_imag.value = fi;
    Parameter<double> x("x", randn({2, g.volume(), 6}, seed + 30));
    const auto y = randn(x.value.shape(), seed + 40);
    Tape<double> t;
    auto out = blk.spectral_path(t, t.parameter(x));
    double lhs = 0, rhs = 0, scale = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) lhs += out.value()[i] * y[i];
    t.backward(ops::sum(ops::mul(out, t.constant(y))));
    for (std::size_t i = 0; i < y.numel(); ++i) {
      rhs += x.value[i] * x.grad[i];
      scale += std::abs(x.value[i] * x.grad[i]);
    }
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return {worst < kAdjointTol, "max relative |<Ax,y> - <x,A^T y>| = " + fmt(worst) + " on 5 grids"};
}

// ---- 5 ---------------------------------------------------------------------

template <typename M>
void perturb(M& m, std::uint64_t seed) {
  std::uint64_t s = seed;
  m.visit([&](Parameter<double>& p) {
    if (!p.trainable) return;
    const auto r = randn(p.value.shape(), ++s, 0.3);
    for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] += r[i];
  });
}

Outcome equation_oracles() {
  double att = 0, freq = 0;
  const std::vector<spectral::Grid3> grids{{2, 2, 2}, {4, 2, 4}, {2, 4, 8}, {4, 4, 4}, {8, 2, 2}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    model::AttentionModule<double> m("att", 8, 2, true, rng);
    perturb(m, seed * 100);
    const auto f = randn({2, 8, 4, 5, 3}, seed + 7);
    Tape<double> t;
    att = std::max(att, testutil::max_abs(m.forward(t, t.constant(f), model::Mode::kTrain).value(),
                                          oracle::attention_oracle(f, m)));
    Rng rng2(seed);
    model::GlobalFilterBlock<double> blk("f", 5, grids[seed], 12, 3, 4, true, rng2);
    perturb(blk, seed + 40);
    const auto x = randn({2, grids[seed].volume(), 5}, seed + 3);
    freq = std::max(freq, testutil::max_abs(blk.forward(t, t.constant(x)).value(), oracle::freq_block_oracle(x, blk)));
  }
  return {att < kOracleTol && freq < kOracleTol, "attention " + fmt(att) + ", frequency block " + fmt(freq) + " over 5 seeds"};
}

// ---- 6 ---------------------------------------------------------------------

Outcome structural_arithmetic() {
  std::size_t cases = 0;
  std::string bad;
  for (std::size_t blocks = 1; blocks <= 4; ++blocks)
    for (std::size_t layers = 1; layers <= 4; ++layers)
      for (std::size_t g : {4, 8, 12}) {
        auto cfg = model::SFNetConfig::tiny();
        cfg.num_dense_blocks = blocks;
        cfg.layers_per_block = layers;
        cfg.growth_rate = g;
        model::SFNet<float> net(cfg, 0);
        std::size_t c = cfg.stem_channels;
        for (std::size_t b = 0; b < blocks; ++b) {
          for (std::size_t l = 0; l < layers; ++l)
            if (net.blocks[b].layers[l].in_channels != c + l * g) bad += " block-input";
          c += layers * g;
          if (net.blocks[b].out_channels() != c) bad += " block-output";
          if (b + 1 < blocks) {
            c = (c + 1) / 2;
            if (net.transitions[b].conv.out_channels() != c) bad += " transition";
          }
        }
        Tape<float> t;
        t.set_grad_enabled(false);
        const auto feats = net.features(t, t.constant(Tensor<float>({1, 1, 32, 32, 32}, 0.25f)), model::Mode::kEval);
        const std::size_t side = 8 >> (blocks - 1);
        if (feats.shape() != Shape{1, c, side, side, side}) bad += " features";
        for (std::size_t p : {1, 2, 4}) {
          if (p > side) continue;
          cfg.patch_size = p;
          const auto geo = model::token_geometry(cfg);
          const std::size_t q = side / p;
          if (geo.tokens != q * q * q || geo.embed != c * p * p * p) bad += " tokens";
          ++cases;
        }
      }
  for (std::size_t d : {8, 16, 64, 128})
    for (std::size_t h : {16, 64, 512})
      for (std::size_t r1 : {1, 4, 8})
        for (std::size_t r2 : {2, 8, 16}) {
          Rng rng(1);
          model::LowRankMLP<float> m("m", d, h, r1, r2, rng);
          std::size_t n = 0;
          m.visit([&](Parameter<float>& p) { n += p.value.numel(); });
          if (n != d * r1 + r1 * h + h + h * r2 + r2 * d + d || n != model::low_rank_mlp_params(d, h, r1, r2))
            bad += " low-rank";
          ++cases;
        }
  return {bad.empty(), std::to_string(cases) + " configurations" + (bad.empty() ? "" : "; mismatches:" + bad)};
}

// ---- 7 ---------------------------------------------------------------------

Outcome metric_suite() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> u(0, 80);
  std::size_t bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t tp = u(rng), fn = u(rng), fp = u(rng), tn = u(rng);
    const auto m = train::metrics({tp, fn, fp, tn});
    auto same = [](const std::optional<double>& v, std::size_t num, std::size_t den) {
      return den == 0 ? !v.has_value() : (v && *v == double(num) / double(den));
    };
    if (!same(m.acc, tp + tn, tp + tn + fp + fn) || !same(m.sen, tp, tp + fn) || !same(m.spe, tn, tn + fp) ||
        !same(m.f1, 2 * tp, 2 * tp + fp + fn))
      ++bad;
  }
  std::size_t patterns = 0;
  double worst = 0;
  std::uniform_int_distribution<int> level(0, 5);
  for (std::size_t n = 2; n <= 12; ++n) {
    std::vector<double> s(n);
    for (auto& v : s) v = 0.2 * level(rng);
    for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
      std::vector<int> l(n);
      for (std::size_t i = 0; i < n; ++i) l[i] = (mask >> i) & 1;
      double num = 0, pairs = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (l[i] == 1 && l[j] == 0) {
            pairs += 1;
            num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
          }
      worst = std::max(worst, std::abs(train::auc(s, l) - num / pairs));
      ++patterns;
    }
  }
  return {bad == 0 && worst < 1e-12, std::to_string(bad) + " of 1000 tables differ; AUC vs pair counting max " +
                                         fmt(worst) + " over " + std::to_string(patterns) + " label patterns"};
}

// ---- 8 / 9 -----------------------------------------------------------------

struct SplitData {
  train::Dataset train, test;
};

SplitData synthetic_split(std::uint64_t seed) {
  data::SynthSpec spec;
  spec.seed = 1000 + seed;
  SplitData d;
  for (std::size_t i = 0; i < 250; ++i) {
    const int label = int(i % 2);
    auto v = data::normalize_volume(data::synthesize_volume(spec, label, i)).volume;
    (i < 200 ? d.train : d.test).add(std::move(v), label, std::to_string(i));
  }
  return d;
}

struct RunScore {
  double acc = 0, auc = 0, loss = 0;
};

RunScore train_and_test(const model::SFNetConfig& cfg, const SplitData& d, std::uint64_t seed) {
  train::TrainConfig tc;
  tc.epochs = kLearnEpochs;
  tc.seed = seed;
  const auto r = train::train_fold(cfg, d.train, train::Dataset{}, &d.test, tc, 0);
  return {r.test_final->metrics.acc.value_or(0), r.test_final->auc.value_or(0), r.test_final->loss};
}

Outcome learnability() {
  std::size_t ok = 0;
  std::string per;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = train_and_test(model::SFNetConfig::tiny(), synthetic_split(seed), seed);
    ok += s.acc >= kLearnAcc && s.auc >= kLearnAuc;
    per += " " + fmt(s.acc) + "/" + fmt(s.auc);
    std::cerr << "  seed " << seed << ": acc " << s.acc << " auc " << s.auc << "\n";
  }
  // single batch
  const auto d = synthetic_split(99);
  train::Dataset eight;
  for (std::size_t i = 0; i < 8; ++i) eight.add(d.train.volumes[i], d.train.labels[i], d.train.ids[i]);
  train::TrainConfig tc;
  tc.epochs = 100;
  tc.batch = 8;
  const double overfit = train::train_fold(model::SFNetConfig::tiny(), eight, train::Dataset{}, nullptr, tc, 0)
                             .final_train_accuracy;
  return {ok >= 4 && overfit == 1.0, std::to_string(ok) + "/5 seeds reach acc>=0.90 and AUC>=0.95 (acc/auc:" + per +
                                         "); single-batch train accuracy " + fmt(overfit)};
}

Outcome ablation() {
  double full_sum = 0, base_sum = 0;
  std::size_t wins = 0;
  std::string per;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = synthetic_split(seed);
    const auto f = train_and_test(model::SFNetConfig::tiny(), d, seed);
    const auto b = train_and_test(model::SFNetConfig::frequency_only(), d, seed);
    full_sum += f.acc;
    base_sum += b.acc;
    // accuracy first; equal accuracy is decided by test cross-entropy
    const bool win = f.acc > b.acc || (f.acc == b.acc && f.loss < b.loss);
    wins += win;
    per += " " + fmt(f.acc) + "|" + fmt(b.acc);
    std::cerr << "  seed " << seed << ": full acc " << f.acc << " loss " << f.loss << ", baseline acc " << b.acc
              << " loss " << b.loss << (win ? "  full wins" : "  baseline wins") << "\n";
  }
  return {full_sum >= base_sum && wins >= 4, "mean acc full " + fmt(full_sum / 5) + " vs baseline " +
                                                 fmt(base_sum / 5) + ", full wins " + std::to_string(wins) +
                                                 "/5 (full|baseline:" + per + ")"};
}

// ---- 10 --------------------------------------------------------------------

Outcome complexity() {
  bench::BenchOptions o;
  o.tokens = {512, 4096, 32768};
  const auto r = bench::bench_mixing(o);
  for (const auto& row : r.rows)
    std::cerr << "  L=" << row.tokens << " attention " << row.attention_ms << " ms, fft " << row.fft_ms << " ms\n";
  const bool ok = r.attention_slope >= kAttentionSlopeLo && r.attention_slope <= kAttentionSlopeHi &&
                  r.fft_slope >= kFftSlopeLo && r.fft_slope <= kFftSlopeHi;
  return {ok, "attention slope " + fmt(r.attention_slope) + ", fft slope " + fmt(r.fft_slope)};
}

// ---- 11 --------------------------------------------------------------------

Outcome accounting_trends() {
  std::string bad;
  auto cost = [](std::size_t blocks, std::size_t depth) {
    auto c = model::SFNetConfig::full_scale();
    c.num_dense_blocks = blocks;
    c.freq_depth = depth;
    return std::pair{model::count_params(c).total, model::count_flops(c).total};
  };
  for (std::size_t depth : {0, 2, 6})
    for (std::size_t b = 1; b < 4; ++b) {
      const auto lo = cost(b, depth), hi = cost(b + 1, depth);
      if (hi.first <= lo.first || hi.second <= lo.second) bad += " blocks(" + std::to_string(b) + ")";
    }
  for (std::size_t b = 1; b <= 4; ++b)
    for (std::size_t depth = 0; depth < 10; ++depth) {
      const auto lo = cost(b, depth), hi = cost(b, depth + 1);
      if (hi.first <= lo.first || hi.second <= lo.second) bad += " depth(" + std::to_string(depth) + ")";
    }
  const auto p = model::SFNetConfig::full_scale();
  const auto base = cost(p.num_dense_blocks, p.freq_depth);
  const auto more_blocks = cost(p.num_dense_blocks + 1, p.freq_depth);
  const auto more_depth = cost(p.num_dense_blocks, p.freq_depth + 2);
  const auto db = more_blocks.first - base.first, dd = more_depth.first - base.first;
  const auto fb = more_blocks.second - base.second, fd = more_depth.second - base.second;
  if (db <= dd || fb <= fd) bad += " marginal";
  return {bad.empty(), "+1 block: +" + std::to_string(db) + " params, +" + std::to_string(fb) + " FLOPs; +2 depth: +" +
                           std::to_string(dd) + " params, +" + std::to_string(fd) + " FLOPs" +
                           (bad.empty() ? "" : "; violations:" + bad)};
}

// ---- 12 --------------------------------------------------------------------

Outcome filter_contract() {
  auto cfg = model::SFNetConfig::tiny();
  cfg.num_dense_blocks = 2;  // 4^3 token grid
  model::SFNet<float> net(cfg, 0);
  auto& blk = net.freq[0];
  blk.filter_real.value.fill(0.0f);
  blk.filter_imag.value.fill(0.0f);
  blk.filter_real.value[0] = 1.0f;  // DC bin of channel 0
  std::string bad;
  const auto dir = scratch("filters");
  for (auto plane : {model::Plane::kXY, model::Plane::kYZ, model::Plane::kXZ}) {
    const auto imgs = model::export_filter_spectra(net, plane, {0}, {0}, dir);
    const auto& img = imgs.at(0);
    const auto it = std::max_element(img.magnitude.begin(), img.magnitude.end());
    const std::size_t idx = std::distance(img.magnitude.begin(), it);
    if (idx != (img.height / 2) * img.width + img.width / 2 || std::count(img.magnitude.begin(), img.magnitude.end(), *it) != 1)
      bad += " dc-" + model::plane_name(plane);
  }
  // random filters against a direct rebuild of the full spectrum
  auto& b2 = net.freq[1];
  b2.filter_real.value = randn<float>(b2.filter_real.value.shape(), 1);
  b2.filter_imag.value = randn<float>(b2.filter_imag.value.shape(), 2);
  const auto re = b2.filter_real.value.cast<double>(), im = b2.filter_imag.value.cast<double>();
  const auto g = b2.grid;
  double worst = 0;
  std::size_t rows = 0;
  for (auto plane : {model::Plane::kXY, model::Plane::kYZ, model::Plane::kXZ}) {
    const auto pdir = dir / model::plane_name(plane);
    model::export_filter_spectra(net, plane, {}, {1}, pdir);
    std::ifstream csv(pdir / "filter_spectra.csv");
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
      std::stringstream ss(line);
      std::string f[6];
      for (auto& s : f) std::getline(ss, s, ',');
      const std::size_t ch = std::stoul(f[1]), u = std::stoul(f[3]), v = std::stoul(f[4]);
      auto unshift = [](std::size_t i, std::size_t n) { return (i + n - n / 2) % n; };
      std::size_t kx = 0, ky = 0, kz = 0;
      if (plane == model::Plane::kXY) kx = unshift(u, g.x), ky = unshift(v, g.y);
      if (plane == model::Plane::kYZ) ky = unshift(u, g.y), kz = unshift(v, g.z);
      if (plane == model::Plane::kXZ) kx = unshift(u, g.x), kz = unshift(v, g.z);
      worst = std::max(worst, std::abs(std::stod(f[5]) - std::abs(oracle::full_filter(re, im, g, ch, kx, ky, kz))));
      ++rows;
    }
  }
  return {bad.empty() && worst < kFilterCsvTol && rows > 0,
          "DC peak at centre on all planes" + (bad.empty() ? "" : std::string(" except") + bad) + "; CSV max error " +
              fmt(worst) + " over " + std::to_string(rows) + " rows"};
}

// ---- 13 --------------------------------------------------------------------

Outcome determinism() {
  std::string bad;
  data::SynthSpec spec;
  spec.seed = 5;
  const auto da = scratch("det_a"), db = scratch("det_b");
  const auto recs = data::generate_dataset(spec, 10, da);
  const auto recs_b = data::generate_dataset(spec, 10, db);
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (slurp(recs[i].path) != slurp(recs_b[i].path)) bad += " volumes";
  train::TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 3;
  const auto plan = data::make_folds(recs, tc.seed);
  const auto ra = scratch("run_a"), rb = scratch("run_b");
  train::run_cross_validation(model::SFNetConfig::tiny(), recs, plan, tc, ra);
  train::run_cross_validation(model::SFNetConfig::tiny(), recs, plan, tc, rb);
  if (slurp(ra / "report.json") != slurp(rb / "report.json")) bad += " report";
  if (slurp(ra / "fold2_best" / "weights.bin") != slurp(rb / "fold2_best" / "weights.bin")) bad += " weights";

  auto loaded = model::load_checkpoint<float>(ra / "fold0_final");
  auto again = model::load_checkpoint<float>(ra / "fold0_final");
  train::Dataset ds = train::load_dataset(recs, plan.test);
  const auto e1 = train::evaluate(*loaded, ds), e2 = train::evaluate(*again, ds);
  if (e1.scores != e2.scores) bad += " reload";
  const auto resaved = scratch("resave");
  model::save_checkpoint(*loaded, resaved, model::read_manifest(ra / "fold0_final").meta);
  if (slurp(resaved / "weights.bin") != slurp(ra / "fold0_final" / "weights.bin")) bad += " resave";
  auto third = model::load_checkpoint<float>(resaved);
  Tape<float> t1, t2;
  t1.set_grad_enabled(false);
  t2.set_grad_enabled(false);
  const auto batch = ds.batch({0, 1, 2});
  if (!(loaded->forward(t1, t1.constant(batch), model::Mode::kEval).value() ==
        third->forward(t2, t2.constant(batch), model::Mode::kEval).value()))
    bad += " logits";
  return {bad.empty(), bad.empty() ? "volumes, report.json, weights and reloaded logits byte-identical"
                                   : "differences in:" + bad};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "fft-oracle", 10, fft_oracle},
      {2, "round-trip-parseval", 5, round_trip},
      {3, "gradient-certification", 300, grad_certification},
      {4, "spectral-adjoint", 10, spectral_adjoint},
      {5, "equation-oracles", 60, equation_oracles},
      {6, "structural-arithmetic", 60, structural_arithmetic},
      {7, "metric-suite", 30, metric_suite},
      {8, "learnability", 1800, learnability},
      {9, "ablation-trend", 3600, ablation},
      {10, "mixing-complexity", 600, complexity},
      {11, "accounting-trends", 10, accounting_trends},
      {12, "filter-export", 10, filter_contract},
      {13, "determinism-persistence", 300, determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria()) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), c.id) == ids.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " " << c.name << ": " << o.detail << " ["
              << fmt(secs) << " s, budget " << c.budget_s << " s" << (in_time ? "" : ", over budget") << "]"
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "sfnet/data.hpp"
#include "test_util.hpp"

using namespace sfnet;
using namespace sfnet::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sfnet_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Dark voxels within `window` of the grid centre.
std::size_t cavity_count(const Tensor<float>& v, double window = 10.0) {
  const std::size_t nx = v.dim(1), ny = v.dim(2), nz = v.dim(3);
  std::size_t n = 0;
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = 0; z < nz; ++z) {
        const double dx = x - 0.5 * (nx - 1.0), dy = y - 0.5 * (ny - 1.0), dz = z - 0.5 * (nz - 1.0);
        if (dx * dx + dy * dy + dz * dz <= window * window && v[(x * ny + y) * nz + z] < 0.5f) ++n;
      }
  return n;
}

std::vector<VolumeRecord> fake_records(std::size_t n0, std::size_t n1) {
  std::vector<VolumeRecord> r;
  for (std::size_t i = 0; i < n0 + n1; ++i) r.push_back({"s" + std::to_string(i), i < n0 ? 0 : 1, "x", {2, 2, 2}});
  return r;
}

void check_plan(const FoldPlan& plan, const std::vector<VolumeRecord>& records) {
  const std::size_t n = records.size();
  std::size_t ones = 0;
  for (const auto& r : records) ones += r.label;
  const double p1 = double(ones) / n;
  auto label_ok = [&](const std::vector<std::size_t>& set) {
    std::size_t c = 0;
    for (auto i : set) c += records[i].label;
    return std::abs(double(c) - p1 * set.size()) <= 1.0;
  };
  std::set<std::size_t> test(plan.test.begin(), plan.test.end());
  CHECK(test.size() == plan.test.size());
  CHECK(label_ok(plan.test));
  REQUIRE(plan.folds.size() == kNumFolds);
  std::vector<int> val_hits(n, 0);
  for (const auto& f : plan.folds) {
    CHECK(std::is_sorted(f.train.begin(), f.train.end()));
    CHECK(std::is_sorted(f.val.begin(), f.val.end()));
    CHECK(label_ok(f.val));
    CHECK(label_ok(f.train));
    std::set<std::size_t> tr(f.train.begin(), f.train.end());
    CHECK(tr.size() + f.val.size() + test.size() == n);
    for (auto i : f.val) {
      CHECK(tr.count(i) == 0);
      CHECK(test.count(i) == 0);
      ++val_hits[i];
    }
    for (auto i : f.train) CHECK(test.count(i) == 0);
  }
  for (std::size_t i = 0; i < n; ++i) CHECK(val_hits[i] == (test.count(i) ? 0 : 1));
}

}  // namespace

TEST_SUITE("synthesis") {
  TEST_CASE("generation is byte-deterministic") {
    SynthSpec s;
    s.extent = {16, 16, 16};
    s.seed = 11;
    const auto a = scratch("det_a"), b = scratch("det_b");
    const auto ra = generate_dataset(s, 3, a);
    const auto rb = generate_dataset(s, 3, b);
    REQUIRE(ra.size() == 6);
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(slurp(ra[i].path) == slurp(rb[i].path));
    CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
    s.seed = 12;
    CHECK_FALSE(synthesize_volume(s, 0, 0) == synthesize_volume(SynthSpec{.extent = {16, 16, 16}, .seed = 11}, 0, 0));
  }

  TEST_CASE("class B cavity exceeds class A without noise or jitter") {
    SynthSpec s;
    s.noise_sigma = 0;
    s.translate_jitter = 0;
    for (std::uint64_t i = 0; i < 20; ++i) {
      s.seed = i;
      CHECK(cavity_count(synthesize_volume(s, 1, i)) > cavity_count(synthesize_volume(s, 0, i)));
    }
  }

  TEST_CASE("cavity count separates the classes at defaults") {
    std::vector<std::pair<std::size_t, int>> rows;
    SynthSpec s;
    s.seed = 3;
    for (std::uint64_t i = 0; i < 100; ++i)
      for (int label : {0, 1}) rows.push_back({cavity_count(synthesize_volume(s, label, 2 * i + label)), label});
    std::size_t best = 0;
    for (const auto& [t, _] : rows) {
      std::size_t ok = 0;
      for (const auto& [c, l] : rows) ok += (c > t) == (l == 1);
      best = std::max(best, ok);
    }
    CHECK(double(best) / rows.size() >= 0.95);
  }

  TEST_CASE("volume statistics") {
    const auto v = synthesize_volume(SynthSpec{}, 0, 0);
    CHECK(v.shape() == Shape{1, 32, 32, 32});
    CHECK(v.all_finite());
    // brain interior near 1, background near 0
    CHECK(std::abs(v[0]) < 0.3f);
  }

  TEST_CASE("manifest counts and round trip") {
    SynthSpec s;
    s.extent = {8, 8, 8};
    const auto dir = scratch("manifest");
    const auto recs = generate_dataset(s, 5, dir);
    const auto back = read_manifest(dir / "manifest.csv");
    REQUIRE(back.size() == 10);
    CHECK(std::count_if(back.begin(), back.end(), [](const VolumeRecord& r) { return r.label == 1; }) == 5);
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].subject_id == recs[i].subject_id);
      CHECK(back[i].shape == recs[i].shape);
      CHECK(fs::equivalent(back[i].path, recs[i].path));
      CHECK(load_volume(back[i]) == synthesize_volume(s, recs[i].label, i));
    }
    CHECK_THROWS_AS(generate_dataset(s, 0, dir), DataError);
  }
}

TEST_SUITE("volume io") {
  TEST_CASE("save and load") {
    const auto dir = scratch("io");
    auto v = testutil::randn<float>({1, 3, 4, 5}, 1);
    save_volume(dir / "v.raw", v);
    CHECK(fs::file_size(dir / "v.raw") == 60 * 4);
    CHECK(load_volume(dir / "v.raw", {3, 4, 5}) == v);
    // x-fastest on disk: the second float is voxel (1, 0, 0)
    std::ifstream in(dir / "v.raw", std::ios::binary);
    float f[2];
    in.read(reinterpret_cast<char*>(f), sizeof f);
    CHECK(f[1] == v[(1 * 4 + 0) * 5 + 0]);

    Tensor<float> c({1, 2, 2, 2}, 3.5f);
    save_volume(dir / "c.raw", c);
    CHECK(load_volume(dir / "c.raw", {2, 2, 2}) == c);

    fs::resize_file(dir / "v.raw", 100);
    CHECK_THROWS_WITH_AS(load_volume(dir / "v.raw", {3, 4, 5}), doctest::Contains("240"), DataError);
    CHECK_THROWS_WITH_AS(load_volume(dir / "v.raw", {3, 4, 5}), doctest::Contains("100"), DataError);

    Tensor<float> bad({1, 2, 2, 2}, 1.0f);
    bad[3] = std::numeric_limits<float>::quiet_NaN();
    save_volume(dir / "nan.raw", bad);
    CHECK_THROWS_AS(load_volume(dir / "nan.raw", {2, 2, 2}), DataError);
  }

  TEST_CASE("normalization") {
    auto v = testutil::randn<float>({1, 6, 6, 6}, 2, 3.0f);
    for (auto& x : v.buffer()) x += 7.0f;
    const auto r = normalize_volume(v);
    CHECK_FALSE(r.constant);
    double m = 0, s = 0;
    for (float x : r.volume.buffer()) m += x;
    m /= r.volume.numel();
    for (float x : r.volume.buffer()) s += (x - m) * (x - m);
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(std::sqrt(s / r.volume.numel()) - 1) < 1e-5);
    auto w = v;
    for (auto& x : w.buffer()) x = 2.5f * x - 4.0f;
    CHECK(testutil::max_abs(normalize_volume(w).volume, r.volume) < 1e-5);
    const auto z = normalize_volume(Tensor<float>({1, 2, 2, 2}, 4.0f));
    CHECK(z.constant);
    for (float x : z.volume.buffer()) CHECK(x == 0.0f);
  }
}

TEST_SUITE("folds") {
  TEST_CASE("hundred records") {
    const auto recs = fake_records(50, 50);
    const auto plan = make_folds(recs, 0);
    CHECK(plan.test.size() == 15);
    for (const auto& f : plan.folds) {
      CHECK(f.val.size() == 17);
      CHECK(f.train.size() == 68);
    }
    check_plan(plan, recs);
  }

  TEST_CASE("invariants for seeds 0..9 and uneven sizes") {
    for (auto [a, b] : {std::pair<std::size_t, std::size_t>{50, 50}, {37, 23}, {5, 5}, {100, 150}, {8, 13}}) {
      const auto recs = fake_records(a, b);
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CAPTURE(a);
        CAPTURE(seed);
        check_plan(make_folds(recs, seed), recs);
      }
    }
  }

  TEST_CASE("seed behaviour and serialization") {
    const auto recs = fake_records(40, 40);
    const auto a = make_folds(recs, 4), b = make_folds(recs, 4), c = make_folds(recs, 5);
    CHECK(to_json(a) == to_json(b));
    CHECK(to_json(a) != to_json(c));
    CHECK(to_json(fold_plan_from_json(to_json(a))) == to_json(a));
    CHECK(to_json(a).at("seed") == 4);
    CHECK(to_json(a).at("folds").size() == 5);
  }

  TEST_CASE("rejections") {
    CHECK_THROWS_AS(make_folds(fake_records(20, 0), 0), DataError);
    CHECK_THROWS_AS(make_folds(fake_records(4, 4), 0), DataError);
  }
}

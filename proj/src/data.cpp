#include "sfnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace sfnet::data {

namespace fs = std::filesystem;

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0) return {1.0};
  const auto radius = static_cast<long>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable convolution with zero padding; vol is [nx, ny, nz] row-major.
void smooth(std::vector<double>& vol, const std::array<std::size_t, 3>& n, double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  const auto r = static_cast<long>(k.size() / 2);
  const std::array<std::size_t, 3> stride{n[1] * n[2], n[2], 1};
  std::vector<double> tmp(vol.size());
  for (std::size_t axis = 0; axis < 3; ++axis) {
    for (std::size_t x = 0; x < n[0]; ++x)
      for (std::size_t y = 0; y < n[1]; ++y)
        for (std::size_t z = 0; z < n[2]; ++z) {
          const std::array<std::size_t, 3> pos{x, y, z};
          const std::size_t base = x * stride[0] + y * stride[1] + z;
          double acc = 0;
          for (long t = -r; t <= r; ++t) {
            const long q = static_cast<long>(pos[axis]) + t;
            if (q < 0 || q >= static_cast<long>(n[axis])) continue;
            const long off = t * static_cast<long>(stride[axis]);
            acc += k[static_cast<std::size_t>(t + r)] *
                   vol[static_cast<std::size_t>(static_cast<long>(base) + off)];
          }
          tmp[base] = acc;
        }
    vol.swap(tmp);
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

Tensor<float> synthesize_volume(const SynthSpec& spec, int label, std::uint64_t sample_index) {
  if (label != 0 && label != 1) throw DataError("label must be 0 or 1");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(sample_index),
                    static_cast<std::uint32_t>(sample_index >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-spec.translate_jitter, spec.translate_jitter);

  const auto& n = spec.extent;
  const double mean_r = label == 1 ? spec.radius_b : spec.radius_a;
  const double radius = std::max(0.5, mean_r + spec.radius_sigma * gauss(rng));
  std::array<double, 3> center{};
  for (std::size_t a = 0; a < 3; ++a)
    center[a] = 0.5 * static_cast<double>(n[a] - 1) + (spec.translate_jitter > 0 ? shift(rng) : 0.0);
  std::array<double, 3> semi{};
  for (std::size_t a = 0; a < 3; ++a) semi[a] = spec.brain_fraction * static_cast<double>(n[a]);

  std::vector<double> vol(n[0] * n[1] * n[2], 0.0);
  for (std::size_t x = 0; x < n[0]; ++x)
    for (std::size_t y = 0; y < n[1]; ++y)
      for (std::size_t z = 0; z < n[2]; ++z) {
        const std::array<double, 3> d{static_cast<double>(x) - center[0],
                                      static_cast<double>(y) - center[1],
                                      static_cast<double>(z) - center[2]};
        double e = 0, r2 = 0;
        for (std::size_t a = 0; a < 3; ++a) {
          e += d[a] * d[a] / (semi[a] * semi[a]);
          r2 += d[a] * d[a];
        }
        double v = e <= 1.0 ? 1.0 : 0.0;
        if (r2 <= radius * radius) v = spec.cavity_intensity;
        vol[(x * n[1] + y) * n[2] + z] = v;
      }
  smooth(vol, n, spec.smoothing);
  Tensor<float> out({1, n[0], n[1], n[2]});
  for (std::size_t i = 0; i < vol.size(); ++i)
    out[i] = static_cast<float>(vol[i] + (spec.noise_sigma > 0 ? spec.noise_sigma * gauss(rng) : 0.0));
  return out;
}

void save_volume(const fs::path& path, const Tensor<float>& volume) {
  if (volume.rank() != 4 || volume.dim(0) != 1)
    throw DataError("save_volume expects [1, nx, ny, nz], got " + shape_str(volume.shape()));
  const std::size_t nx = volume.dim(1), ny = volume.dim(2), nz = volume.dim(3);
  std::vector<unsigned char> bytes(volume.numel() * 4);
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const float v = volume[(x * ny + y) * nz + z];
        const auto bits = std::bit_cast<std::uint32_t>(v);
        const std::size_t o = 4 * (x + nx * (y + ny * z));
        for (std::size_t b = 0; b < 4; ++b) bytes[o + b] = static_cast<unsigned char>(bits >> (8 * b));
      }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write volume " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing volume " + path.string());
}

Tensor<float> load_volume(const fs::path& path, const std::array<std::size_t, 3>& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open volume " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t nx = shape[0], ny = shape[1], nz = shape[2];
  const std::size_t expected = 4 * nx * ny * nz;
  if (bytes.size() != expected) {
    throw DataError("volume " + path.string() + " has " + std::to_string(bytes.size()) +
                    " bytes, expected " + std::to_string(expected));
  }
  Tensor<float> out({1, nx, ny, nz});
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const std::size_t o = 4 * (x + nx * (y + ny * z));
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[o + b]) << (8 * b);
        const float v = std::bit_cast<float>(bits);
        if (!std::isfinite(v)) {
          throw DataError("volume " + path.string() + " has a non-finite value at (" +
                          std::to_string(x) + ", " + std::to_string(y) + ", " + std::to_string(z) + ")");
        }
        out[(x * ny + y) * nz + z] = v;
      }
  return out;
}

Tensor<float> load_volume(const VolumeRecord& record) { return load_volume(record.path, record.shape); }

void write_manifest(const fs::path& path, const std::vector<VolumeRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  out << "subject_id,label,path,nx,ny,nz\n";
  for (const auto& r : records) {
    fs::path p = r.path;
    if (p.is_absolute() && !base.empty()) p = fs::relative(p, fs::absolute(base));
    else if (!base.empty() && !p.is_absolute()) p = p.lexically_relative(base);
    out << r.subject_id << ',' << r.label << ',' << p.generic_string() << ',' << r.shape[0] << ','
        << r.shape[1] << ',' << r.shape[2] << '\n';
  }
}

std::vector<VolumeRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "subject_id,label,path,nx,ny,nz")
    throw DataError("manifest " + path.string() + " lacks the header subject_id,label,path,nx,ny,nz");
  std::vector<VolumeRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(trim(cell));
    if (cols.size() != 6)
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 6 columns");
    VolumeRecord r;
    r.subject_id = cols[0];
    try {
      r.label = std::stoi(cols[1]);
      for (std::size_t a = 0; a < 3; ++a) r.shape[a] = std::stoul(cols[3 + a]);
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(lineno) + ": malformed number");
    }
    if (r.label != 0 && r.label != 1)
      throw DataError("manifest line " + std::to_string(lineno) + ": label must be 0 or 1");
    r.path = cols[2];
    if (r.path.is_relative()) r.path = path.parent_path() / r.path;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<VolumeRecord> generate_dataset(const SynthSpec& spec, std::size_t n_per_class,
                                           const fs::path& out_dir) {
  if (n_per_class == 0) throw DataError("n_per_class must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir / "volumes", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "volumes").string() + ": " + ec.message());
  std::vector<VolumeRecord> records;
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    std::ostringstream id;
    id << "sub-" << std::setw(4) << std::setfill('0') << i;
    VolumeRecord r;
    r.subject_id = id.str();
    r.label = static_cast<int>(i % 2);
    r.path = out_dir / "volumes" / (r.subject_id + ".f32");
    r.shape = spec.extent;
    save_volume(r.path, synthesize_volume(spec, r.label, i));
    records.push_back(std::move(r));
  }
  write_manifest(out_dir / "manifest.csv", records);
  return records;
}

NormalizeResult normalize_volume(const Tensor<float>& volume) {
  NormalizeResult res{Tensor<float>(volume.shape()), false};
  const std::size_t n = volume.numel();
  if (n == 0) return res;
  double mean = 0;
  for (float v : volume.values()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0;
  for (float v : volume.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (!(var > 0)) {
    res.constant = true;
    return res;
  }
  const double inv = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i) res.volume[i] = static_cast<float>((volume[i] - mean) * inv);
  return res;
}

FoldPlan make_folds(const std::vector<VolumeRecord>& records, std::uint64_t seed) {
  if (records.size() < 10) throw DataError("make_folds needs at least 10 records");
  std::array<std::vector<std::size_t>, 2> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) by_label[static_cast<std::size_t>(records[i].label)].push_back(i);
  if (by_label[0].empty() || by_label[1].empty())
    throw DataError("make_folds needs both labels present");

  std::mt19937_64 rng(seed);
  for (auto& v : by_label) std::shuffle(v.begin(), v.end(), rng);

  // Test counts per label by largest remainder so that they sum to round(0.15 N).
  const auto total_test = static_cast<std::size_t>(std::llround(kTestFraction * static_cast<double>(records.size())));
  std::array<std::size_t, 2> take{};
  std::array<double, 2> rem{};
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    const double exact = kTestFraction * static_cast<double>(by_label[l].size());
    take[l] = static_cast<std::size_t>(std::floor(exact));
    rem[l] = exact - static_cast<double>(take[l]);
    assigned += take[l];
  }
  while (assigned < total_test) {
    const std::size_t l = rem[1] > rem[0] ? 1 : 0;
    ++take[l];
    rem[l] = -1;
    ++assigned;
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.folds.resize(kNumFolds);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& ids = by_label[l];
    plan.test.insert(plan.test.end(), ids.begin(), ids.begin() + static_cast<long>(take[l]));
    for (std::size_t i = take[l]; i < ids.size(); ++i, ++pos) plan.folds[pos % kNumFolds].val.push_back(ids[i]);
  }
  std::sort(plan.test.begin(), plan.test.end());
  for (std::size_t k = 0; k < kNumFolds; ++k) {
    std::sort(plan.folds[k].val.begin(), plan.folds[k].val.end());
    for (std::size_t j = 0; j < kNumFolds; ++j)
      if (j != k) plan.folds[k].train.insert(plan.folds[k].train.end(), plan.folds[j].val.begin(), plan.folds[j].val.end());
    std::sort(plan.folds[k].train.begin(), plan.folds[k].train.end());
  }
  return plan;
}

nlohmann::json to_json(const FoldPlan& plan) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : plan.folds) folds.push_back({{"train", f.train}, {"val", f.val}});
  return {{"seed", plan.seed}, {"test", plan.test}, {"folds", folds}};
}

FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  FoldPlan p;
  try {
    p.seed = j.at("seed").get<std::uint64_t>();
    p.test = j.at("test").get<std::vector<std::size_t>>();
    for (const auto& f : j.at("folds"))
      p.folds.push_back({f.at("train").get<std::vector<std::size_t>>(), f.at("val").get<std::vector<std::size_t>>()});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed fold plan: ") + e.what());
  }
  return p;
}

}  // namespace sfnet::data

#pragma once

// Synthetic labeled volumes, raw volume I/O, dataset manifests and
// stratified test / cross-validation splits.
//
// Volume files are header-free little-endian float32 in x-fastest order
// (index x + nx*(y + ny*z)). In memory a volume is a Tensor [1, nx, ny, nz]
// in the library's row-major layout (z fastest).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfnet/tensor.hpp"

namespace sfnet::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VolumeRecord {
  std::string subject_id;
  int label = 0;  // 0 = class A (CN-like), 1 = class B (AD-like)
  std::filesystem::path path;
  std::array<std::size_t, 3> shape{};
};

struct SynthSpec {
  std::array<std::size_t, 3> extent{32, 32, 32};
  double radius_a = 4.0;        // mean cavity radius, class A
  double radius_b = 6.0;        // mean cavity radius, class B
  double radius_sigma = 0.5;
  double smoothing = 1.0;       // Gaussian sigma in voxels
  double noise_sigma = 0.05;
  double translate_jitter = 2.0;  // uniform in [-j, j] voxels per axis
  double brain_fraction = 0.38;   // blob semi-axes as a fraction of the extent
  double cavity_intensity = 0.1;
  std::uint64_t seed = 0;
};

/// One volume of the given class; sample_index selects an independent stream.
Tensor<float> synthesize_volume(const SynthSpec& spec, int label, std::uint64_t sample_index);

/// Writes 2*n_per_class volumes under out_dir/volumes and out_dir/manifest.csv.
std::vector<VolumeRecord> generate_dataset(const SynthSpec& spec, std::size_t n_per_class,
                                           const std::filesystem::path& out_dir);

void save_volume(const std::filesystem::path& path, const Tensor<float>& volume);
/// Returns [1, nx, ny, nz]. Rejects size mismatches and non-finite values.
Tensor<float> load_volume(const std::filesystem::path& path, const std::array<std::size_t, 3>& shape);
Tensor<float> load_volume(const VolumeRecord& record);

/// CSV with columns subject_id,label,path,nx,ny,nz; paths relative to the manifest directory.
void write_manifest(const std::filesystem::path& path, const std::vector<VolumeRecord>& records);
/// Relative paths are resolved against the manifest's directory.
std::vector<VolumeRecord> read_manifest(const std::filesystem::path& path);

struct NormalizeResult {
  Tensor<float> volume;
  bool constant = false;  // input had zero variance; output is all zeros
};

/// Per-volume z-score (population standard deviation).
NormalizeResult normalize_volume(const Tensor<float>& volume);

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

struct FoldPlan {
  std::uint64_t seed = 0;
  std::vector<std::size_t> test;
  std::vector<FoldSplit> folds;
};

constexpr double kTestFraction = 0.15;
constexpr std::size_t kNumFolds = 5;

/// Stratified split: round(15% of N) test records with per-label counts by
/// largest remainder, then the rest dealt label by label into 5 validation
/// sets. Indices refer to rows of `records` and are sorted within each set.
FoldPlan make_folds(const std::vector<VolumeRecord>& records, std::uint64_t seed);

nlohmann::json to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& j);

}  // namespace sfnet::data

#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfnet/spectral.hpp"

namespace sfnet::model {

/// Every architectural hyperparameter of the network. Serialized as a flat
/// JSON object whose keys are exactly these field names.
struct SFNetConfig {
  std::size_t in_channels = 1;
  bool use_stem = true;  // false: blocks (or tokens) see the raw input
  std::size_t stem_channels = 16;
  std::size_t stem_kernel = 7;
  std::size_t stem_stride = 2;
  std::size_t stem_padding = 3;
  std::size_t pool_kernel = 3;
  std::size_t pool_stride = 2;
  std::size_t pool_padding = 1;
  std::size_t num_dense_blocks = 3;
  std::size_t layers_per_block = 4;
  std::size_t growth_rate = 8;
  std::size_t bottleneck_factor = 4;
  double transition_compression = 0.5;
  std::size_t patch_size = 1;
  std::size_t freq_depth = 6;
  std::size_t mlp_hidden = 64;
  std::size_t mlp_rank1 = 8;
  std::size_t mlp_rank2 = 8;
  std::size_t num_classes = 2;
  std::size_t spatial_attention_branch_channels = 1;
  bool use_sigmoid_on_spatial_map = true;
  bool use_attention = true;
  bool freq_use_norm = true;
  std::array<std::size_t, 3> input_extent{32, 32, 32};

  /// Desk-scale network: 32^3 input, 3 blocks x 2 layers, g = 8, depth 2.
  static SFNetConfig tiny();
  /// Frequency-module-only ablation baseline: no stem, no dense blocks; the
  /// raw volume is cut into 4^3 patches.
  static SFNetConfig frequency_only();
  /// Full-size dense widths on a 32^3 input, used for accounting only. The
  /// input stays small so the per-voxel filters of the frequency module do
  /// not outweigh the dense blocks.
  static SFNetConfig full_scale();

  friend bool operator==(const SFNetConfig&, const SFNetConfig&) = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StageShape {
  std::string stage;
  std::size_t channels = 0;
  std::array<std::size_t, 3> extent{};
};

/// Geometry of the token matrix fed to the frequency module.
struct TokenGeometry {
  std::size_t feature_channels = 0;  // C~
  std::array<std::size_t, 3> feature_extent{};
  spectral::Grid3 grid;  // W~/P x H~/P x D~/P
  std::size_t tokens = 0;  // L
  std::size_t embed = 0;   // D = C~ * P^3
};

std::string format_trace(const std::vector<StageShape>& trace);

/// Channel count and spatial extent after every stage. Throws ConfigError,
/// carrying the trace built so far, when any stage does not close.
std::vector<StageShape> shape_trace(const SFNetConfig& cfg);

/// Validates the config and returns the token geometry.
TokenGeometry token_geometry(const SFNetConfig& cfg);

/// ceil(theta * c), at least 1.
std::size_t compressed_channels(std::size_t c, double theta);

/// Odd kernel size of the cross-channel 1-D convolution for C channels:
/// nearest odd integer to (log2 C + 1)/2, ties to the smaller, at least 3.
std::size_t eca_kernel_size(std::size_t channels);

nlohmann::json to_json(const SFNetConfig& cfg);
/// Strict parse: unknown keys are rejected, missing keys keep defaults.
SFNetConfig config_from_json(const nlohmann::json& j);
SFNetConfig load_config(const std::string& path);

}  // namespace sfnet::model

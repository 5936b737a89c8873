#include "sfnet/model/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sfnet/kernels.hpp"

namespace sfnet::model {

SFNetConfig SFNetConfig::tiny() {
  SFNetConfig c;
  c.stem_channels = 16;
  c.num_dense_blocks = 3;
  c.layers_per_block = 2;
  c.growth_rate = 8;
  c.transition_compression = 0.5;
  c.patch_size = 1;
  c.freq_depth = 2;
  c.mlp_hidden = 64;
  c.mlp_rank1 = 8;
  c.mlp_rank2 = 8;
  return c;
}

SFNetConfig SFNetConfig::frequency_only() {
  SFNetConfig c = tiny();
  c.use_stem = false;
  c.num_dense_blocks = 0;
  c.patch_size = 4;
  c.mlp_hidden = 256;
  c.mlp_rank1 = 16;
  c.mlp_rank2 = 16;
  return c;
}

SFNetConfig SFNetConfig::full_scale() {
  SFNetConfig c;
  c.input_extent = {32, 32, 32};
  c.stem_channels = 64;
  c.num_dense_blocks = 3;
  c.layers_per_block = 6;
  c.growth_rate = 64;
  c.bottleneck_factor = 4;
  c.transition_compression = 0.5;
  c.patch_size = 1;
  c.freq_depth = 6;
  c.mlp_hidden = 512;
  c.mlp_rank1 = 8;
  c.mlp_rank2 = 8;
  return c;
}

std::string format_trace(const std::vector<StageShape>& trace) {
  std::ostringstream os;
  for (const StageShape& s : trace) {
    os << "  " << s.stage << ": C=" << s.channels << " extent=" << s.extent[0] << 'x'
       << s.extent[1] << 'x' << s.extent[2] << '\n';
  }
  return os.str();
}

std::size_t compressed_channels(std::size_t c, double theta) {
  const auto v = static_cast<std::size_t>(std::ceil(theta * static_cast<double>(c) - 1e-9));
  return std::max<std::size_t>(v, 1);
}

std::size_t eca_kernel_size(std::size_t channels) {
  if (channels == 0) throw std::invalid_argument("eca_kernel_size needs C >= 1");
  const double t = (std::log2(static_cast<double>(channels)) + 1.0) / 2.0;
  auto lo = static_cast<long>(std::floor(t));
  if (lo % 2 == 0) --lo;
  const long hi = lo + 2;
  const long k = (t - static_cast<double>(lo) <= static_cast<double>(hi) - t) ? lo : hi;
  return static_cast<std::size_t>(std::max<long>(k, 3));
}

namespace {

[[noreturn]] void fail(const std::vector<StageShape>& trace, const std::string& why) {
  throw ConfigError(why + "\nshape trace:\n" + format_trace(trace));
}

}  // namespace

std::vector<StageShape> shape_trace(const SFNetConfig& cfg) {
  std::vector<StageShape> trace;
  trace.push_back({"input", cfg.in_channels, cfg.input_extent});
  if (cfg.in_channels == 0 || cfg.stem_channels == 0) fail(trace, "channel counts must be >= 1");
  for (std::size_t e : cfg.input_extent)
    if (e == 0) fail(trace, "input extent must be >= 1");
  if (cfg.num_dense_blocks > 0 && cfg.layers_per_block == 0)
    fail(trace, "layers_per_block must be >= 1");
  if (!(cfg.transition_compression > 0.0 && cfg.transition_compression <= 1.0))
    fail(trace, "transition_compression must lie in (0, 1]");
  if (cfg.growth_rate == 0 || cfg.bottleneck_factor == 0)
    fail(trace, "growth_rate and bottleneck_factor must be >= 1");
  if (cfg.patch_size == 0) fail(trace, "patch_size must be >= 1");
  if (cfg.mlp_hidden == 0 || cfg.mlp_rank1 == 0 || cfg.mlp_rank2 == 0)
    fail(trace, "mlp_hidden and ranks must be >= 1");
  if (cfg.num_classes < 2) fail(trace, "num_classes must be >= 2");
  if (cfg.spatial_attention_branch_channels == 0)
    fail(trace, "spatial_attention_branch_channels must be >= 1");

  std::array<std::size_t, 3> ext = cfg.input_extent;
  if (cfg.use_stem) try {
    const kernels::ConvParams stem{cfg.stem_stride, cfg.stem_padding, 1};
    for (auto& e : ext) e = kernels::conv_out_extent(e, cfg.stem_kernel, stem);
    trace.push_back({"stem", cfg.stem_channels, ext});
    const kernels::ConvParams pool{cfg.pool_stride, cfg.pool_padding, 1};
    for (auto& e : ext) e = kernels::conv_out_extent(e, cfg.pool_kernel, pool);
    trace.push_back({"pool", cfg.stem_channels, ext});
  } catch (const std::invalid_argument& e) {
    fail(trace, std::string("stem does not fit the input: ") + e.what());
  }
  std::size_t c = cfg.use_stem ? cfg.stem_channels : cfg.in_channels;
  for (std::size_t b = 0; b < cfg.num_dense_blocks; ++b) {
    c += cfg.layers_per_block * cfg.growth_rate;
    trace.push_back({"dense_block." + std::to_string(b), c, ext});
    if (b + 1 < cfg.num_dense_blocks) {
      for (auto& e : ext) {
        if (e < 2) fail(trace, "transition " + std::to_string(b) + " cannot halve extent " +
                                   std::to_string(e));
        e /= 2;
      }
      c = compressed_channels(c, cfg.transition_compression);
      trace.push_back({"transition." + std::to_string(b), c, ext});
    }
  }
  static const char* axis[] = {"W", "H", "D"};
  std::array<std::size_t, 3> grid{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (ext[a] % cfg.patch_size != 0) {
      fail(trace, std::string("feature axis ") + axis[a] + " extent " + std::to_string(ext[a]) +
                      " is not divisible by patch size " + std::to_string(cfg.patch_size));
    }
    grid[a] = ext[a] / cfg.patch_size;
    if (!spectral::is_power_of_two(grid[a])) {
      fail(trace, std::string("token grid axis ") + axis[a] + " extent " +
                      std::to_string(grid[a]) +
                      " is not a power of two; adjust patch_size or input_extent");
    }
  }
  const std::size_t p3 = cfg.patch_size * cfg.patch_size * cfg.patch_size;
  trace.push_back({"patch_embed", c * p3, grid});
  for (std::size_t i = 0; i < cfg.freq_depth; ++i)
    trace.push_back({"freq." + std::to_string(i), c * p3, grid});
  trace.push_back({"head", cfg.num_classes, {1, 1, 1}});
  return trace;
}

TokenGeometry token_geometry(const SFNetConfig& cfg) {
  const auto trace = shape_trace(cfg);
  std::size_t idx = 0;
  while (trace[idx].stage != "patch_embed") ++idx;
  const StageShape& before = trace[idx - 1];
  const StageShape& emb = trace[idx];
  TokenGeometry g;
  g.feature_channels = before.channels;
  g.feature_extent = before.extent;
  g.grid = spectral::Grid3{emb.extent[0], emb.extent[1], emb.extent[2]};
  g.tokens = g.grid.volume();
  g.embed = emb.channels;
  return g;
}

nlohmann::json to_json(const SFNetConfig& c) {
  return nlohmann::json{
      {"in_channels", c.in_channels},
      {"use_stem", c.use_stem},
      {"stem_channels", c.stem_channels},
      {"stem_kernel", c.stem_kernel},
      {"stem_stride", c.stem_stride},
      {"stem_padding", c.stem_padding},
      {"pool_kernel", c.pool_kernel},
      {"pool_stride", c.pool_stride},
      {"pool_padding", c.pool_padding},
      {"num_dense_blocks", c.num_dense_blocks},
      {"layers_per_block", c.layers_per_block},
      {"growth_rate", c.growth_rate},
      {"bottleneck_factor", c.bottleneck_factor},
      {"transition_compression", c.transition_compression},
      {"patch_size", c.patch_size},
      {"freq_depth", c.freq_depth},
      {"mlp_hidden", c.mlp_hidden},
      {"mlp_rank1", c.mlp_rank1},
      {"mlp_rank2", c.mlp_rank2},
      {"num_classes", c.num_classes},
      {"spatial_attention_branch_channels", c.spatial_attention_branch_channels},
      {"use_sigmoid_on_spatial_map", c.use_sigmoid_on_spatial_map},
      {"use_attention", c.use_attention},
      {"freq_use_norm", c.freq_use_norm},
      {"input_extent", c.input_extent},
  };
}

SFNetConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const nlohmann::json defaults = to_json(SFNetConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  nlohmann::json merged = defaults;
  for (const auto& [key, value] : j.items()) merged[key] = value;
  SFNetConfig c;
  try {
    c.in_channels = merged.at("in_channels").get<std::size_t>();
    c.use_stem = merged.at("use_stem").get<bool>();
    c.stem_channels = merged.at("stem_channels").get<std::size_t>();
    c.stem_kernel = merged.at("stem_kernel").get<std::size_t>();
    c.stem_stride = merged.at("stem_stride").get<std::size_t>();
    c.stem_padding = merged.at("stem_padding").get<std::size_t>();
    c.pool_kernel = merged.at("pool_kernel").get<std::size_t>();
    c.pool_stride = merged.at("pool_stride").get<std::size_t>();
    c.pool_padding = merged.at("pool_padding").get<std::size_t>();
    c.num_dense_blocks = merged.at("num_dense_blocks").get<std::size_t>();
    c.layers_per_block = merged.at("layers_per_block").get<std::size_t>();
    c.growth_rate = merged.at("growth_rate").get<std::size_t>();
    c.bottleneck_factor = merged.at("bottleneck_factor").get<std::size_t>();
    c.transition_compression = merged.at("transition_compression").get<double>();
    c.patch_size = merged.at("patch_size").get<std::size_t>();
    c.freq_depth = merged.at("freq_depth").get<std::size_t>();
    c.mlp_hidden = merged.at("mlp_hidden").get<std::size_t>();
    c.mlp_rank1 = merged.at("mlp_rank1").get<std::size_t>();
    c.mlp_rank2 = merged.at("mlp_rank2").get<std::size_t>();
    c.num_classes = merged.at("num_classes").get<std::size_t>();
    c.spatial_attention_branch_channels =
        merged.at("spatial_attention_branch_channels").get<std::size_t>();
    c.use_sigmoid_on_spatial_map = merged.at("use_sigmoid_on_spatial_map").get<bool>();
    c.use_attention = merged.at("use_attention").get<bool>();
    c.freq_use_norm = merged.at("freq_use_norm").get<bool>();
    c.input_extent = merged.at("input_extent").get<std::array<std::size_t, 3>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

SFNetConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace sfnet::model

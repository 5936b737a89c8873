#include "sfnet/model/accounting.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "sfnet/kernels.hpp"
#include "sfnet/model/frequency.hpp"

namespace sfnet::model {

namespace {

using u64 = std::uint64_t;

u64 cube(std::size_t k) { return static_cast<u64>(k) * k * k; }

u64 volume(const std::array<std::size_t, 3>& e) { return static_cast<u64>(e[0]) * e[1] * e[2]; }

u64 conv_flops(std::size_t cin, std::size_t cout, std::size_t k, u64 out_voxels) {
  return 2 * static_cast<u64>(cin) * cout * cube(k) * out_voxels;
}

u64 log2_exact(u64 v) {
  u64 r = 0;
  while ((u64{1} << r) < v) ++r;
  return r;
}

void push(CountReport& r, std::string name, u64 count) {
  r.modules.push_back({std::move(name), count});
  r.total += count;
}

u64 freq_block_params(const SFNetConfig& cfg, const TokenGeometry& g) {
  const u64 d = g.embed;
  const u64 norms = cfg.freq_use_norm ? 4 * d : 0;
  const u64 filter = 2 * d * g.grid.half_volume();
  return norms + filter + low_rank_mlp_params(g.embed, cfg.mlp_hidden, cfg.mlp_rank1, cfg.mlp_rank2);
}

}  // namespace

std::string CountReport::table(const std::string& unit) const {
  std::size_t width = 5;
  for (const auto& m : modules) width = std::max(width, m.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "module" << "  " << unit << '\n';
  for (const auto& m : modules)
    os << std::left << std::setw(static_cast<int>(width)) << m.name << "  " << m.count << '\n';
  os << std::left << std::setw(static_cast<int>(width)) << "total" << "  " << total << '\n';
  return os.str();
}

nlohmann::json CountReport::to_json() const {
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : modules) mods.push_back({{"name", m.name}, {"count", m.count}});
  return {{"modules", mods}, {"total", total}};
}

u64 conv3d_params(std::size_t cin, std::size_t cout, std::size_t k) {
  return static_cast<u64>(cout) * cin * cube(k) + cout;
}

u64 attention_params(std::size_t c, std::size_t b) {
  return eca_kernel_size(c) + 2 * c + 3 * conv3d_params(c, b, 3) + conv3d_params(3 * b, 1, 3) + 3;
}

u64 dense_layer_params(const SFNetConfig& cfg, std::size_t cin) {
  const std::size_t fg = cfg.bottleneck_factor * cfg.growth_rate;
  u64 n = 2 * cin + conv3d_params(cin, fg, 1) + 2 * fg + conv3d_params(fg, cfg.growth_rate, 3);
  if (cfg.use_attention) n += attention_params(fg, cfg.spatial_attention_branch_channels);
  return n;
}

CountReport count_params(const SFNetConfig& cfg) {
  const TokenGeometry g = token_geometry(cfg);
  CountReport r;
  std::size_t c = cfg.in_channels;
  if (cfg.use_stem) {
    push(r, "stem", conv3d_params(cfg.in_channels, cfg.stem_channels, cfg.stem_kernel));
    c = cfg.stem_channels;
  }
  for (std::size_t b = 0; b < cfg.num_dense_blocks; ++b) {
    for (std::size_t l = 0; l < cfg.layers_per_block; ++l) {
      push(r, "blocks." + std::to_string(b) + ".layers." + std::to_string(l),
           dense_layer_params(cfg, c + l * cfg.growth_rate));
    }
    c += cfg.layers_per_block * cfg.growth_rate;
    if (b + 1 < cfg.num_dense_blocks) {
      const std::size_t co = compressed_channels(c, cfg.transition_compression);
      push(r, "transitions." + std::to_string(b), 2 * static_cast<u64>(c) + conv3d_params(c, co, 1));
      c = co;
    }
  }
  const u64 d = g.embed;
  push(r, "patch_embed", d * d + d);
  for (std::size_t i = 0; i < cfg.freq_depth; ++i)
    push(r, "freq." + std::to_string(i), freq_block_params(cfg, g));
  push(r, "head", d * cfg.num_classes + cfg.num_classes);
  return r;
}

CountReport count_flops(const SFNetConfig& cfg, const std::array<std::size_t, 3>& input_extent) {
  SFNetConfig c2 = cfg;
  c2.input_extent = input_extent;
  const auto trace = shape_trace(c2);
  const TokenGeometry g = token_geometry(c2);
  CountReport r;

  auto stage = [&](const std::string& name) -> const StageShape& {
    for (const auto& s : trace)
      if (s.stage == name) return s;
    throw std::logic_error("missing stage " + name);
  };
  std::size_t c = cfg.in_channels;
  std::array<std::size_t, 3> ext = input_extent;
  if (cfg.use_stem) {
    push(r, "stem", conv_flops(cfg.in_channels, cfg.stem_channels, cfg.stem_kernel,
                               volume(stage("stem").extent)));
    c = cfg.stem_channels;
    ext = stage("pool").extent;
  }

  const std::size_t fg = cfg.bottleneck_factor * cfg.growth_rate;
  const std::size_t bc = cfg.spatial_attention_branch_channels;
  for (std::size_t b = 0; b < cfg.num_dense_blocks; ++b) {
    const u64 v = volume(ext);
    for (std::size_t l = 0; l < cfg.layers_per_block; ++l) {
      const std::size_t cin = c + l * cfg.growth_rate;
      u64 n = conv_flops(cin, fg, 1, v) + conv_flops(fg, cfg.growth_rate, 3, v);
      if (cfg.use_attention) {
        n += 2 * static_cast<u64>(eca_kernel_size(fg)) * fg;
        n += 3 * conv_flops(fg, bc, 3, v) + conv_flops(3 * bc, 1, 3, v);
      }
      push(r, "blocks." + std::to_string(b) + ".layers." + std::to_string(l), n);
    }
    c += cfg.layers_per_block * cfg.growth_rate;
    if (b + 1 < cfg.num_dense_blocks) {
      const std::size_t co = compressed_channels(c, cfg.transition_compression);
      push(r, "transitions." + std::to_string(b), conv_flops(c, co, 1, v));
      c = co;
      ext = stage("transition." + std::to_string(b)).extent;
    }
  }
  const u64 d = g.embed, tokens = g.tokens;
  push(r, "patch_embed", 2 * d * d * tokens);
  const u64 fft = 2 * d * 5 * tokens * log2_exact(tokens);
  const u64 filter = 6 * d * g.grid.half_volume();
  const u64 mlp = 2 * tokens *
                  (d * cfg.mlp_rank1 + static_cast<u64>(cfg.mlp_rank1) * cfg.mlp_hidden +
                   static_cast<u64>(cfg.mlp_hidden) * cfg.mlp_rank2 + cfg.mlp_rank2 * d);
  for (std::size_t i = 0; i < cfg.freq_depth; ++i)
    push(r, "freq." + std::to_string(i), fft + filter + mlp);
  push(r, "head", 2 * d * cfg.num_classes);
  return r;
}

CountReport count_flops(const SFNetConfig& cfg) { return count_flops(cfg, cfg.input_extent); }

}  // namespace sfnet::model

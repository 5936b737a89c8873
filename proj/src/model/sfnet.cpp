#include "sfnet/model/sfnet.hpp"

namespace sfnet::model {

template <typename T>
SFNet<T>::SFNet(const SFNetConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), geom_(token_geometry(cfg)), trace_(shape_trace(cfg)) {
  Rng rng(seed);
  std::size_t c = cfg.in_channels;
  if (cfg.use_stem) {
    stem = Conv3d<T>("stem", cfg.in_channels, cfg.stem_channels, cfg.stem_kernel,
                     {cfg.stem_stride, cfg.stem_padding, 1}, rng);
    c = cfg.stem_channels;
  }
  for (std::size_t b = 0; b < cfg.num_dense_blocks; ++b) {
    blocks.emplace_back("blocks." + std::to_string(b), c, cfg.layers_per_block, cfg.growth_rate,
                        cfg.bottleneck_factor, cfg.spatial_attention_branch_channels,
                        cfg.use_attention, cfg.use_sigmoid_on_spatial_map, rng);
    c = blocks.back().out_channels();
    if (b + 1 < cfg.num_dense_blocks) {
      transitions.emplace_back("transitions." + std::to_string(b), c, cfg.transition_compression,
                               rng);
      c = transitions.back().conv.out_channels();
    }
  }
  patch_embed = PatchEmbed<T>("patch_embed", c, cfg.patch_size, rng);
  for (std::size_t i = 0; i < cfg.freq_depth; ++i) {
    freq.emplace_back("freq." + std::to_string(i), geom_.embed, geom_.grid, cfg.mlp_hidden,
                      cfg.mlp_rank1, cfg.mlp_rank2, cfg.freq_use_norm, rng);
  }
  head = Linear<T>("head", geom_.embed, cfg.num_classes, true, rng);
}

template <typename T>
Var<T> SFNet<T>::features(Tape<T>& tape, Var<T> input, Mode mode) {
  const Shape& s = input.shape();
  if (s.size() != 5 || s[1] != cfg_.in_channels || s[2] != cfg_.input_extent[0] ||
      s[3] != cfg_.input_extent[1] || s[4] != cfg_.input_extent[2]) {
    throw std::invalid_argument("SFNet input must be [N, " + std::to_string(cfg_.in_channels) +
                                ", " + std::to_string(cfg_.input_extent[0]) + ", " +
                                std::to_string(cfg_.input_extent[1]) + ", " +
                                std::to_string(cfg_.input_extent[2]) + "], got " + shape_str(s));
  }
  Var<T> x = input;
  if (cfg_.use_stem) {
    x = stem.forward(tape, x);
    x = ops::maxpool3d(x, cfg_.pool_kernel, cfg_.pool_stride, cfg_.pool_padding);
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    x = blocks[b].forward(tape, x, mode);
    if (b < transitions.size()) x = transitions[b].forward(tape, x, mode);
  }
  return x;
}

template <typename T>
Var<T> SFNet<T>::forward(Tape<T>& tape, Var<T> input, Mode mode) {
  Var<T> tokens = patch_embed.forward(tape, features(tape, input, mode));
  for (auto& blk : freq) tokens = blk.forward(tape, tokens);
  return head.forward(tape, ops::mean_tokens(tokens));
}

template <typename T>
void SFNet<T>::visit(const ParamFn<T>& fn) {
  if (cfg_.use_stem) stem.visit(fn);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].visit(fn);
    if (b < transitions.size()) transitions[b].visit(fn);
  }
  patch_embed.visit(fn);
  for (auto& blk : freq) blk.visit(fn);
  head.visit(fn);
}

template <typename T>
std::vector<Parameter<T>*> SFNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  visit([&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::vector<Parameter<T>*> SFNet<T>::trainable_parameters() {
  std::vector<Parameter<T>*> out;
  visit([&](Parameter<T>& p) {
    if (p.trainable) out.push_back(&p);
  });
  return out;
}

template <typename T>
void SFNet<T>::zero_grad() {
  visit([](Parameter<T>& p) { p.zero_grad(); });
}

template class SFNet<float>;
template class SFNet<double>;

}  // namespace sfnet::model

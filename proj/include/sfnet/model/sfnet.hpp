#pragma once

#include <cstdint>
#include <vector>

#include "sfnet/model/config.hpp"
#include "sfnet/model/frequency.hpp"
#include "sfnet/model/spatial.hpp"

namespace sfnet::model {

/// Stem conv -> max pool -> dense blocks with transitions -> patch embedding
/// -> global filter blocks -> mean over tokens -> linear head.
template <typename T>
class SFNet {
 public:
  SFNet(const SFNetConfig& cfg, std::uint64_t seed);

  /// input: [N, in_channels, W, H, D]; returns logits [N, num_classes].
  Var<T> forward(Tape<T>& tape, Var<T> input, Mode mode);

  /// Spatial module output X (before tokenization).
  Var<T> features(Tape<T>& tape, Var<T> input, Mode mode);

  /// Every parameter and buffer in a stable order.
  void visit(const ParamFn<T>& fn);
  std::vector<Parameter<T>*> parameters();
  std::vector<Parameter<T>*> trainable_parameters();
  void zero_grad();

  const SFNetConfig& config() const { return cfg_; }
  const TokenGeometry& geometry() const { return geom_; }

  Conv3d<T> stem;
  std::vector<DenseBlock<T>> blocks;
  std::vector<Transition<T>> transitions;
  PatchEmbed<T> patch_embed;
  std::vector<GlobalFilterBlock<T>> freq;
  Linear<T> head;

 private:
  SFNetConfig cfg_;
  TokenGeometry geom_;
  std::vector<StageShape> trace_;
};

}  // namespace sfnet::model

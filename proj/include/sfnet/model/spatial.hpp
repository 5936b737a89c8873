#pragma once

// Spatial feature extraction: multi-scale attention, dense layers/blocks and
// the transitions between blocks.

#include <array>
#include <vector>

#include "sfnet/model/layers.hpp"

namespace sfnet::model {

/// out = l1 (F*Ac + F) + l2 (F*As + F) + l3 F, with Ac broadcast over space
/// and As broadcast over channels.
template <typename T>
Var<T> fuse_attention(Var<T> features, Var<T> channel_map, Var<T> spatial_map, Var<T> lambda1,
                      Var<T> lambda2, Var<T> lambda3);

/// Parallel channel and spatial attention with learnable fusion weights.
///
/// Channel branch: global average pool, 1-D convolution across channels
/// (kernel from eca_kernel_size), sigmoid -> [N, C, 1, 1, 1].
/// Spatial branch: BN-ReLU, three 3x3x3 convolutions with dilation 1/2/3
/// emitting b channels each, concatenation, 3x3x3 convolution to a single
/// channel, optional sigmoid -> [N, 1, W, H, D].
template <typename T>
class AttentionModule {
 public:
  AttentionModule() = default;
  AttentionModule(const std::string& name, std::size_t channels, std::size_t branch_channels,
                  bool sigmoid_on_spatial, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x, Mode mode);
  Var<T> channel_map(Tape<T>& tape, Var<T> x);
  Var<T> spatial_map(Tape<T>& tape, Var<T> x, Mode mode);
  void visit(const ParamFn<T>& fn);

  std::size_t kernel_size() const { return eca_kernel.value.numel(); }

  Parameter<T> eca_kernel;
  BatchNorm3d<T> spatial_bn;
  std::array<Conv3d<T>, 3> dilated;
  Conv3d<T> fuse;
  std::array<Parameter<T>, 3> lambda;
  bool sigmoid_on_spatial = true;
};

/// BN-ReLU -> 1x1x1 bottleneck -> attention -> BN-ReLU -> 3x3x3 conv to g channels.
template <typename T>
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(const std::string& name, std::size_t in_channels, std::size_t growth,
             std::size_t bottleneck_factor, std::size_t branch_channels, bool use_attention,
             bool sigmoid_on_spatial, Rng& rng);

  /// Returns the g new channels; the caller concatenates.
  Var<T> forward(Tape<T>& tape, Var<T> x, Mode mode);
  void visit(const ParamFn<T>& fn);

  std::size_t in_channels = 0;
  BatchNorm3d<T> bn1;
  Conv3d<T> bottleneck;
  bool use_attention = true;
  AttentionModule<T> attention;
  BatchNorm3d<T> bn2;
  Conv3d<T> conv;
};

template <typename T>
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(const std::string& name, std::size_t in_channels, std::size_t layers,
             std::size_t growth, std::size_t bottleneck_factor, std::size_t branch_channels,
             bool use_attention, bool sigmoid_on_spatial, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x, Mode mode);
  void visit(const ParamFn<T>& fn);

  std::size_t out_channels() const;

  std::vector<DenseLayer<T>> layers;
  std::size_t growth = 0;
};

/// BN-ReLU -> 1x1x1 conv to ceil(theta * C) channels -> 2x2x2 average pool.
template <typename T>
class Transition {
 public:
  Transition() = default;
  Transition(const std::string& name, std::size_t in_channels, double theta, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x, Mode mode);
  void visit(const ParamFn<T>& fn);

  BatchNorm3d<T> bn;
  Conv3d<T> conv;
};

}  // namespace sfnet::model

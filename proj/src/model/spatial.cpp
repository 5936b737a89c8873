#include "sfnet/model/spatial.hpp"

#include "sfnet/model/config.hpp"

namespace sfnet::model {

template <typename T>
Var<T> fuse_attention(Var<T> features, Var<T> channel_map, Var<T> spatial_map, Var<T> lambda1,
                      Var<T> lambda2, Var<T> lambda3) {
  Var<T> ch = ops::add(ops::mul(features, channel_map), features);
  Var<T> sp = ops::add(ops::mul(features, spatial_map), features);
  return ops::add(ops::add(ops::scale(ch, lambda1), ops::scale(sp, lambda2)),
                  ops::scale(features, lambda3));
}

template <typename T>
AttentionModule<T>::AttentionModule(const std::string& name, std::size_t channels,
                                    std::size_t branch_channels, bool sigmoid_on_spatial_map,
                                    Rng& rng)
    : spatial_bn(name + ".spatial.bn", channels), sigmoid_on_spatial(sigmoid_on_spatial_map) {
  const std::size_t k = eca_kernel_size(channels);
  eca_kernel = Parameter<T>(name + ".channel.kernel", kaiming_uniform<T>({k}, k, rng));
  for (std::size_t d = 0; d < 3; ++d) {
    const kernels::ConvParams p{1, d + 1, d + 1};
    dilated[d] = Conv3d<T>(name + ".spatial.dilated" + std::to_string(d + 1), channels,
                           branch_channels, 3, p, rng);
  }
  fuse = Conv3d<T>(name + ".spatial.fuse", 3 * branch_channels, 1, 3, {1, 1, 1}, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    lambda[i] = Parameter<T>(name + ".lambda" + std::to_string(i + 1),
                             Tensor<T>({1}, static_cast<T>(0.33)), true, false);
  }
}

template <typename T>
Var<T> AttentionModule<T>::channel_map(Tape<T>& tape, Var<T> x) {
  Var<T> k = tape.parameter(eca_kernel);
  return ops::sigmoid(ops::conv1d_channels(ops::global_avg_pool(x), k));
}

template <typename T>
Var<T> AttentionModule<T>::spatial_map(Tape<T>& tape, Var<T> x, Mode mode) {
  Var<T> h = bn_relu(tape, spatial_bn, x, mode);
  std::vector<Var<T>> parts;
  for (auto& conv : dilated) parts.push_back(conv.forward(tape, h));
  Var<T> m = fuse.forward(tape, ops::concat_channels(parts));
  return sigmoid_on_spatial ? ops::sigmoid(m) : m;
}

template <typename T>
Var<T> AttentionModule<T>::forward(Tape<T>& tape, Var<T> x, Mode mode) {
  Var<T> ac = channel_map(tape, x);
  Var<T> as = spatial_map(tape, x, mode);
  return fuse_attention(x, ac, as, tape.parameter(lambda[0]), tape.parameter(lambda[1]),
                        tape.parameter(lambda[2]));
}

template <typename T>
void AttentionModule<T>::visit(const ParamFn<T>& fn) {
  fn(eca_kernel);
  spatial_bn.visit(fn);
  for (auto& conv : dilated) conv.visit(fn);
  fuse.visit(fn);
  for (auto& l : lambda) fn(l);
}

template <typename T>
DenseLayer<T>::DenseLayer(const std::string& name, std::size_t cin, std::size_t growth,
                          std::size_t bottleneck_factor, std::size_t branch_channels,
                          bool attention_on, bool sigmoid_on_spatial, Rng& rng)
    : in_channels(cin),
      bn1(name + ".bn1", cin),
      bottleneck(name + ".conv1", cin, bottleneck_factor * growth, 1, {1, 0, 1}, rng),
      use_attention(attention_on),
      bn2(name + ".bn2", bottleneck_factor * growth),
      conv(name + ".conv2", bottleneck_factor * growth, growth, 3, {1, 1, 1}, rng) {
  if (use_attention) {
    attention = AttentionModule<T>(name + ".attention", bottleneck_factor * growth,
                                   branch_channels, sigmoid_on_spatial, rng);
  }
}

template <typename T>
Var<T> DenseLayer<T>::forward(Tape<T>& tape, Var<T> x, Mode mode) {
  if (x.shape().size() != 5 || x.shape()[1] != in_channels) {
    throw std::invalid_argument("dense layer expects " + std::to_string(in_channels) +
                                " input channels, got " + shape_str(x.shape()));
  }
  Var<T> h = bottleneck.forward(tape, bn_relu(tape, bn1, x, mode));
  if (use_attention) h = attention.forward(tape, h, mode);
  return conv.forward(tape, bn_relu(tape, bn2, h, mode));
}

template <typename T>
void DenseLayer<T>::visit(const ParamFn<T>& fn) {
  bn1.visit(fn);
  bottleneck.visit(fn);
  if (use_attention) attention.visit(fn);
  bn2.visit(fn);
  conv.visit(fn);
}

template <typename T>
DenseBlock<T>::DenseBlock(const std::string& name, std::size_t cin, std::size_t n_layers,
                          std::size_t g, std::size_t bottleneck_factor,
                          std::size_t branch_channels, bool use_attention,
                          bool sigmoid_on_spatial, Rng& rng)
    : growth(g) {
  for (std::size_t l = 0; l < n_layers; ++l) {
    layers.emplace_back(name + ".layers." + std::to_string(l), cin + l * g, g, bottleneck_factor,
                        branch_channels, use_attention, sigmoid_on_spatial, rng);
  }
}

template <typename T>
Var<T> DenseBlock<T>::forward(Tape<T>& tape, Var<T> x, Mode mode) {
  std::vector<Var<T>> feats{x};
  Var<T> cur = x;
  for (auto& layer : layers) {
    feats.push_back(layer.forward(tape, cur, mode));
    cur = ops::concat_channels(feats);
  }
  return cur;
}

template <typename T>
void DenseBlock<T>::visit(const ParamFn<T>& fn) {
  for (auto& layer : layers) layer.visit(fn);
}

template <typename T>
std::size_t DenseBlock<T>::out_channels() const {
  if (layers.empty()) return 0;
  return layers.front().in_channels + layers.size() * growth;
}

template <typename T>
Transition<T>::Transition(const std::string& name, std::size_t cin, double theta, Rng& rng)
    : bn(name + ".bn", cin),
      conv(name + ".conv", cin, compressed_channels(cin, theta), 1, {1, 0, 1}, rng) {}

template <typename T>
Var<T> Transition<T>::forward(Tape<T>& tape, Var<T> x, Mode mode) {
  return ops::avgpool3d(conv.forward(tape, bn_relu(tape, bn, x, mode)), 2, 2);
}

template <typename T>
void Transition<T>::visit(const ParamFn<T>& fn) {
  bn.visit(fn);
  conv.visit(fn);
}

#define SFNET_INSTANTIATE(T)                                                              \
  template Var<T> fuse_attention<T>(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>);      \
  template class AttentionModule<T>;                                                      \
  template class DenseLayer<T>;                                                           \
  template class DenseBlock<T>;                                                           \
  template class Transition<T>;

SFNET_INSTANTIATE(float)
SFNET_INSTANTIATE(double)

}  // namespace sfnet::model

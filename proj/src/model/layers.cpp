#include "sfnet/model/layers.hpp"

#include <cmath>

namespace sfnet::model {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw std::invalid_argument("kaiming_uniform needs fan_in >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (T& v : t.buffer()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Conv3d<T>::Conv3d(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                  kernels::ConvParams p, Rng& rng)
    : weight(name + ".weight", kaiming_uniform<T>({cout, cin, k, k, k}, cin * k * k * k, rng)),
      bias(name + ".bias", Tensor<T>({cout})),
      params(p) {}

template <typename T>
Var<T> Conv3d<T>::forward(Tape<T>& tape, Var<T> x) {
  Var<T> w = tape.parameter(weight);
  Var<T> b = tape.parameter(bias);
  return ops::conv3d(x, w, &b, params);
}

template <typename T>
void Conv3d<T>::visit(const ParamFn<T>& fn) {
  fn(weight);
  fn(bias);
}

template <typename T>
BatchNorm3d<T>::BatchNorm3d(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", Tensor<T>({channels}, T{1}), true, false),
      beta(name + ".beta", Tensor<T>({channels}), true, false),
      running_mean(name + ".running_mean", Tensor<T>({channels}), false, false),
      running_var(name + ".running_var", Tensor<T>({channels}, T{1}), false, false) {}

template <typename T>
Var<T> BatchNorm3d<T>::forward(Tape<T>& tape, Var<T> x, Mode mode) {
  Var<T> g = tape.parameter(gamma);
  Var<T> b = tape.parameter(beta);
  return ops::batchnorm3d(x, g, b, running_mean, running_var, mode);
}

template <typename T>
void BatchNorm3d<T>::visit(const ParamFn<T>& fn) {
  fn(gamma);
  fn(beta);
  fn(running_mean);
  fn(running_var);
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t din, std::size_t dout, bool with_bias,
                  Rng& rng)
    : weight(name + ".weight", kaiming_uniform<T>({din, dout}, din, rng)), has_bias(with_bias) {
  if (has_bias) bias = Parameter<T>(name + ".bias", Tensor<T>({dout}));
}

template <typename T>
Var<T> Linear<T>::forward(Tape<T>& tape, Var<T> x) {
  Var<T> w = tape.parameter(weight);
  if (!has_bias) return ops::linear<T>(x, w, nullptr);
  Var<T> b = tape.parameter(bias);
  return ops::linear(x, w, &b);
}

template <typename T>
void Linear<T>::visit(const ParamFn<T>& fn) {
  fn(weight);
  if (has_bias) fn(bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, std::size_t width)
    : gamma(name + ".gamma", Tensor<T>({width}, T{1}), true, false),
      beta(name + ".beta", Tensor<T>({width}), true, false) {}

template <typename T>
Var<T> LayerNorm<T>::forward(Tape<T>& tape, Var<T> x) {
  Var<T> g = tape.parameter(gamma);
  Var<T> b = tape.parameter(beta);
  return ops::layer_norm(x, g, b);
}

template <typename T>
void LayerNorm<T>::visit(const ParamFn<T>& fn) {
  fn(gamma);
  fn(beta);
}

#define SFNET_INSTANTIATE(T)                                                   \
  template Tensor<T> kaiming_uniform<T>(Shape, std::size_t, Rng&);             \
  template class Conv3d<T>;                                                    \
  template class BatchNorm3d<T>;                                               \
  template class Linear<T>;                                                    \
  template class LayerNorm<T>;

SFNET_INSTANTIATE(float)
SFNET_INSTANTIATE(double)

}  // namespace sfnet::model

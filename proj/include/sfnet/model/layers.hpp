#pragma once

#include <functional>
#include <random>
#include <string>

#include "sfnet/autodiff.hpp"
#include "sfnet/ops.hpp"

namespace sfnet::model {

using ops::Mode;
using Rng = std::mt19937_64;

template <typename T>
using ParamFn = std::function<void(Parameter<T>&)>;

/// Uniform(-b, b) with b = sqrt(6 / fan_in) (He initialization, fan-in mode).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

template <typename T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
         kernels::ConvParams params, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void visit(const ParamFn<T>& fn);

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }

  Parameter<T> weight;
  Parameter<T> bias;
  kernels::ConvParams params;
};

template <typename T>
class BatchNorm3d {
 public:
  BatchNorm3d() = default;
  BatchNorm3d(const std::string& name, std::size_t channels);

  /// Training mode updates the running statistics, hence non-const.
  Var<T> forward(Tape<T>& tape, Var<T> x, Mode mode);
  void visit(const ParamFn<T>& fn);

  Parameter<T> gamma;
  Parameter<T> beta;
  Parameter<T> running_mean;
  Parameter<T> running_var;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t din, std::size_t dout, bool with_bias, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void visit(const ParamFn<T>& fn);

  Parameter<T> weight;  // [Din, Dout]
  Parameter<T> bias;
  bool has_bias = true;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t width);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void visit(const ParamFn<T>& fn);

  Parameter<T> gamma;
  Parameter<T> beta;
};

/// BN followed by ReLU.
template <typename T>
Var<T> bn_relu(Tape<T>& tape, BatchNorm3d<T>& bn, Var<T> x, Mode mode) {
  return ops::relu(bn.forward(tape, x, mode));
}

}  // namespace sfnet::model

#pragma once

// Differentiable ops: each computes its value with a kernel from kernels.hpp
// and records the matching backward rule on the tape.

#include <vector>

#include "sfnet/autodiff.hpp"
#include "sfnet/kernels.hpp"
#include "sfnet/spectral.hpp"

namespace sfnet::ops {

using kernels::ConvParams;

enum class Mode { kTrain, kEval };

template <typename T>
Var<T> conv3d(Var<T> x, Var<T> w, const Var<T>* bias, const ConvParams& p);

template <typename T>
Var<T> conv1d_channels(Var<T> x, Var<T> kernel);

template <typename T>
Var<T> maxpool3d(Var<T> x, std::size_t k, std::size_t stride, std::size_t padding);

template <typename T>
Var<T> avgpool3d(Var<T> x, std::size_t k, std::size_t stride);

template <typename T>
Var<T> global_avg_pool(Var<T> x);

/// Batch norm over [N, C, W, H, D]. In training mode the running statistics
/// are updated in place with the given momentum (biased batch variance).
template <typename T>
Var<T> batchnorm3d(Var<T> x, Var<T> gamma, Var<T> beta, Parameter<T>& running_mean,
                   Parameter<T>& running_var, Mode mode, T eps = T(1e-5), T momentum = T(0.1));

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));

template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> gelu(Var<T> x);
template <typename T> Var<T> sigmoid(Var<T> x);

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, const Var<T>* bias);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

/// Elementwise sum; shapes must match exactly.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// Elementwise product. b may broadcast against a: every axis of b equals
/// the matching axis of a or is 1 (e.g. [N,C,1,1,1] or [N,1,W,H,D] maps).
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

/// x times a learnable one-element tensor.
template <typename T>
Var<T> scale(Var<T> x, Var<T> s);

template <typename T>
Var<T> scale_const(Var<T> x, T s);

template <typename T>
Var<T> sum(Var<T> x);

/// Mean over axis 1 of [N, L, D] -> [N, D].
template <typename T>
Var<T> mean_tokens(Var<T> x);

template <typename T>
Var<T> patchify(Var<T> x, std::size_t patch);

/// Global filter on a token grid: tokens [N, L, D] with L = Gx*Gy*Gz in
/// x-fastest order; filter halves [D, Gx, Gy, Gz/2+1]. Output is
/// ifft3(K * fft3(tokens)) per (sample, channel).
template <typename T>
Var<T> global_filter(Var<T> tokens, Var<T> filter_re, Var<T> filter_im,
                     const spectral::Grid3& grid);

/// Scalar mean cross-entropy.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels);

}  // namespace sfnet::ops

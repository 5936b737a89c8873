#pragma once

// Raw forward/backward kernels. These know nothing about the tape; the
// differentiable wrappers in ops.hpp call into them.

#include <cstddef>
#include <optional>
#include <vector>

#include "sfnet/tensor.hpp"

namespace sfnet::kernels {

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

/// floor((n + 2p - d(k-1) - 1)/s) + 1; throws when no kernel placement fits.
std::size_t conv_out_extent(std::size_t n, std::size_t k, const ConvParams& p);

// ---- conv3d -------------------------------------------------------------

/// im2col + GEMM path. weight is [Cout, Cin, k, k, k]; bias may be null.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvParams& p);

/// Reference path: direct summation over every output voxel.
template <typename T>
Tensor<T> conv3d_direct(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                        const ConvParams& p);

/// Accumulates into whichever of gx, gw, gb are non-null.
template <typename T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gout,
                     const ConvParams& p, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

// ---- 1-D convolution across channels -------------------------------------

template <typename T>
Tensor<T> conv1d_channels(const Tensor<T>& x, const Tensor<T>& kernel);

template <typename T>
void conv1d_channels_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                              const Tensor<T>& gout, Tensor<T>* gx, Tensor<T>* gk);

// ---- pooling ------------------------------------------------------------

/// Max pooling with -inf padding. argmax receives the flat input index that
/// won each output cell (first index in scan order on ties).
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t padding,
                    std::vector<std::size_t>* argmax);

/// Average pooling without padding; trailing cells that do not fill a window
/// are dropped.
template <typename T>
Tensor<T> avgpool3d(const Tensor<T>& x, std::size_t k, std::size_t stride);

template <typename T>
void avgpool3d_backward(const Shape& in_shape, std::size_t k, std::size_t stride,
                        const Tensor<T>& gout, Tensor<T>& gx);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// ---- normalization ------------------------------------------------------

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

/// Training-mode batch norm over [N, C, W, H, D] with biased batch variance.
/// Returns the normalized-and-affine output; xhat receives the normalized
/// input for the backward pass.
template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps, Tensor<T>& xhat, BatchNormStats& stats);

template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps);

template <typename T>
void batchnorm_train_backward(const Tensor<T>& xhat, const Tensor<T>& gamma,
                              const BatchNormStats& stats, const Tensor<T>& gout, Tensor<T>* gx,
                              Tensor<T>* ggamma, Tensor<T>* gbeta);

/// Layer norm over the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     Tensor<T>& xhat, std::vector<T>& inv_std);

template <typename T>
void layer_norm_backward(const Tensor<T>& xhat, const std::vector<T>& inv_std,
                         const Tensor<T>& gamma, const Tensor<T>& gout, Tensor<T>* gx,
                         Tensor<T>* ggamma, Tensor<T>* gbeta);

// ---- elementwise --------------------------------------------------------

inline constexpr double kGeluTanhScale = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluCubic = 0.044715;

template <typename T> T relu(T x) { return x <= T{0} ? T{0} : x; }  // NaN passes through
template <typename T> T sigmoid(T x) {
  return x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}
template <typename T> T gelu(T x) {
  const T u = T(kGeluTanhScale) * (x + T(kGeluCubic) * x * x * x);
  return T{0.5} * x * (T{1} + std::tanh(u));
}
template <typename T> T gelu_grad(T x) {
  const T u = T(kGeluTanhScale) * (x + T(kGeluCubic) * x * x * x);
  const T t = std::tanh(u);
  const T du = T(kGeluTanhScale) * (T{1} + T{3} * T(kGeluCubic) * x * x);
  return T{0.5} * (T{1} + t) + T{0.5} * x * (T{1} - t * t) * du;
}

// ---- dense algebra ------------------------------------------------------

/// out[M, Dout] = x[M, Din] * w[Din, Dout] (+ bias), over the last axis of x.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias);

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gout,
                     Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

/// C[m,n] (+)= A[m,k] * B[k,n] with optional transposes, row-major buffers.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts);

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<std::size_t>& sizes);

/// Mean over batch of -log softmax(logits)[label]; grad receives d(loss)/d(logits).
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                        Tensor<T>* grad);

template <typename T>
std::vector<T> softmax_row(const T* logits, std::size_t k);

// ---- patches ------------------------------------------------------------

/// [N, C, W, H, D] -> [N, L, C*P^3]. Token l = gx + Gx*(gy + Gy*gz); the
/// feature index inside a token is ((c*P + px)*P + py)*P + pz.
template <typename T>
Tensor<T> patchify(const Tensor<T>& x, std::size_t patch);

/// Inverse of patchify for a known feature-map shape.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, const Shape& map_shape, std::size_t patch);

}  // namespace sfnet::kernels

#pragma once

// Global frequency module: patch tokenization, learnable spectral filters and
// the low-rank MLP.

#include "sfnet/model/layers.hpp"
#include "sfnet/spectral.hpp"

namespace sfnet::model {

/// Splits [N, C, W, H, D] into non-overlapping P^3 patches and applies a
/// learnable square projection of width C*P^3.
template <typename T>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(const std::string& name, std::size_t channels, std::size_t patch, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void visit(const ParamFn<T>& fn);

  std::size_t patch = 1;
  Linear<T> proj;
};

/// gelu(W4 W3 gelu(W2 W1 x + b2) + b4), each full-rank matrix replaced by a
/// product of two thin factors.
template <typename T>
class LowRankMLP {
 public:
  LowRankMLP() = default;
  LowRankMLP(const std::string& name, std::size_t width, std::size_t hidden, std::size_t rank1,
             std::size_t rank2, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void visit(const ParamFn<T>& fn);

  Linear<T> w1;  // D  -> r1
  Linear<T> w2;  // r1 -> D' (+ b2)
  Linear<T> w3;  // D' -> r2
  Linear<T> w4;  // r2 -> D  (+ b4)
};

/// D*r1 + r1*D' + D' + D'*r2 + r2*D + D
std::size_t low_rank_mlp_params(std::size_t width, std::size_t hidden, std::size_t rank1,
                                std::size_t rank2);
/// D*D' + D' + D'*D + D
std::size_t full_rank_mlp_params(std::size_t width, std::size_t hidden);

/// y = x + ifft3(K * fft3(norm1(x))); out = y + mlp(norm2(y)).
///
/// The filter K is stored as real and imaginary halves of shape
/// [D, Gx, Gy, Gz/2 + 1], initialized to 1 + N(0, 0.02) + i N(0, 0.02).
template <typename T>
class GlobalFilterBlock {
 public:
  GlobalFilterBlock() = default;
  GlobalFilterBlock(const std::string& name, std::size_t width, const spectral::Grid3& grid,
                    std::size_t hidden, std::size_t rank1, std::size_t rank2, bool use_norm,
                    Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> tokens);
  /// The filtering step alone: ifft3(K * fft3(x)).
  Var<T> spectral_path(Tape<T>& tape, Var<T> tokens);
  void visit(const ParamFn<T>& fn);

  spectral::Grid3 grid;
  bool use_norm = true;
  LayerNorm<T> norm1;
  Parameter<T> filter_real;
  Parameter<T> filter_imag;
  LayerNorm<T> norm2;
  LowRankMLP<T> mlp;
};

}  // namespace sfnet::model

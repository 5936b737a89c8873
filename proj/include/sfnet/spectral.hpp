#pragma once

// 3-D discrete Fourier transforms over token grids.
//
// Convention: the forward transform is unnormalized, the inverse carries the
// 1/V factor (V = Gx*Gy*Gz). Real signals are stored in the Hermitian-reduced
// form: only bins kz = 0..Gz/2 of the last grid axis are kept.

#include <array>
#include <cstddef>
#include <vector>

#include "sfnet/tensor.hpp"

namespace sfnet::spectral {

struct Grid3 {
  std::size_t x = 1, y = 1, z = 1;

  std::size_t volume() const { return x * y * z; }
  std::size_t half_z() const { return z / 2 + 1; }
  std::size_t half_volume() const { return x * y * half_z(); }
  friend bool operator==(const Grid3&, const Grid3&) = default;
};

template <typename T>
struct ComplexTensor {
  Shape shape;
  std::vector<T> re;
  std::vector<T> im;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape s)
      : shape(std::move(s)), re(shape_numel(shape), T{0}), im(shape_numel(shape), T{0}) {}

  std::size_t numel() const { return re.size(); }
};

/// Hermitian-reduced spectrum of `channels` real grids; coeffs has shape
/// [channels, Gx, Gy, Gz/2 + 1].
template <typename T>
struct SpectrumHalf {
  Grid3 grid;
  std::size_t channels = 0;
  ComplexTensor<T> coeffs;
};

bool is_power_of_two(std::size_t n);

/// Multiplicity of a stored half-spectrum bin in the full spectrum: 1 for the
/// kz = 0 and Nyquist planes, 2 otherwise.
inline int half_bin_weight(std::size_t kz, std::size_t gz) {
  return (kz == 0 || (gz % 2 == 0 && kz == gz / 2)) ? 1 : 2;
}

/// Iterative radix-2 transform of one contiguous complex line, in place and
/// unnormalized. `inverse` flips the exponent sign only.
template <typename T>
class Radix2Plan {
 public:
  explicit Radix2Plan(std::size_t n);
  std::size_t size() const { return n_; }
  void execute(T* re, T* im, bool inverse) const;

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<T> cos_;
  std::vector<T> sin_;
};

/// Full complex transform over the last three axes (any leading batch axes).
/// The inverse includes the 1/V normalization.
template <typename T>
ComplexTensor<T> fft3_complex(const ComplexTensor<T>& x, bool inverse);

/// Real-input forward transform of [C, Gx, Gy, Gz] (or [Gx, Gy, Gz]).
template <typename T>
SpectrumHalf<T> fft3(const Tensor<T>& x);

/// Inverse of fft3; returns [C, Gx, Gy, Gz]. Bins with kz > Gz/2 are taken as
/// the conjugate mirror of the stored ones and the real part of the full
/// inverse is returned.
template <typename T>
Tensor<T> ifft3(const SpectrumHalf<T>& spectrum);

/// Adjoint of fft3 under the real inner product on (re, im) pairs.
template <typename T>
Tensor<T> fft3_backward(const SpectrumHalf<T>& grad);

/// Adjoint of ifft3 under the real inner product on (re, im) pairs.
template <typename T>
SpectrumHalf<T> ifft3_backward(const Tensor<T>& grad);

/// O(V^2) definition of the forward DFT, the oracle for fft3. Each grid
/// extent must be at most 16.
template <typename T>
ComplexTensor<T> naive_dft3(const Tensor<T>& x);

/// O(V^2) inverse DFT (with 1/V) of a full complex spectrum over the last three axes.
template <typename T>
ComplexTensor<T> naive_idft3(const ComplexTensor<T>& spectrum);

/// Full spectrum [C, Gx, Gy, Gz] rebuilt from the stored half by conjugate
/// mirroring: X[kx, ky, kz] = conj(X[-kx, -ky, Gz - kz]) for kz > Gz/2.
template <typename T>
ComplexTensor<T> hermitian_extend(const SpectrumHalf<T>& spectrum);

/// Cyclic shift by floor(extent/2) on each of the last three axes.
template <typename T>
Tensor<T> fftshift3(const Tensor<T>& volume);

/// Sum over all bins of |X|^2, counting mirrored bins of a half spectrum twice.
template <typename T>
double half_spectrum_energy(const SpectrumHalf<T>& spectrum);

}  // namespace sfnet::spectral

#include "sfnet/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sfnet::spectral {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

template <typename T>
Radix2Plan<T>::Radix2Plan(std::size_t n) : n_(n) {
  if (!is_power_of_two(n)) {
    throw std::invalid_argument("radix-2 transform length " + std::to_string(n) +
                                " is not a power of two");
  }
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  bitrev_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bitrev_[i] = r;
  }
  cos_.resize(n / 2 + 1);
  sin_.resize(n / 2 + 1);
  for (std::size_t j = 0; j <= n / 2; ++j) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    cos_[j] = static_cast<T>(std::cos(a));
    sin_[j] = static_cast<T>(std::sin(a));
  }
}

template <typename T>
void Radix2Plan<T>::execute(T* re, T* im, bool inverse) const {
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  const T sign = inverse ? T{-1} : T{1};
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const T wr = cos_[k * step];
        const T wi = sign * sin_[k * step];
        const std::size_t a = start + k, b = a + half;
        const T tr = re[b] * wr - im[b] * wi;
        const T ti = re[b] * wi + im[b] * wr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
      }
    }
  }
}

namespace {

Grid3 grid_of(const Shape& s) {
  if (s.size() < 3) {
    throw std::invalid_argument("3-D transform needs rank >= 3, got " + shape_str(s));
  }
  return Grid3{s[s.size() - 3], s[s.size() - 2], s[s.size() - 1]};
}

void require_power_of_two_grid(const Grid3& g) {
  if (!is_power_of_two(g.x) || !is_power_of_two(g.y) || !is_power_of_two(g.z)) {
    throw std::invalid_argument("token grid " + std::to_string(g.x) + "x" + std::to_string(g.y) +
                                "x" + std::to_string(g.z) +
                                " is not a power of two on every axis; adjust the patch size "
                                "or input extent so each grid extent is a power of two");
  }
}

// Transforms every line of one [Gx, Gy, Gz] complex block along all three axes.
template <typename T>
void transform_block(T* re, T* im, const Grid3& g, bool inverse) {
  const Radix2Plan<T> px(g.x), py(g.y), pz(g.z);
  std::vector<T> lr(std::max({g.x, g.y, g.z})), li(lr.size());
  // z lines are contiguous
  for (std::size_t l = 0; l < g.x * g.y; ++l) pz.execute(re + l * g.z, im + l * g.z, inverse);
  for (std::size_t ix = 0; ix < g.x; ++ix)
    for (std::size_t iz = 0; iz < g.z; ++iz) {
      const std::size_t base = ix * g.y * g.z + iz;
      for (std::size_t iy = 0; iy < g.y; ++iy) {
        lr[iy] = re[base + iy * g.z];
        li[iy] = im[base + iy * g.z];
      }
      py.execute(lr.data(), li.data(), inverse);
      for (std::size_t iy = 0; iy < g.y; ++iy) {
        re[base + iy * g.z] = lr[iy];
        im[base + iy * g.z] = li[iy];
      }
    }
  const std::size_t plane = g.y * g.z;
  for (std::size_t j = 0; j < plane; ++j) {
    for (std::size_t ix = 0; ix < g.x; ++ix) {
      lr[ix] = re[ix * plane + j];
      li[ix] = im[ix * plane + j];
    }
    px.execute(lr.data(), li.data(), inverse);
    for (std::size_t ix = 0; ix < g.x; ++ix) {
      re[ix * plane + j] = lr[ix];
      im[ix * plane + j] = li[ix];
    }
  }
}

template <typename T>
std::size_t leading_count(const Shape& s) {
  std::size_t c = 1;
  for (std::size_t i = 0; i + 3 < s.size(); ++i) c *= s[i];
  return c;
}

template <typename T>
SpectrumHalf<T> make_half(std::size_t channels, const Grid3& g) {
  SpectrumHalf<T> h;
  h.grid = g;
  h.channels = channels;
  h.coeffs = ComplexTensor<T>({channels, g.x, g.y, g.half_z()});
  return h;
}

// Fraction (a*b mod n)/n, exact in integers before the division.
double phase_fraction(std::size_t a, std::size_t b, std::size_t n) {
  return static_cast<double>((a * b) % n) / static_cast<double>(n);
}

}  // namespace

template <typename T>
ComplexTensor<T> fft3_complex(const ComplexTensor<T>& x, bool inverse) {
  const Grid3 g = grid_of(x.shape);
  require_power_of_two_grid(g);
  ComplexTensor<T> out = x;
  const std::size_t v = g.volume();
  const std::size_t count = leading_count<T>(x.shape);
  for (std::size_t c = 0; c < count; ++c) {
    transform_block(out.re.data() + c * v, out.im.data() + c * v, g, inverse);
  }
  if (inverse) {
    const T scale = T{1} / static_cast<T>(v);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      out.re[i] *= scale;
      out.im[i] *= scale;
    }
  }
  return out;
}

template <typename T>
SpectrumHalf<T> fft3(const Tensor<T>& x) {
  const Grid3 g = grid_of(x.shape());
  require_power_of_two_grid(g);
  const std::size_t channels = leading_count<T>(x.shape());
  const std::size_t v = g.volume(), hz = g.half_z();
  SpectrumHalf<T> out = make_half<T>(channels, g);
  std::vector<T> re(v), im(v);
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy(x.data() + c * v, x.data() + (c + 1) * v, re.begin());
    std::fill(im.begin(), im.end(), T{0});
    transform_block(re.data(), im.data(), g, false);
    for (std::size_t xy = 0; xy < g.x * g.y; ++xy)
      for (std::size_t kz = 0; kz < hz; ++kz) {
        const std::size_t dst = (c * g.x * g.y + xy) * hz + kz;
        out.coeffs.re[dst] = re[xy * g.z + kz];
        out.coeffs.im[dst] = im[xy * g.z + kz];
      }
  }
  return out;
}

template <typename T>
ComplexTensor<T> hermitian_extend(const SpectrumHalf<T>& s) {
  const Grid3& g = s.grid;
  const std::size_t hz = g.half_z();
  if (s.coeffs.shape != Shape{s.channels, g.x, g.y, hz}) {
    throw std::invalid_argument("half spectrum storage " + shape_str(s.coeffs.shape) +
                                " inconsistent with its grid");
  }
  ComplexTensor<T> full({s.channels, g.x, g.y, g.z});
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t kx = 0; kx < g.x; ++kx)
      for (std::size_t ky = 0; ky < g.y; ++ky)
        for (std::size_t kz = 0; kz < g.z; ++kz) {
          const std::size_t dst = ((c * g.x + kx) * g.y + ky) * g.z + kz;
          if (kz < hz) {
            const std::size_t src = ((c * g.x + kx) * g.y + ky) * hz + kz;
            full.re[dst] = s.coeffs.re[src];
            full.im[dst] = s.coeffs.im[src];
          } else {
            const std::size_t mx = (g.x - kx) % g.x, my = (g.y - ky) % g.y, mz = g.z - kz;
            const std::size_t src = ((c * g.x + mx) * g.y + my) * hz + mz;
            full.re[dst] = s.coeffs.re[src];
            full.im[dst] = -s.coeffs.im[src];
          }
        }
  return full;
}

template <typename T>
Tensor<T> ifft3(const SpectrumHalf<T>& s) {
  require_power_of_two_grid(s.grid);
  const ComplexTensor<T> full = fft3_complex(hermitian_extend(s), true);
  return Tensor<T>({s.channels, s.grid.x, s.grid.y, s.grid.z}, full.re);
}

template <typename T>
Tensor<T> fft3_backward(const SpectrumHalf<T>& grad) {
  // d/dx Re sum_k G_k e^{-i theta} ... = Re sum_{k in half} G_k e^{+i theta}
  //                                    = V * ifft3(G / w)
  SpectrumHalf<T> scaled = grad;
  const Grid3& g = grad.grid;
  const std::size_t hz = g.half_z();
  const T v = static_cast<T>(g.volume());
  for (std::size_t i = 0; i < scaled.coeffs.numel(); ++i) {
    const T w = static_cast<T>(half_bin_weight(i % hz, g.z));
    scaled.coeffs.re[i] *= v / w;
    scaled.coeffs.im[i] *= v / w;
  }
  return ifft3(scaled);
}

template <typename T>
SpectrumHalf<T> ifft3_backward(const Tensor<T>& grad) {
  SpectrumHalf<T> out = fft3(grad);
  const Grid3& g = out.grid;
  const std::size_t hz = g.half_z();
  const T v = static_cast<T>(g.volume());
  for (std::size_t i = 0; i < out.coeffs.numel(); ++i) {
    const T w = static_cast<T>(half_bin_weight(i % hz, g.z));
    out.coeffs.re[i] *= w / v;
    out.coeffs.im[i] *= w / v;
  }
  return out;
}

template <typename T>
ComplexTensor<T> naive_dft3(const Tensor<T>& x) {
  const Grid3 g = grid_of(x.shape());
  if (g.x > 16 || g.y > 16 || g.z > 16) {
    throw std::invalid_argument("naive_dft3 is limited to grids of at most 16^3");
  }
  const std::size_t count = leading_count<T>(x.shape());
  const std::size_t v = g.volume();
  ComplexTensor<T> out({count, g.x, g.y, g.z});
  for (std::size_t c = 0; c < count; ++c) {
    const T* src = x.data() + c * v;
    for (std::size_t kx = 0; kx < g.x; ++kx)
      for (std::size_t ky = 0; ky < g.y; ++ky)
        for (std::size_t kz = 0; kz < g.z; ++kz) {
          double ar = 0, ai = 0;
          for (std::size_t nx = 0; nx < g.x; ++nx)
            for (std::size_t ny = 0; ny < g.y; ++ny)
              for (std::size_t nz = 0; nz < g.z; ++nz) {
                const double f = phase_fraction(kx, nx, g.x) + phase_fraction(ky, ny, g.y) +
                                 phase_fraction(kz, nz, g.z);
                const double a = -2.0 * std::numbers::pi * f;
                const double val = src[(nx * g.y + ny) * g.z + nz];
                ar += val * std::cos(a);
                ai += val * std::sin(a);
              }
          const std::size_t dst = c * v + (kx * g.y + ky) * g.z + kz;
          out.re[dst] = static_cast<T>(ar);
          out.im[dst] = static_cast<T>(ai);
        }
  }
  return out;
}

template <typename T>
ComplexTensor<T> naive_idft3(const ComplexTensor<T>& s) {
  const Grid3 g = grid_of(s.shape);
  if (g.x > 16 || g.y > 16 || g.z > 16) {
    throw std::invalid_argument("naive_idft3 is limited to grids of at most 16^3");
  }
  const std::size_t count = leading_count<T>(s.shape);
  const std::size_t v = g.volume();
  ComplexTensor<T> out(s.shape);
  for (std::size_t c = 0; c < count; ++c)
    for (std::size_t nx = 0; nx < g.x; ++nx)
      for (std::size_t ny = 0; ny < g.y; ++ny)
        for (std::size_t nz = 0; nz < g.z; ++nz) {
          double ar = 0, ai = 0;
          for (std::size_t kx = 0; kx < g.x; ++kx)
            for (std::size_t ky = 0; ky < g.y; ++ky)
              for (std::size_t kz = 0; kz < g.z; ++kz) {
                const double f = phase_fraction(kx, nx, g.x) + phase_fraction(ky, ny, g.y) +
                                 phase_fraction(kz, nz, g.z);
                const double a = 2.0 * std::numbers::pi * f;
                const std::size_t src = c * v + (kx * g.y + ky) * g.z + kz;
                const double xr = s.re[src], xi = s.im[src];
                ar += xr * std::cos(a) - xi * std::sin(a);
                ai += xr * std::sin(a) + xi * std::cos(a);
              }
          const std::size_t dst = c * v + (nx * g.y + ny) * g.z + nz;
          out.re[dst] = static_cast<T>(ar / static_cast<double>(v));
          out.im[dst] = static_cast<T>(ai / static_cast<double>(v));
        }
  return out;
}

template <typename T>
Tensor<T> fftshift3(const Tensor<T>& volume) {
  const Grid3 g = grid_of(volume.shape());
  const std::size_t count = leading_count<T>(volume.shape());
  const std::size_t v = g.volume();
  Tensor<T> out(volume.shape());
  for (std::size_t c = 0; c < count; ++c)
    for (std::size_t ix = 0; ix < g.x; ++ix)
      for (std::size_t iy = 0; iy < g.y; ++iy)
        for (std::size_t iz = 0; iz < g.z; ++iz) {
          const std::size_t sx = (ix + g.x / 2) % g.x, sy = (iy + g.y / 2) % g.y,
                            sz = (iz + g.z / 2) % g.z;
          out[c * v + (sx * g.y + sy) * g.z + sz] = volume[c * v + (ix * g.y + iy) * g.z + iz];
        }
  return out;
}

template <typename T>
double half_spectrum_energy(const SpectrumHalf<T>& s) {
  const std::size_t hz = s.grid.half_z();
  double e = 0;
  for (std::size_t i = 0; i < s.coeffs.numel(); ++i) {
    const double m2 = static_cast<double>(s.coeffs.re[i]) * s.coeffs.re[i] +
                      static_cast<double>(s.coeffs.im[i]) * s.coeffs.im[i];
    e += half_bin_weight(i % hz, s.grid.z) * m2;
  }
  return e;
}

#define SFNET_INSTANTIATE_SPECTRAL(T)                                               \
  template class Radix2Plan<T>;                                                     \
  template ComplexTensor<T> fft3_complex<T>(const ComplexTensor<T>&, bool);         \
  template SpectrumHalf<T> fft3<T>(const Tensor<T>&);                               \
  template Tensor<T> ifft3<T>(const SpectrumHalf<T>&);                              \
  template Tensor<T> fft3_backward<T>(const SpectrumHalf<T>&);                      \
  template SpectrumHalf<T> ifft3_backward<T>(const Tensor<T>&);                     \
  template ComplexTensor<T> naive_dft3<T>(const Tensor<T>&);                        \
  template ComplexTensor<T> naive_idft3<T>(const ComplexTensor<T>&);                \
  template ComplexTensor<T> hermitian_extend<T>(const SpectrumHalf<T>&);            \
  template Tensor<T> fftshift3<T>(const Tensor<T>&);                                \
  template double half_spectrum_energy<T>(const SpectrumHalf<T>&);

SFNET_INSTANTIATE_SPECTRAL(float)
SFNET_INSTANTIATE_SPECTRAL(double)

#undef SFNET_INSTANTIATE_SPECTRAL

}  // namespace sfnet::spectral

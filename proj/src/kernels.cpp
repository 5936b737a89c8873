#include "sfnet/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sfnet {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

}  // namespace sfnet

namespace sfnet::kernels {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw std::invalid_argument(std::string(what) + " must have rank " + std::to_string(rank) +
                                ", got shape " + shape_str(s));
  }
}

struct ConvGeom {
  std::size_t n, cin, w, h, d;
  std::size_t cout, k;
  std::size_t ow, oh, od;
  std::size_t out_voxels() const { return ow * oh * od; }
  std::size_t col_rows() const { return cin * k * k * k; }
};

ConvGeom conv_geometry(const Shape& xs, const Shape& ws, const ConvParams& p) {
  require_rank(xs, 5, "conv3d input");
  require_rank(ws, 5, "conv3d weight");
  if (ws[2] != ws[3] || ws[3] != ws[4]) {
    throw std::invalid_argument("conv3d weight must have a cubic kernel, got " + shape_str(ws));
  }
  if (xs[1] != ws[1]) {
    throw std::invalid_argument("conv3d channel mismatch: input " + shape_str(xs) +
                                " has " + std::to_string(xs[1]) + " channels but weight " +
                                shape_str(ws) + " expects " + std::to_string(ws[1]));
  }
  if (p.stride == 0 || p.dilation == 0) {
    throw std::invalid_argument("conv3d stride and dilation must be >= 1");
  }
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], xs[4], ws[0], ws[2], 0, 0, 0};
  g.ow = conv_out_extent(g.w, g.k, p);
  g.oh = conv_out_extent(g.h, g.k, p);
  g.od = conv_out_extent(g.d, g.k, p);
  return g;
}

// col[row, o] with row = ((c*k + a)*k + b)*k + e for kernel tap (a, b, e).
template <typename T>
void im2col(const T* x, const ConvGeom& g, const ConvParams& p, T* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(p.padding);
  const std::size_t ov = g.out_voxels();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* xc = x + c * g.w * g.h * g.d;
    for (std::size_t a = 0; a < g.k; ++a) {
      for (std::size_t b = 0; b < g.k; ++b) {
        for (std::size_t e = 0; e < g.k; ++e, ++row) {
          T* dst = col + row * ov;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * p.stride + a * p.dilation) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) {
              std::fill(dst, dst + g.oh * g.od, T{0});
              dst += g.oh * g.od;
              continue;
            }
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * p.stride + b * p.dilation) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                std::fill(dst, dst + g.od, T{0});
                dst += g.od;
                continue;
              }
              const T* src = xc + (static_cast<std::size_t>(ix) * g.h +
                                   static_cast<std::size_t>(iy)) * g.d;
              for (std::size_t oz = 0; oz < g.od; ++oz) {
                const std::ptrdiff_t iz =
                    static_cast<std::ptrdiff_t>(oz * p.stride + e * p.dilation) - pad;
                *dst++ = (iz < 0 || iz >= static_cast<std::ptrdiff_t>(g.d))
                             ? T{0}
                             : src[static_cast<std::size_t>(iz)];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeom& g, const ConvParams& p, T* gx) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(p.padding);
  const std::size_t ov = g.out_voxels();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* gc = gx + c * g.w * g.h * g.d;
    for (std::size_t a = 0; a < g.k; ++a) {
      for (std::size_t b = 0; b < g.k; ++b) {
        for (std::size_t e = 0; e < g.k; ++e, ++row) {
          const T* src = col + row * ov;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * p.stride + a * p.dilation) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) {
              src += g.oh * g.od;
              continue;
            }
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * p.stride + b * p.dilation) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                src += g.od;
                continue;
              }
              T* dst = gc + (static_cast<std::size_t>(ix) * g.h + static_cast<std::size_t>(iy)) *
                                g.d;
              for (std::size_t oz = 0; oz < g.od; ++oz, ++src) {
                const std::ptrdiff_t iz =
                    static_cast<std::ptrdiff_t>(oz * p.stride + e * p.dilation) - pad;
                if (iz >= 0 && iz < static_cast<std::ptrdiff_t>(g.d)) {
                  dst[static_cast<std::size_t>(iz)] += *src;
                }
              }
            }
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeom& g, const ConvParams& p) {
  return g.k == 1 && p.stride == 1 && p.padding == 0;
}

}  // namespace

std::size_t conv_out_extent(std::size_t n, std::size_t k, const ConvParams& p) {
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(p.dilation * (k - 1) + 1);
  const std::ptrdiff_t padded = static_cast<std::ptrdiff_t>(n + 2 * p.padding);
  if (k == 0 || p.stride == 0 || padded < span) {
    throw std::invalid_argument("window of span " + std::to_string(span) +
                                " does not fit padded extent " + std::to_string(padded));
  }
  return static_cast<std::size_t>((padded - span) / static_cast<std::ptrdiff_t>(p.stride)) + 1;
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto im = static_cast<Eigen::Index>(m);
  const auto in = static_cast<Eigen::Index>(n);
  const auto ik = static_cast<Eigen::Index>(k);
  Eigen::Map<RowMat> C(c, im, in);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) {
    C.noalias() += Eigen::Map<const RowMat>(a, im, ik) * Eigen::Map<const RowMat>(b, ik, in);
  } else if (trans_a && !trans_b) {
    C.noalias() +=
        Eigen::Map<const RowMat>(a, ik, im).transpose() * Eigen::Map<const RowMat>(b, ik, in);
  } else if (!trans_a && trans_b) {
    C.noalias() +=
        Eigen::Map<const RowMat>(a, im, ik) * Eigen::Map<const RowMat>(b, in, ik).transpose();
  } else {
    C.noalias() += Eigen::Map<const RowMat>(a, ik, im).transpose() *
                   Eigen::Map<const RowMat>(b, in, ik).transpose();
  }
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvParams& p) {
  const ConvGeom g = conv_geometry(x.shape(), w.shape(), p);
  if (bias && bias->numel() != g.cout) {
    throw std::invalid_argument("conv3d bias " + shape_str(bias->shape()) + " does not match " +
                                std::to_string(g.cout) + " output channels");
  }
  Tensor<T> out({g.n, g.cout, g.ow, g.oh, g.od});
  const std::size_t ov = g.out_voxels();
  const std::size_t in_stride = g.cin * g.w * g.h * g.d;
  std::vector<T> col;
  const bool pointwise = is_pointwise(g, p);
  if (!pointwise) col.resize(g.col_rows() * ov);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xs = x.data() + n * in_stride;
    const T* cols = xs;
    if (!pointwise) {
      im2col(xs, g, p, col.data());
      cols = col.data();
    }
    T* os = out.data() + n * g.cout * ov;
    gemm(false, false, g.cout, ov, g.col_rows(), w.data(), cols, os, false);
    if (bias) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T bv = (*bias)[co];
        T* row = os + co * ov;
        for (std::size_t o = 0; o < ov; ++o) row[o] += bv;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv3d_direct(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                        const ConvParams& p) {
  const ConvGeom g = conv_geometry(x.shape(), w.shape(), p);
  Tensor<T> out({g.n, g.cout, g.ow, g.oh, g.od});
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(p.padding);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t ox = 0; ox < g.ow; ++ox)
        for (std::size_t oy = 0; oy < g.oh; ++oy)
          for (std::size_t oz = 0; oz < g.od; ++oz) {
            T acc = bias ? (*bias)[co] : T{0};
            for (std::size_t ci = 0; ci < g.cin; ++ci)
              for (std::size_t a = 0; a < g.k; ++a)
                for (std::size_t b = 0; b < g.k; ++b)
                  for (std::size_t e = 0; e < g.k; ++e) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * p.stride + a * p.dilation) - pad;
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * p.stride + b * p.dilation) - pad;
                    const std::ptrdiff_t iz =
                        static_cast<std::ptrdiff_t>(oz * p.stride + e * p.dilation) - pad;
                    if (ix < 0 || iy < 0 || iz < 0 || ix >= static_cast<std::ptrdiff_t>(g.w) ||
                        iy >= static_cast<std::ptrdiff_t>(g.h) ||
                        iz >= static_cast<std::ptrdiff_t>(g.d))
                      continue;
                    acc += w.at(co, ci, a, b, e) *
                           x.at(n, ci, static_cast<std::size_t>(ix), static_cast<std::size_t>(iy),
                                static_cast<std::size_t>(iz));
                  }
            out.at(n, co, ox, oy, oz) = acc;
          }
  return out;
}

template <typename T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gout,
                     const ConvParams& p, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const ConvGeom g = conv_geometry(x.shape(), w.shape(), p);
  const std::size_t ov = g.out_voxels();
  const std::size_t in_stride = g.cin * g.w * g.h * g.d;
  const bool pointwise = is_pointwise(g, p);
  std::vector<T> col;
  if (!pointwise && (gw || gx)) col.resize(g.col_rows() * ov);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* go = gout.data() + n * g.cout * ov;
    if (gb) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        T s = 0;
        for (std::size_t o = 0; o < ov; ++o) s += go[co * ov + o];
        (*gb)[co] += s;
      }
    }
    if (gw) {
      const T* cols = x.data() + n * in_stride;
      if (!pointwise) {
        im2col(cols, g, p, col.data());
        cols = col.data();
      }
      gemm(false, true, g.cout, g.col_rows(), ov, go, cols, gw->data(), true);
    }
    if (gx) {
      T* gxs = gx->data() + n * in_stride;
      if (pointwise) {
        gemm(true, false, g.col_rows(), ov, g.cout, w.data(), go, gxs, true);
      } else {
        gemm(true, false, g.col_rows(), ov, g.cout, w.data(), go, col.data(), false);
        col2im(col.data(), g, p, gxs);
      }
    }
  }
}

template <typename T>
Tensor<T> conv1d_channels(const Tensor<T>& x, const Tensor<T>& kernel) {
  const std::size_t k = kernel.numel();
  if (k % 2 == 0) {
    throw std::invalid_argument("conv1d_channels kernel size must be odd, got " +
                                std::to_string(k));
  }
  require_rank(x.shape(), 5, "conv1d_channels input");
  if (spatial_size(x) != 1) {
    throw std::invalid_argument("conv1d_channels expects a pooled [N,C,1,1,1] input, got " +
                                shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>((k - 1) / 2);
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      T acc = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ch + j) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(c)) continue;
        acc += kernel[j] * x[b * c + static_cast<std::size_t>(src)];
      }
      out[b * c + ch] = acc;
    }
  return out;
}

template <typename T>
void conv1d_channels_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                              const Tensor<T>& gout, Tensor<T>* gx, Tensor<T>* gk) {
  const std::size_t k = kernel.numel();
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>((k - 1) / 2);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T g = gout[b * c + ch];
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ch + j) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(c)) continue;
        const std::size_t si = b * c + static_cast<std::size_t>(src);
        if (gx) (*gx)[si] += kernel[j] * g;
        if (gk) (*gk)[j] += x[si] * g;
      }
    }
}

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t padding,
                    std::vector<std::size_t>* argmax) {
  require_rank(x.shape(), 5, "maxpool3d input");
  const ConvParams p{stride, padding, 1};
  const std::size_t n = x.dim(0), c = x.dim(1), w = x.dim(2), h = x.dim(3), d = x.dim(4);
  const std::size_t ow = conv_out_extent(w, k, p), oh = conv_out_extent(h, k, p),
                    od = conv_out_extent(d, k, p);
  Tensor<T> out({n, c, ow, oh, od});
  if (argmax) argmax->assign(out.numel(), 0);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * w * h * d;
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t oz = 0; oz < od; ++oz, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_i = std::numeric_limits<std::size_t>::max();
            for (std::size_t a = 0; a < k; ++a) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + a) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              for (std::size_t bb = 0; bb < k; ++bb) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + bb) - pad;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t e = 0; e < k; ++e) {
                  const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz * stride + e) - pad;
                  if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(d)) continue;
                  const std::size_t idx =
                      base + (static_cast<std::size_t>(ix) * h + static_cast<std::size_t>(iy)) * d +
                      static_cast<std::size_t>(iz);
                  if (best_i == std::numeric_limits<std::size_t>::max() || x[idx] > best || std::isnan(x[idx])) {
                    best = x[idx];
                    best_i = idx;
                  }
                }
              }
            }
            if (best_i == std::numeric_limits<std::size_t>::max()) {
              throw std::invalid_argument("maxpool3d window covers only padding");
            }
            out[o] = best;
            if (argmax) (*argmax)[o] = best_i;
          }
    }
  return out;
}

template <typename T>
Tensor<T> avgpool3d(const Tensor<T>& x, std::size_t k, std::size_t stride) {
  require_rank(x.shape(), 5, "avgpool3d input");
  const ConvParams p{stride, 0, 1};
  const std::size_t n = x.dim(0), c = x.dim(1), w = x.dim(2), h = x.dim(3), d = x.dim(4);
  const std::size_t ow = conv_out_extent(w, k, p), oh = conv_out_extent(h, k, p),
                    od = conv_out_extent(d, k, p);
  Tensor<T> out({n, c, ow, oh, od});
  const T scale = T{1} / static_cast<T>(k * k * k);
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < n * c; ++bc) {
    const T* src = x.data() + bc * w * h * d;
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t oz = 0; oz < od; ++oz, ++o) {
          T acc = 0;
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
              for (std::size_t e = 0; e < k; ++e)
                acc += src[((ox * stride + a) * h + oy * stride + b) * d + oz * stride + e];
          out[o] = acc * scale;
        }
  }
  return out;
}

template <typename T>
void avgpool3d_backward(const Shape& in_shape, std::size_t k, std::size_t stride,
                        const Tensor<T>& gout, Tensor<T>& gx) {
  const std::size_t w = in_shape[2], h = in_shape[3], d = in_shape[4];
  const std::size_t ow = gout.dim(2), oh = gout.dim(3), od = gout.dim(4);
  const T scale = T{1} / static_cast<T>(k * k * k);
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < in_shape[0] * in_shape[1]; ++bc) {
    T* dst = gx.data() + bc * w * h * d;
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t oz = 0; oz < od; ++oz, ++o) {
          const T g = gout[o] * scale;
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
              for (std::size_t e = 0; e < k; ++e)
                dst[((ox * stride + a) * h + oy * stride + b) * d + oz * stride + e] += g;
        }
  }
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 5, "global_avg_pool input");
  const std::size_t v = spatial_size(x);
  Tensor<T> out({x.dim(0), x.dim(1), 1, 1, 1});
  for (std::size_t bc = 0; bc < x.dim(0) * x.dim(1); ++bc) {
    double acc = 0;
    const T* src = x.data() + bc * v;
    for (std::size_t i = 0; i < v; ++i) acc += src[i];
    out[bc] = static_cast<T>(acc / static_cast<double>(v));
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps, Tensor<T>& xhat, BatchNormStats& stats) {
  require_rank(x.shape(), 5, "batchnorm input");
  const std::size_t n = x.dim(0), c = x.dim(1), v = spatial_size(x);
  if (gamma.numel() != c || beta.numel() != c) {
    throw std::invalid_argument("batchnorm affine parameters do not match " + std::to_string(c) +
                                " channels");
  }
  if (n * v < 2) {
    throw std::invalid_argument("batchnorm training needs at least 2 values per channel, got " +
                                shape_str(x.shape()));
  }
  const double m = static_cast<double>(n * v);
  stats.mean.assign(c, 0.0);
  stats.inv_std.assign(c, 0.0);
  xhat = Tensor<T>(x.shape());
  Tensor<T> out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = x.data() + (b * c + ch) * v;
      for (std::size_t i = 0; i < v; ++i) s += src[i];
    }
    const double mean = s / m;
    double ss = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = x.data() + (b * c + ch) * v;
      for (std::size_t i = 0; i < v; ++i) {
        const double dv = src[i] - mean;
        ss += dv * dv;
      }
    }
    const double inv = 1.0 / std::sqrt(ss / m + static_cast<double>(eps));
    stats.mean[ch] = mean;
    stats.inv_std[ch] = inv;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * v;
      for (std::size_t i = 0; i < v; ++i) {
        const T xh = static_cast<T>((x[off + i] - mean) * inv);
        xhat[off + i] = xh;
        out[off + i] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps) {
  require_rank(x.shape(), 5, "batchnorm input");
  const std::size_t n = x.dim(0), c = x.dim(1), v = spatial_size(x);
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T scale = gamma[ch] / std::sqrt(running_var[ch] + eps);
      const T shift = beta[ch] - running_mean[ch] * scale;
      const std::size_t off = (b * c + ch) * v;
      for (std::size_t i = 0; i < v; ++i) out[off + i] = x[off + i] * scale + shift;
    }
  return out;
}

template <typename T>
void batchnorm_train_backward(const Tensor<T>& xhat, const Tensor<T>& gamma,
                              const BatchNormStats& stats, const Tensor<T>& gout, Tensor<T>* gx,
                              Tensor<T>* ggamma, Tensor<T>* gbeta) {
  const std::size_t n = xhat.dim(0), c = xhat.dim(1), v = spatial_size(xhat);
  const double m = static_cast<double>(n * v);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sg = 0, sgx = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * v;
      for (std::size_t i = 0; i < v; ++i) {
        sg += gout[off + i];
        sgx += static_cast<double>(gout[off + i]) * xhat[off + i];
      }
    }
    if (ggamma) (*ggamma)[ch] += static_cast<T>(sgx);
    if (gbeta) (*gbeta)[ch] += static_cast<T>(sg);
    if (!gx) continue;
    const double k = static_cast<double>(gamma[ch]) * stats.inv_std[ch] / m;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * v;
      for (std::size_t i = 0; i < v; ++i) {
        (*gx)[off + i] += static_cast<T>(k * (m * gout[off + i] - sg - xhat[off + i] * sgx));
      }
    }
  }
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     Tensor<T>& xhat, std::vector<T>& inv_std) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw std::invalid_argument("layer_norm affine parameters do not match feature width " +
                                std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  xhat = Tensor<T>(x.shape());
  inv_std.assign(rows, T{0});
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = x.data() + r * d;
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += src[i];
    const double mean = s / static_cast<double>(d);
    double ss = 0;
    for (std::size_t i = 0; i < d; ++i) ss += (src[i] - mean) * (src[i] - mean);
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + static_cast<double>(eps));
    inv_std[r] = static_cast<T>(inv);
    for (std::size_t i = 0; i < d; ++i) {
      const T xh = static_cast<T>((src[i] - mean) * inv);
      xhat[r * d + i] = xh;
      out[r * d + i] = gamma[i] * xh + beta[i];
    }
  }
  return out;
}

template <typename T>
void layer_norm_backward(const Tensor<T>& xhat, const std::vector<T>& inv_std,
                         const Tensor<T>& gamma, const Tensor<T>& gout, Tensor<T>* gx,
                         Tensor<T>* ggamma, Tensor<T>* gbeta) {
  const std::size_t d = xhat.shape().back();
  const std::size_t rows = xhat.numel() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* g = gout.data() + r * d;
    const T* xh = xhat.data() + r * d;
    double s1 = 0, s2 = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const double gh = static_cast<double>(g[i]) * gamma[i];
      s1 += gh;
      s2 += gh * xh[i];
      if (ggamma) (*ggamma)[i] += g[i] * xh[i];
      if (gbeta) (*gbeta)[i] += g[i];
    }
    if (!gx) continue;
    const double k = static_cast<double>(inv_std[r]) / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double gh = static_cast<double>(g[i]) * gamma[i];
      (*gx)[r * d + i] +=
          static_cast<T>(k * (static_cast<double>(d) * gh - s1 - xh[i] * s2));
    }
  }
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
  require_rank(w.shape(), 2, "linear weight");
  const std::size_t din = x.shape().back();
  if (w.dim(0) != din) {
    throw std::invalid_argument("linear dimension mismatch: input " + shape_str(x.shape()) +
                                " vs weight " + shape_str(w.shape()));
  }
  const std::size_t dout = w.dim(1);
  if (bias && bias->numel() != dout) {
    throw std::invalid_argument("linear bias " + shape_str(bias->shape()) +
                                " does not match output width " + std::to_string(dout));
  }
  const std::size_t m = x.numel() / din;
  Shape os = x.shape();
  os.back() = dout;
  Tensor<T> out(os);
  gemm(false, false, m, dout, din, x.data(), w.data(), out.data(), false);
  if (bias) {
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < dout; ++j) out[r * dout + j] += (*bias)[j];
  }
  return out;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gout,
                     Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const std::size_t din = w.dim(0), dout = w.dim(1);
  const std::size_t m = x.numel() / din;
  if (gw) gemm(true, false, din, dout, m, x.data(), gout.data(), gw->data(), true);
  if (gx) gemm(false, true, m, din, dout, gout.data(), w.data(), gx->data(), true);
  if (gb) {
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < dout; ++j) (*gb)[j] += gout[r * dout + j];
  }
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels needs at least one input");
  const Shape& first = parts.front()->shape();
  if (first.size() < 2) throw std::invalid_argument("concat_channels needs rank >= 2");
  std::size_t total_c = 0;
  for (const Tensor<T>* t : parts) {
    Shape a = t->shape(), b = first;
    if (a.size() != b.size()) {
      throw std::invalid_argument("concat_channels rank mismatch " + shape_str(a) + " vs " +
                                  shape_str(b));
    }
    a[1] = b[1] = 0;
    if (a != b) {
      throw std::invalid_argument("concat_channels non-channel extents differ: " +
                                  shape_str(t->shape()) + " vs " + shape_str(first));
    }
    total_c += t->dim(1);
  }
  Shape os = first;
  os[1] = total_c;
  Tensor<T> out(os);
  const std::size_t inner = shape_numel(first) / (first[0] * first[1]);
  T* dst = out.data();
  for (std::size_t n = 0; n < first[0]; ++n) {
    for (const Tensor<T>* t : parts) {
      const std::size_t chunk = t->dim(1) * inner;
      const T* src = t->data() + n * chunk;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<std::size_t>& sizes) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != x.dim(1)) {
    throw std::invalid_argument("split_channels sizes sum to " + std::to_string(total) +
                                " but input has " + std::to_string(x.dim(1)) + " channels");
  }
  const std::size_t inner = x.numel() / (x.dim(0) * x.dim(1));
  std::vector<Tensor<T>> out;
  for (std::size_t s : sizes) {
    Shape sh = x.shape();
    sh[1] = s;
    out.emplace_back(sh);
  }
  const T* src = x.data();
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const std::size_t chunk = sizes[i] * inner;
      std::copy(src, src + chunk, out[i].data() + n * chunk);
      src += chunk;
    }
  }
  return out;
}

template <typename T>
std::vector<T> softmax_row(const T* logits, std::size_t k) {
  T mx = logits[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits[j]);
  std::vector<T> p(k);
  T s = 0;
  for (std::size_t j = 0; j < k; ++j) {
    p[j] = std::exp(logits[j] - mx);
    s += p[j];
  }
  for (T& v : p) v /= s;
  return p;
}

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                        Tensor<T>* grad) {
  require_rank(logits.shape(), 2, "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw std::invalid_argument("got " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(n) + " logit rows");
  }
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(k) + ")");
    }
    const T* row = logits.data() + i * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    const double lse = static_cast<double>(mx) + std::log(s);
    loss += lse - row[y];
    if (grad) {
      for (std::size_t j = 0; j < k; ++j) {
        const double pj = std::exp(static_cast<double>(row[j]) - lse);
        (*grad)[i * k + j] =
            static_cast<T>((pj - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) /
                           static_cast<double>(n));
      }
    }
  }
  return static_cast<T>(loss / static_cast<double>(n));
}

namespace {

void check_patchable(const Shape& s, std::size_t patch) {
  static const char* axis_names[] = {"W", "H", "D"};
  if (patch == 0) throw std::invalid_argument("patch size must be >= 1");
  for (std::size_t a = 0; a < 3; ++a) {
    if (s[2 + a] % patch != 0) {
      throw std::invalid_argument(std::string("feature map axis ") + axis_names[a] +
                                  " extent " + std::to_string(s[2 + a]) +
                                  " is not divisible by patch size " + std::to_string(patch));
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> patchify(const Tensor<T>& x, std::size_t patch) {
  require_rank(x.shape(), 5, "patchify input");
  check_patchable(x.shape(), patch);
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t gx = x.dim(2) / patch, gy = x.dim(3) / patch, gz = x.dim(4) / patch;
  const std::size_t tokens = gx * gy * gz;
  const std::size_t p3 = patch * patch * patch;
  const std::size_t embed = c * p3;
  Tensor<T> out({n, tokens, embed});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t iz = 0; iz < gz; ++iz)
      for (std::size_t iy = 0; iy < gy; ++iy)
        for (std::size_t ix = 0; ix < gx; ++ix) {
          const std::size_t l = ix + gx * (iy + gy * iz);
          T* dst = out.data() + (b * tokens + l) * embed;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t px = 0; px < patch; ++px)
              for (std::size_t py = 0; py < patch; ++py)
                for (std::size_t pz = 0; pz < patch; ++pz)
                  *dst++ = x.at(b, ch, ix * patch + px, iy * patch + py, iz * patch + pz);
        }
  return out;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, const Shape& map_shape, std::size_t patch) {
  require_rank(map_shape, 5, "unpatchify target");
  check_patchable(map_shape, patch);
  const std::size_t n = map_shape[0], c = map_shape[1];
  const std::size_t gx = map_shape[2] / patch, gy = map_shape[3] / patch,
                    gz = map_shape[4] / patch;
  const std::size_t count = gx * gy * gz;
  const std::size_t embed = c * patch * patch * patch;
  if (tokens.shape() != Shape{n, count, embed}) {
    throw std::invalid_argument("token tensor " + shape_str(tokens.shape()) +
                                " does not match feature map " + shape_str(map_shape));
  }
  Tensor<T> out(map_shape);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t iz = 0; iz < gz; ++iz)
      for (std::size_t iy = 0; iy < gy; ++iy)
        for (std::size_t ix = 0; ix < gx; ++ix) {
          const std::size_t l = ix + gx * (iy + gy * iz);
          const T* src = tokens.data() + (b * count + l) * embed;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t px = 0; px < patch; ++px)
              for (std::size_t py = 0; py < patch; ++py)
                for (std::size_t pz = 0; pz < patch; ++pz)
                  out.at(b, ch, ix * patch + px, iy * patch + py, iz * patch + pz) = *src++;
        }
  return out;
}

#define SFNET_INSTANTIATE_KERNELS(T)                                                           \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, \
                        T*, bool);                                                             \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,          \
                               const ConvParams&);                                             \
  template Tensor<T> conv3d_direct<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,   \
                                      const ConvParams&);                                      \
  template void conv3d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                   const ConvParams&, Tensor<T>*, Tensor<T>*, Tensor<T>*);     \
  template Tensor<T> conv1d_channels<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template void conv1d_channels_backward<T>(const Tensor<T>&, const Tensor<T>&,               \
                                            const Tensor<T>&, Tensor<T>*, Tensor<T>*);         \
  template Tensor<T> maxpool3d<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t,    \
                                  std::vector<std::size_t>*);                                  \
  template Tensor<T> avgpool3d<T>(const Tensor<T>&, std::size_t, std::size_t);                \
  template void avgpool3d_backward<T>(const Shape&, std::size_t, std::size_t,                 \
                                      const Tensor<T>&, Tensor<T>&);                           \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                    \
  template Tensor<T> batchnorm_train<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        T, Tensor<T>&, BatchNormStats&);                       \
  template Tensor<T> batchnorm_eval<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                       const Tensor<T>&, const Tensor<T>&, T);                 \
  template void batchnorm_train_backward<T>(const Tensor<T>&, const Tensor<T>&,               \
                                            const BatchNormStats&, const Tensor<T>&,           \
                                            Tensor<T>*, Tensor<T>*, Tensor<T>*);               \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T,   \
                                   Tensor<T>&, std::vector<T>&);                               \
  template void layer_norm_backward<T>(const Tensor<T>&, const std::vector<T>&,               \
                                       const Tensor<T>&, const Tensor<T>&, Tensor<T>*,         \
                                       Tensor<T>*, Tensor<T>*);                                \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);         \
  template void linear_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                   Tensor<T>*, Tensor<T>*, Tensor<T>*);                        \
  template Tensor<T> concat_channels<T>(const std::vector<const Tensor<T>*>&);                \
  template std::vector<Tensor<T>> split_channels<T>(const Tensor<T>&,                         \
                                                    const std::vector<std::size_t>&);          \
  template std::vector<T> softmax_row<T>(const T*, std::size_t);                              \
  template T softmax_cross_entropy<T>(const Tensor<T>&, const std::vector<int>&, Tensor<T>*); \
  template Tensor<T> patchify<T>(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> unpatchify<T>(const Tensor<T>&, const Shape&, std::size_t);

SFNET_INSTANTIATE_KERNELS(float)
SFNET_INSTANTIATE_KERNELS(double)

#undef SFNET_INSTANTIATE_KERNELS

}  // namespace sfnet::kernels

#include "sfnet/ops.hpp"

#include <memory>
#include <optional>
#include <stdexcept>

namespace sfnet::ops {

namespace {

std::uint64_t hash_indices(const std::vector<std::size_t>& idx) {
  std::uint64_t h = 1469598103934665603ULL ^ idx.size();
  for (std::size_t i : idx) h = (h ^ i) * 1099511628211ULL;
  return h;
}

template <typename T>
void add_into(Tensor<T>* dst, const Tensor<T>& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.numel(); ++i) (*dst)[i] += src[i];
}

template <typename T>
std::optional<std::size_t> index_of(const Var<T>* v) {
  return v ? std::optional<std::size_t>(v->index()) : std::nullopt;
}

template <typename T>
Tensor<T>* grad_or_null(Tape<T>& t, const std::optional<std::size_t>& i) {
  return i ? t.grad_buffer(*i) : nullptr;
}

// Offsets into b for each element of a under b's broadcast pattern.
std::vector<std::size_t> broadcast_offsets(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("broadcast rank mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] != a[i] && b[i] != 1) {
      throw std::invalid_argument("shape " + shape_str(b) + " does not broadcast to " +
                                  shape_str(a));
    }
  }
  const auto bs = row_major_strides(b);
  std::vector<std::size_t> eff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) eff[i] = b[i] == 1 ? 0 : bs[i];
  std::vector<std::size_t> out(shape_numel(a));
  std::vector<std::size_t> idx(a.size(), 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = off;
    for (std::size_t ax = a.size(); ax-- > 0;) {
      ++idx[ax];
      off += eff[ax];
      if (idx[ax] < a[ax]) break;
      off -= eff[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

template <typename T>
void tokens_to_grid(const T* tokens, const spectral::Grid3& g, std::size_t d, T* grid) {
  for (std::size_t ix = 0; ix < g.x; ++ix)
    for (std::size_t iy = 0; iy < g.y; ++iy)
      for (std::size_t iz = 0; iz < g.z; ++iz) {
        const std::size_t l = ix + g.x * (iy + g.y * iz);
        const std::size_t cell = (ix * g.y + iy) * g.z + iz;
        for (std::size_t c = 0; c < d; ++c) grid[c * g.volume() + cell] = tokens[l * d + c];
      }
}

template <typename T>
void grid_to_tokens(const T* grid, const spectral::Grid3& g, std::size_t d, T* tokens) {
  for (std::size_t ix = 0; ix < g.x; ++ix)
    for (std::size_t iy = 0; iy < g.y; ++iy)
      for (std::size_t iz = 0; iz < g.z; ++iz) {
        const std::size_t l = ix + g.x * (iy + g.y * iz);
        const std::size_t cell = (ix * g.y + iy) * g.z + iz;
        for (std::size_t c = 0; c < d; ++c) tokens[l * d + c] = grid[c * g.volume() + cell];
      }
}

}  // namespace

template <typename T>
Var<T> conv3d(Var<T> x, Var<T> w, const Var<T>* bias, const ConvParams& p) {
  Tensor<T> out = kernels::conv3d(x.value(), w.value(), bias ? &bias->value() : nullptr, p);
  std::vector<Var<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  const std::size_t xi = x.index(), wi = w.index();
  const auto bi = index_of(bias);
  return x.tape().push("conv3d", std::move(out), parents,
                       [xi, wi, bi, p](Tape<T>& t, const Tensor<T>& g) {
                         kernels::conv3d_backward(t.value(xi), t.value(wi), g, p,
                                                  t.grad_buffer(xi), t.grad_buffer(wi),
                                                  grad_or_null(t, bi));
                       });
}

template <typename T>
Var<T> conv1d_channels(Var<T> x, Var<T> kernel) {
  Tensor<T> out = kernels::conv1d_channels(x.value(), kernel.value());
  const std::size_t xi = x.index(), ki = kernel.index();
  return x.tape().push("conv1d_channels", std::move(out), {x, kernel},
                       [xi, ki](Tape<T>& t, const Tensor<T>& g) {
                         kernels::conv1d_channels_backward(t.value(xi), t.value(ki), g,
                                                           t.grad_buffer(xi), t.grad_buffer(ki));
                       });
}

template <typename T>
Var<T> maxpool3d(Var<T> x, std::size_t k, std::size_t stride, std::size_t padding) {
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  Tensor<T> out = kernels::maxpool3d(x.value(), k, stride, padding, argmax.get());
  if (x.tape().track_branches()) x.tape().mix_branch(hash_indices(*argmax));
  const std::size_t xi = x.index();
  return x.tape().push("maxpool3d", std::move(out), {x},
                       [xi, argmax](Tape<T>& t, const Tensor<T>& g) {
                         Tensor<T>* gx = t.grad_buffer(xi);
                         for (std::size_t o = 0; o < g.numel(); ++o) (*gx)[(*argmax)[o]] += g[o];
                       });
}

template <typename T>
Var<T> avgpool3d(Var<T> x, std::size_t k, std::size_t stride) {
  Tensor<T> out = kernels::avgpool3d(x.value(), k, stride);
  const std::size_t xi = x.index();
  const Shape in_shape = x.shape();
  return x.tape().push("avgpool3d", std::move(out), {x},
                       [xi, k, stride, in_shape](Tape<T>& t, const Tensor<T>& g) {
                         kernels::avgpool3d_backward(in_shape, k, stride, g, *t.grad_buffer(xi));
                       });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  Tensor<T> out = kernels::global_avg_pool(x.value());
  const std::size_t xi = x.index();
  const std::size_t v = spatial_size(x.value());
  return x.tape().push("global_avg_pool", std::move(out), {x},
                       [xi, v](Tape<T>& t, const Tensor<T>& g) {
                         Tensor<T>* gx = t.grad_buffer(xi);
                         const T inv = T{1} / static_cast<T>(v);
                         for (std::size_t bc = 0; bc < g.numel(); ++bc) {
                           const T gv = g[bc] * inv;
                           for (std::size_t i = 0; i < v; ++i) (*gx)[bc * v + i] += gv;
                         }
                       });
}

template <typename T>
Var<T> batchnorm3d(Var<T> x, Var<T> gamma, Var<T> beta, Parameter<T>& running_mean,
                   Parameter<T>& running_var, Mode mode, T eps, T momentum) {
  const std::size_t xi = x.index(), gi = gamma.index(), bi = beta.index();
  if (mode == Mode::kEval) {
    Tensor<T> out = kernels::batchnorm_eval(x.value(), gamma.value(), beta.value(),
                                            running_mean.value, running_var.value, eps);
    Tensor<T> rm = running_mean.value, rv = running_var.value;
    return x.tape().push(
        "batchnorm3d_eval", std::move(out), {x, gamma, beta},
        [xi, gi, bi, rm, rv, eps](Tape<T>& t, const Tensor<T>& g) {
          const Tensor<T>& xv = t.value(xi);
          const Tensor<T>& gm = t.value(gi);
          Tensor<T>* gx = t.grad_buffer(xi);
          Tensor<T>* gg = t.grad_buffer(gi);
          Tensor<T>* gb = t.grad_buffer(bi);
          const std::size_t n = xv.dim(0), c = xv.dim(1), v = spatial_size(xv);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T inv = T{1} / std::sqrt(rv[ch] + eps);
              const std::size_t off = (b * c + ch) * v;
              for (std::size_t i = 0; i < v; ++i) {
                if (gx) (*gx)[off + i] += g[off + i] * gm[ch] * inv;
                if (gg) (*gg)[ch] += g[off + i] * (xv[off + i] - rm[ch]) * inv;
                if (gb) (*gb)[ch] += g[off + i];
              }
            }
        });
  }
  auto xhat = std::make_shared<Tensor<T>>();
  auto stats = std::make_shared<kernels::BatchNormStats>();
  Tensor<T> out = kernels::batchnorm_train(x.value(), gamma.value(), beta.value(), eps, *xhat,
                                           *stats);
  for (std::size_t ch = 0; ch < stats->mean.size(); ++ch) {
    const double var = 1.0 / (stats->inv_std[ch] * stats->inv_std[ch]) - eps;
    running_mean.value[ch] =
        static_cast<T>((1.0 - momentum) * running_mean.value[ch] + momentum * stats->mean[ch]);
    running_var.value[ch] =
        static_cast<T>((1.0 - momentum) * running_var.value[ch] + momentum * var);
  }
  return x.tape().push("batchnorm3d", std::move(out), {x, gamma, beta},
                       [xi, gi, bi, xhat, stats](Tape<T>& t, const Tensor<T>& g) {
                         kernels::batchnorm_train_backward(*xhat, t.value(gi), *stats, g,
                                                           t.grad_buffer(xi), t.grad_buffer(gi),
                                                           t.grad_buffer(bi));
                       });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  auto xhat = std::make_shared<Tensor<T>>();
  auto inv = std::make_shared<std::vector<T>>();
  Tensor<T> out = kernels::layer_norm(x.value(), gamma.value(), beta.value(), eps, *xhat, *inv);
  const std::size_t xi = x.index(), gi = gamma.index(), bi = beta.index();
  return x.tape().push("layer_norm", std::move(out), {x, gamma, beta},
                       [xi, gi, bi, xhat, inv](Tape<T>& t, const Tensor<T>& g) {
                         kernels::layer_norm_backward(*xhat, *inv, t.value(gi), g,
                                                      t.grad_buffer(xi), t.grad_buffer(gi),
                                                      t.grad_buffer(bi));
                       });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = kernels::relu(xv[i]);
  if (x.tape().track_branches()) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < xv.numel(); ++i)
      if (xv[i] > T{0}) active.push_back(i);
    x.tape().mix_branch(hash_indices(active));
  }
  const std::size_t xi = x.index();
  return x.tape().push("relu", std::move(out), {x}, [xi](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv = t.value(xi);
    Tensor<T>* gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (xv[i] > T{0}) (*gx)[i] += g[i];
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = kernels::gelu(xv[i]);
  const std::size_t xi = x.index();
  return x.tape().push("gelu", std::move(out), {x}, [xi](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv = t.value(xi);
    Tensor<T>* gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * kernels::gelu_grad(xv[i]);
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = kernels::sigmoid(xv[i]);
  const std::size_t xi = x.index();
  const std::size_t oi = x.tape().size();  // index this node will receive
  return x.tape().push("sigmoid", std::move(out), {x}, [xi, oi](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(oi);
    Tensor<T>* gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * y[i] * (T{1} - y[i]);
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, const Var<T>* bias) {
  Tensor<T> out = kernels::linear(x.value(), w.value(), bias ? &bias->value() : nullptr);
  std::vector<Var<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  const std::size_t xi = x.index(), wi = w.index();
  const auto bi = index_of(bias);
  return x.tape().push("linear", std::move(out), parents,
                       [xi, wi, bi](Tape<T>& t, const Tensor<T>& g) {
                         kernels::linear_backward(t.value(xi), t.value(wi), g, t.grad_buffer(xi),
                                                  t.grad_buffer(wi), grad_or_null(t, bi));
                       });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels needs at least one input");
  std::vector<const Tensor<T>*> vals;
  std::vector<std::size_t> idx, sizes;
  for (const Var<T>& p : parts) {
    vals.push_back(&p.value());
    idx.push_back(p.index());
    sizes.push_back(p.shape()[1]);
  }
  Tensor<T> out = kernels::concat_channels(vals);
  return parts.front().tape().push(
      "concat_channels", std::move(out), parts, [idx, sizes](Tape<T>& t, const Tensor<T>& g) {
        std::vector<Tensor<T>> pieces = kernels::split_channels(g, sizes);
        for (std::size_t i = 0; i < idx.size(); ++i) add_into(t.grad_buffer(idx[i]), pieces[i]);
      });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().push("add", std::move(out), {a, b}, [ai, bi](Tape<T>& t, const Tensor<T>& g) {
    add_into(t.grad_buffer(ai), g);
    add_into(t.grad_buffer(bi), g);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto offs = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(a.shape(), b.shape()));
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[(*offs)[i]];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().push("mul", std::move(out), {a, b},
                       [ai, bi, offs](Tape<T>& t, const Tensor<T>& g) {
                         const Tensor<T>& av = t.value(ai);
                         const Tensor<T>& bv = t.value(bi);
                         Tensor<T>* ga = t.grad_buffer(ai);
                         Tensor<T>* gb = t.grad_buffer(bi);
                         for (std::size_t i = 0; i < g.numel(); ++i) {
                           const std::size_t j = (*offs)[i];
                           if (ga) (*ga)[i] += g[i] * bv[j];
                           if (gb) (*gb)[j] += g[i] * av[i];
                         }
                       });
}

template <typename T>
Var<T> scale(Var<T> x, Var<T> s) {
  if (s.value().numel() != 1) {
    throw std::invalid_argument("scale factor must have one element, got " +
                                shape_str(s.shape()));
  }
  const T sv = s.value()[0];
  Tensor<T> out = x.value();
  for (T& v : out.buffer()) v *= sv;
  const std::size_t xi = x.index(), si = s.index();
  return x.tape().push("scale", std::move(out), {x, s}, [xi, si](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv = t.value(xi);
    const T sv = t.value(si)[0];
    if (Tensor<T>* gx = t.grad_buffer(xi))
      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * sv;
    if (Tensor<T>* gs = t.grad_buffer(si)) {
      T acc = 0;
      for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * xv[i];
      (*gs)[0] += acc;
    }
  });
}

template <typename T>
Var<T> scale_const(Var<T> x, T s) {
  Tensor<T> out = x.value();
  for (T& v : out.buffer()) v *= s;
  const std::size_t xi = x.index();
  return x.tape().push("scale_const", std::move(out), {x}, [xi, s](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>* gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * s;
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  double acc = 0;
  for (T v : x.value().values()) acc += v;
  const std::size_t xi = x.index();
  return x.tape().push("sum", Tensor<T>({1}, static_cast<T>(acc)), {x},
                       [xi](Tape<T>& t, const Tensor<T>& g) {
                         Tensor<T>* gx = t.grad_buffer(xi);
                         for (T& v : gx->buffer()) v += g[0];
                       });
}

template <typename T>
Var<T> mean_tokens(Var<T> x) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw std::invalid_argument("mean_tokens expects [N,L,D], got " + shape_str(s));
  const std::size_t n = s[0], l = s[1], d = s[2];
  Tensor<T> out({n, d});
  const Tensor<T>& xv = x.value();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0;
      for (std::size_t i = 0; i < l; ++i) acc += xv[(b * l + i) * d + j];
      out[b * d + j] = static_cast<T>(acc / static_cast<double>(l));
    }
  const std::size_t xi = x.index();
  return x.tape().push("mean_tokens", std::move(out), {x},
                       [xi, n, l, d](Tape<T>& t, const Tensor<T>& g) {
                         Tensor<T>* gx = t.grad_buffer(xi);
                         const T inv = T{1} / static_cast<T>(l);
                         for (std::size_t b = 0; b < n; ++b)
                           for (std::size_t i = 0; i < l; ++i)
                             for (std::size_t j = 0; j < d; ++j)
                               (*gx)[(b * l + i) * d + j] += g[b * d + j] * inv;
                       });
}

template <typename T>
Var<T> patchify(Var<T> x, std::size_t patch) {
  Tensor<T> out = kernels::patchify(x.value(), patch);
  const std::size_t xi = x.index();
  const Shape in_shape = x.shape();
  return x.tape().push("patchify", std::move(out), {x},
                       [xi, in_shape, patch](Tape<T>& t, const Tensor<T>& g) {
                         add_into(t.grad_buffer(xi), kernels::unpatchify(g, in_shape, patch));
                       });
}

template <typename T>
Var<T> global_filter(Var<T> tokens, Var<T> filter_re, Var<T> filter_im,
                     const spectral::Grid3& grid) {
  const Shape& s = tokens.shape();
  if (s.size() != 3 || s[1] != grid.volume()) {
    throw std::invalid_argument("global_filter expects [N, " + std::to_string(grid.volume()) +
                                ", D] tokens, got " + shape_str(s));
  }
  const std::size_t n = s[0], l = s[1], d = s[2];
  const Shape fshape{d, grid.x, grid.y, grid.half_z()};
  if (filter_re.shape() != fshape || filter_im.shape() != fshape) {
    throw std::invalid_argument("global filter shape " + shape_str(filter_re.shape()) +
                                " does not match token half-spectrum " + shape_str(fshape));
  }
  const Tensor<T>& kr = filter_re.value();
  const Tensor<T>& ki = filter_im.value();
  auto spectra = std::make_shared<std::vector<spectral::SpectrumHalf<T>>>();
  spectra->reserve(n);
  Tensor<T> out(s);
  Tensor<T> grid_buf({d, grid.x, grid.y, grid.z});
  for (std::size_t b = 0; b < n; ++b) {
    tokens_to_grid(tokens.value().data() + b * l * d, grid, d, grid_buf.data());
    spectral::SpectrumHalf<T> x = spectral::fft3(grid_buf);
    spectral::SpectrumHalf<T> y = x;
    for (std::size_t i = 0; i < y.coeffs.numel(); ++i) {
      const T xr = x.coeffs.re[i], xi = x.coeffs.im[i];
      y.coeffs.re[i] = kr[i] * xr - ki[i] * xi;
      y.coeffs.im[i] = kr[i] * xi + ki[i] * xr;
    }
    const Tensor<T> back = spectral::ifft3(y);
    grid_to_tokens(back.data(), grid, d, out.data() + b * l * d);
    spectra->push_back(std::move(x));
  }
  const std::size_t ti = tokens.index(), ri = filter_re.index(), ii = filter_im.index();
  return tokens.tape().push(
      "global_filter", std::move(out), {tokens, filter_re, filter_im},
      [ti, ri, ii, grid, n, l, d, spectra](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& kr = t.value(ri);
        const Tensor<T>& ki = t.value(ii);
        Tensor<T>* gtok = t.grad_buffer(ti);
        Tensor<T>* gkr = t.grad_buffer(ri);
        Tensor<T>* gki = t.grad_buffer(ii);
        Tensor<T> gbuf({d, grid.x, grid.y, grid.z});
        Tensor<T> tok_grad({l, d});
        for (std::size_t b = 0; b < n; ++b) {
          tokens_to_grid(g.data() + b * l * d, grid, d, gbuf.data());
          const spectral::SpectrumHalf<T> gy = spectral::ifft3_backward(gbuf);
          const spectral::SpectrumHalf<T>& x = (*spectra)[b];
          spectral::SpectrumHalf<T> gx = gy;
          for (std::size_t i = 0; i < gy.coeffs.numel(); ++i) {
            const T gr = gy.coeffs.re[i], gi = gy.coeffs.im[i];
            // conj(X) * G for the filter, conj(K) * G for the spectrum
            if (gkr) (*gkr)[i] += x.coeffs.re[i] * gr + x.coeffs.im[i] * gi;
            if (gki) (*gki)[i] += x.coeffs.re[i] * gi - x.coeffs.im[i] * gr;
            gx.coeffs.re[i] = kr[i] * gr + ki[i] * gi;
            gx.coeffs.im[i] = kr[i] * gi - ki[i] * gr;
          }
          if (gtok) {
            const Tensor<T> back = spectral::fft3_backward(gx);
            grid_to_tokens(back.data(), grid, d, tok_grad.data());
            for (std::size_t k = 0; k < l * d; ++k) (*gtok)[b * l * d + k] += tok_grad[k];
          }
        }
      });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels) {
  auto grad = std::make_shared<Tensor<T>>(logits.shape());
  const T loss = kernels::softmax_cross_entropy(logits.value(), labels, grad.get());
  const std::size_t li = logits.index();
  return logits.tape().push("softmax_cross_entropy", Tensor<T>({1}, loss), {logits},
                            [li, grad](Tape<T>& t, const Tensor<T>& g) {
                              Tensor<T>* gl = t.grad_buffer(li);
                              for (std::size_t i = 0; i < grad->numel(); ++i)
                                (*gl)[i] += g[0] * (*grad)[i];
                            });
}

#define SFNET_INSTANTIATE_OPS(T)                                                              \
  template Var<T> conv3d<T>(Var<T>, Var<T>, const Var<T>*, const ConvParams&);                \
  template Var<T> conv1d_channels<T>(Var<T>, Var<T>);                                         \
  template Var<T> maxpool3d<T>(Var<T>, std::size_t, std::size_t, std::size_t);               \
  template Var<T> avgpool3d<T>(Var<T>, std::size_t, std::size_t);                             \
  template Var<T> global_avg_pool<T>(Var<T>);                                                 \
  template Var<T> batchnorm3d<T>(Var<T>, Var<T>, Var<T>, Parameter<T>&, Parameter<T>&, Mode,  \
                                 T, T);                                                        \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                   \
  template Var<T> relu<T>(Var<T>);                                                            \
  template Var<T> gelu<T>(Var<T>);                                                            \
  template Var<T> sigmoid<T>(Var<T>);                                                         \
  template Var<T> linear<T>(Var<T>, Var<T>, const Var<T>*);                                   \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                             \
  template Var<T> add<T>(Var<T>, Var<T>);                                                     \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                     \
  template Var<T> scale<T>(Var<T>, Var<T>);                                                   \
  template Var<T> scale_const<T>(Var<T>, T);                                                  \
  template Var<T> sum<T>(Var<T>);                                                             \
  template Var<T> mean_tokens<T>(Var<T>);                                                     \
  template Var<T> patchify<T>(Var<T>, std::size_t);                                           \
  template Var<T> global_filter<T>(Var<T>, Var<T>, Var<T>, const spectral::Grid3&);           \
  template Var<T> softmax_cross_entropy<T>(Var<T>, const std::vector<int>&);

SFNET_INSTANTIATE_OPS(float)
SFNET_INSTANTIATE_OPS(double)

#undef SFNET_INSTANTIATE_OPS

}  // namespace sfnet::ops

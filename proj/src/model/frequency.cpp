#include "sfnet/model/frequency.hpp"

namespace sfnet::model {

template <typename T>
PatchEmbed<T>::PatchEmbed(const std::string& name, std::size_t channels, std::size_t p, Rng& rng)
    : patch(p),
      proj(name + ".proj", channels * p * p * p, channels * p * p * p, true, rng) {}

template <typename T>
Var<T> PatchEmbed<T>::forward(Tape<T>& tape, Var<T> x) {
  return proj.forward(tape, ops::patchify(x, patch));
}

template <typename T>
void PatchEmbed<T>::visit(const ParamFn<T>& fn) {
  proj.visit(fn);
}

template <typename T>
LowRankMLP<T>::LowRankMLP(const std::string& name, std::size_t width, std::size_t hidden,
                          std::size_t rank1, std::size_t rank2, Rng& rng)
    : w1(name + ".w1", width, rank1, false, rng),
      w2(name + ".w2", rank1, hidden, true, rng),
      w3(name + ".w3", hidden, rank2, false, rng),
      w4(name + ".w4", rank2, width, true, rng) {}

template <typename T>
Var<T> LowRankMLP<T>::forward(Tape<T>& tape, Var<T> x) {
  Var<T> h = ops::gelu(w2.forward(tape, w1.forward(tape, x)));
  return ops::gelu(w4.forward(tape, w3.forward(tape, h)));
}

template <typename T>
void LowRankMLP<T>::visit(const ParamFn<T>& fn) {
  w1.visit(fn);
  w2.visit(fn);
  w3.visit(fn);
  w4.visit(fn);
}

std::size_t low_rank_mlp_params(std::size_t width, std::size_t hidden, std::size_t rank1,
                                std::size_t rank2) {
  return width * rank1 + rank1 * hidden + hidden + hidden * rank2 + rank2 * width + width;
}

std::size_t full_rank_mlp_params(std::size_t width, std::size_t hidden) {
  return width * hidden + hidden + hidden * width + width;
}

template <typename T>
GlobalFilterBlock<T>::GlobalFilterBlock(const std::string& name, std::size_t width,
                                        const spectral::Grid3& g, std::size_t hidden,
                                        std::size_t rank1, std::size_t rank2, bool norm,
                                        Rng& rng)
    : grid(g), use_norm(norm), mlp(name + ".mlp", width, hidden, rank1, rank2, rng) {
  if (use_norm) {
    norm1 = LayerNorm<T>(name + ".norm1", width);
    norm2 = LayerNorm<T>(name + ".norm2", width);
  }
  const Shape fshape{width, g.x, g.y, g.half_z()};
  std::normal_distribution<double> noise(0.0, 0.02);
  Tensor<T> re(fshape), im(fshape);
  for (std::size_t i = 0; i < re.numel(); ++i) {
    re[i] = static_cast<T>(1.0 + noise(rng));
    im[i] = static_cast<T>(noise(rng));
  }
  filter_real = Parameter<T>(name + ".filter_real", std::move(re));
  filter_imag = Parameter<T>(name + ".filter_imag", std::move(im));
}

template <typename T>
Var<T> GlobalFilterBlock<T>::spectral_path(Tape<T>& tape, Var<T> tokens) {
  return ops::global_filter(tokens, tape.parameter(filter_real), tape.parameter(filter_imag),
                            grid);
}

template <typename T>
Var<T> GlobalFilterBlock<T>::forward(Tape<T>& tape, Var<T> tokens) {
  Var<T> h = use_norm ? norm1.forward(tape, tokens) : tokens;
  Var<T> y = ops::add(tokens, spectral_path(tape, h));
  Var<T> z = use_norm ? norm2.forward(tape, y) : y;
  return ops::add(y, mlp.forward(tape, z));
}

template <typename T>
void GlobalFilterBlock<T>::visit(const ParamFn<T>& fn) {
  if (use_norm) norm1.visit(fn);
  fn(filter_real);
  fn(filter_imag);
  if (use_norm) norm2.visit(fn);
  mlp.visit(fn);
}

template class PatchEmbed<float>;
template class PatchEmbed<double>;
template class LowRankMLP<float>;
template class LowRankMLP<double>;
template class GlobalFilterBlock<float>;
template class GlobalFilterBlock<double>;

}  // namespace sfnet::model

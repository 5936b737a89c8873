#include "sfnet/fragments.hpp"

#include <random>

#include "sfnet/model/sfnet.hpp"

namespace sfnet {

namespace {

using model::Rng;
using ops::Mode;

struct Builder {
  Fragment f;
  Rng rng;

  Builder(std::string name, std::uint64_t seed) : rng(seed) { f.name = std::move(name); }

  Tensor<double> randn(const Shape& s, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Tensor<double> t(s);
    for (double& v : t.buffer()) v = nd(rng);
    return t;
  }

  Parameter<double>& param(const std::string& name, Tensor<double> value) {
    auto p = std::make_shared<Parameter<double>>(name, std::move(value));
    f.storage.push_back(p);
    f.params.push_back(p.get());
    return *p;
  }

  template <typename M>
  std::shared_ptr<M> own(std::shared_ptr<M> m) {
    f.storage.push_back(m);
    m->visit([&](Parameter<double>& p) { f.params.push_back(&p); });
    return m;
  }

  template <typename Fn>
  Fragment finish(const Shape& out_shape, Fn&& forward) {
    auto r = std::make_shared<Tensor<double>>(randn(out_shape));
    f.storage.push_back(r);
    f.loss = [this_r = r, fwd = std::forward<Fn>(forward), name = f.name](Tape<double>& t) {
      Var<double> out = fwd(t);
      if (this_r->shape() != out.shape()) throw std::logic_error("weight shape mismatch in fragment " + name);
      return ops::sum(ops::mul(out, t.constant(*this_r)));
    };
    return std::move(f);
  }
};

// Inputs are kept away from ReLU / max-pool kinks only by chance; the checker
// skips coordinates whose perturbation switches a branch.

Fragment build(const std::string& name, std::uint64_t seed) {
  Builder b(name, seed);
  const Shape vol{2, 3, 5, 4, 6};

  if (name == "linear") {
    auto& x = b.param("input", b.randn({2, 3, 5}));
    auto m = b.own(std::make_shared<model::Linear<double>>("linear", 5, 4, true, b.rng));
    for (double& v : m->bias.value.buffer()) v = b.randn({1})[0];
    return b.finish({2, 3, 4}, [&x, m](Tape<double>& t) { return m->forward(t, t.parameter(x)); });
  }
  if (name == "conv3d" || name == "conv3d-strided" || name == "conv3d-dilated") {
    const kernels::ConvParams p = name == "conv3d"           ? kernels::ConvParams{1, 1, 1}
                                  : name == "conv3d-strided" ? kernels::ConvParams{2, 1, 1}
                                                             : kernels::ConvParams{1, 2, 2};
    auto& x = b.param("input", b.randn(vol));
    auto m = b.own(std::make_shared<model::Conv3d<double>>("conv", 3, 4, 3, p, b.rng));
    for (double& v : m->bias.value.buffer()) v = b.randn({1})[0];
    Shape out{2, 4};
    for (std::size_t a = 2; a < 5; ++a) out.push_back(kernels::conv_out_extent(vol[a], 3, p));
    return b.finish(out, [&x, m](Tape<double>& t) { return m->forward(t, t.parameter(x)); });
  }
  if (name == "conv1d") {
    auto& x = b.param("input", b.randn({2, 7, 1, 1, 1}));
    auto& k = b.param("kernel", b.randn({3}));
    return b.finish({2, 7, 1, 1, 1}, [&x, &k](Tape<double>& t) {
      return ops::conv1d_channels(t.parameter(x), t.parameter(k));
    });
  }
  if (name == "maxpool") {
    auto& x = b.param("input", b.randn(vol));
    return b.finish({2, 3, 3, 2, 3}, [&x](Tape<double>& t) { return ops::maxpool3d(t.parameter(x), 3, 2, 1); });
  }
  if (name == "avgpool") {
    auto& x = b.param("input", b.randn(vol));
    return b.finish({2, 3, 2, 2, 3}, [&x](Tape<double>& t) { return ops::avgpool3d(t.parameter(x), 2, 2); });
  }
  if (name == "global-avg-pool") {
    auto& x = b.param("input", b.randn(vol));
    return b.finish({2, 3, 1, 1, 1}, [&x](Tape<double>& t) { return ops::global_avg_pool(t.parameter(x)); });
  }
  if (name == "batchnorm-train" || name == "batchnorm-eval") {
    const Mode mode = name == "batchnorm-train" ? Mode::kTrain : Mode::kEval;
    auto& x = b.param("input", b.randn(vol, 2.0));
    auto m = b.own(std::make_shared<model::BatchNorm3d<double>>("bn", 3));
    m->gamma.value = b.randn({3});
    m->beta.value = b.randn({3});
    m->running_mean.value = b.randn({3});
    for (double& v : m->running_var.value.buffer()) v = 0.5 + std::abs(b.randn({1})[0]);
    return b.finish(vol, [&x, m, mode](Tape<double>& t) { return m->forward(t, t.parameter(x), mode); });
  }
  if (name == "layernorm") {
    auto& x = b.param("input", b.randn({2, 3, 6}, 2.0));
    auto m = b.own(std::make_shared<model::LayerNorm<double>>("ln", 6));
    m->gamma.value = b.randn({6});
    m->beta.value = b.randn({6});
    return b.finish({2, 3, 6}, [&x, m](Tape<double>& t) { return m->forward(t, t.parameter(x)); });
  }
  if (name == "relu" || name == "gelu" || name == "sigmoid") {
    auto& x = b.param("input", b.randn({4, 5}, 2.0));
    return b.finish({4, 5}, [&x, name](Tape<double>& t) {
      Var<double> v = t.parameter(x);
      return name == "relu" ? ops::relu(v) : name == "gelu" ? ops::gelu(v) : ops::sigmoid(v);
    });
  }
  if (name == "concat") {
    auto& a = b.param("a", b.randn({2, 2, 3, 2, 2}));
    auto& c = b.param("b", b.randn({2, 3, 3, 2, 2}));
    return b.finish({2, 5, 3, 2, 2}, [&a, &c](Tape<double>& t) {
      return ops::concat_channels<double>({t.parameter(a), t.parameter(c)});
    });
  }
  if (name == "mul-broadcast") {
    auto& x = b.param("input", b.randn(vol));
    auto& ch = b.param("channel_map", b.randn({2, 3, 1, 1, 1}));
    auto& sp = b.param("spatial_map", b.randn({2, 1, 5, 4, 6}));
    return b.finish(vol, [&x, &ch, &sp](Tape<double>& t) {
      Var<double> v = t.parameter(x);
      return ops::add(ops::mul(v, t.parameter(ch)), ops::mul(v, t.parameter(sp)));
    });
  }
  if (name == "scale") {
    auto& x = b.param("input", b.randn({3, 4}));
    auto& s = b.param("lambda", b.randn({1}));
    return b.finish({3, 4}, [&x, &s](Tape<double>& t) { return ops::scale(t.parameter(x), t.parameter(s)); });
  }
  if (name == "patchify") {
    auto& x = b.param("input", b.randn({2, 2, 4, 4, 2}));
    return b.finish({2, 4, 16}, [&x](Tape<double>& t) { return ops::patchify(t.parameter(x), 2); });
  }
  if (name == "mean-tokens") {
    auto& x = b.param("input", b.randn({2, 5, 3}));
    return b.finish({2, 3}, [&x](Tape<double>& t) { return ops::mean_tokens(t.parameter(x)); });
  }
  if (name == "global-filter") {
    const spectral::Grid3 g{4, 2, 4};
    auto& x = b.param("input", b.randn({2, g.volume(), 3}));
    auto& kr = b.param("filter_real", b.randn({3, g.x, g.y, g.half_z()}));
    auto& ki = b.param("filter_imag", b.randn({3, g.x, g.y, g.half_z()}));
    return b.finish({2, g.volume(), 3}, [&x, &kr, &ki, g](Tape<double>& t) {
      return ops::global_filter(t.parameter(x), t.parameter(kr), t.parameter(ki), g);
    });
  }
  if (name == "softmax-ce") {
    auto& x = b.param("logits", b.randn({4, 2}, 2.0));
    Fragment f = std::move(b.f);
    f.loss = [&x](Tape<double>& t) { return ops::softmax_cross_entropy(t.parameter(x), {0, 1, 1, 0}); };
    return f;
  }
  if (name == "attention") {
    auto& x = b.param("input", b.randn({2, 4, 4, 4, 4}));
    auto m = b.own(std::make_shared<model::AttentionModule<double>>("attention", 4, 1, true, b.rng));
    for (auto& l : m->lambda) l.value = b.randn({1});
    return b.finish({2, 4, 4, 4, 4}, [&x, m](Tape<double>& t) { return m->forward(t, t.parameter(x), Mode::kTrain); });
  }
  if (name == "dense-layer") {
    auto& x = b.param("input", b.randn({2, 6, 4, 4, 4}));
    auto m = b.own(std::make_shared<model::DenseLayer<double>>("layer", 6, 2, 2, 1, true, true, b.rng));
    return b.finish({2, 2, 4, 4, 4}, [&x, m](Tape<double>& t) { return m->forward(t, t.parameter(x), Mode::kTrain); });
  }
  if (name == "transition") {
    auto& x = b.param("input", b.randn({2, 6, 4, 4, 4}));
    auto m = b.own(std::make_shared<model::Transition<double>>("transition", 6, 0.5, b.rng));
    return b.finish({2, 3, 2, 2, 2}, [&x, m](Tape<double>& t) { return m->forward(t, t.parameter(x), Mode::kTrain); });
  }
  if (name == "lowrank-mlp") {
    auto& x = b.param("input", b.randn({2, 4, 6}));
    auto m = b.own(std::make_shared<model::LowRankMLP<double>>("mlp", 6, 10, 3, 2, b.rng));
    for (double& v : m->w2.bias.value.buffer()) v = 0.1 * b.randn({1})[0];
    for (double& v : m->w4.bias.value.buffer()) v = 0.1 * b.randn({1})[0];
    return b.finish({2, 4, 6}, [&x, m](Tape<double>& t) { return m->forward(t, t.parameter(x)); });
  }
  if (name == "freq-block") {
    const spectral::Grid3 g{2, 4, 2};
    auto& x = b.param("input", b.randn({2, g.volume(), 6}));
    auto m = b.own(std::make_shared<model::GlobalFilterBlock<double>>("freq", 6, g, 10, 3, 3, true, b.rng));
    return b.finish({2, g.volume(), 6}, [&x, m](Tape<double>& t) { return m->forward(t, t.parameter(x)); });
  }
  if (name == "composite") {
    auto& x = b.param("input", b.randn({2, 2, 6, 6, 6}));
    auto conv = b.own(std::make_shared<model::Conv3d<double>>("conv", 2, 3, 3, kernels::ConvParams{1, 1, 1}, b.rng));
    auto bn = b.own(std::make_shared<model::BatchNorm3d<double>>("bn", 3));
    auto lin = b.own(std::make_shared<model::Linear<double>>("linear", 81, 2, true, b.rng));
    Fragment f = std::move(b.f);
    f.loss = [&x, conv, bn, lin](Tape<double>& t) {
      Var<double> h = ops::relu(bn->forward(t, conv->forward(t, t.parameter(x)), Mode::kTrain));
      h = ops::maxpool3d(h, 2, 2, 0);
      Var<double> tokens = ops::patchify(h, 3);  // [2, 1, 81]
      Var<double> logits = ops::mean_tokens(lin->forward(t, tokens));
      return ops::softmax_cross_entropy(logits, {0, 1});
    };
    return f;
  }
  if (name == "sfnet-tiny") {
    auto net = b.own(std::make_shared<model::SFNet<double>>(model::SFNetConfig::tiny(), seed));
    auto x = std::make_shared<Tensor<double>>(b.randn({1, 1, 32, 32, 32}));
    Fragment f = std::move(b.f);
    f.storage.push_back(x);
    f.loss = [net, x](Tape<double>& t) {
      return ops::softmax_cross_entropy(net->forward(t, t.constant(*x), Mode::kTrain), {1});
    };
    return f;
  }
  throw std::invalid_argument("unknown fragment '" + name + "'");
}

}  // namespace

const std::vector<std::string>& fragment_names() {
  static const std::vector<std::string> names{
      "linear",        "conv3d",      "conv3d-strided", "conv3d-dilated", "conv1d",
      "maxpool",       "avgpool",     "global-avg-pool", "batchnorm-train", "batchnorm-eval",
      "layernorm",     "relu",        "gelu",           "sigmoid",        "concat",
      "mul-broadcast", "scale",       "patchify",       "mean-tokens",    "global-filter",
      "softmax-ce",    "attention",   "dense-layer",    "transition",     "lowrank-mlp",
      "freq-block",    "composite",   "sfnet-tiny"};
  return names;
}

std::vector<std::string> layer_fragment_names() {
  std::vector<std::string> out;
  for (const auto& n : fragment_names())
    if (n != "sfnet-tiny") out.push_back(n);
  return out;
}

Fragment make_fragment(const std::string& name, std::uint64_t seed) { return build(name, seed); }

GradCheckReport check_fragment(const std::string& name, std::uint64_t seed, const GradCheckOptions& options) {
  Fragment f = make_fragment(name, seed);
  GradCheckOptions o = options;
  o.seed = seed;
  return grad_check(f.params, f.loss, o);
}

}  // namespace sfnet

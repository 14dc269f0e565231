#pragma once

#include <string>
#include <vector>

#include "fsvt/layers.hpp"

namespace fsvt {

struct GeneratorConfig {
  std::vector<int> widths{16, 32, 64, 128};  // one per resolution, finest first

  int depth() const { return static_cast<int>(widths.size()); }

  void validate() const {
    require(!widths.empty(), "invalid_config", "generator needs at least one level");
    for (int w : widths) require(w >= 1, "invalid_config", "generator widths must be positive");
  }
};

template <class T = float>
struct ConvPairParams {
  ConvParams<T> a, b;

  template <class Rng>
  static ConvPairParams init(int in, int out, Rng& rng) {
    return {ConvParams<T>::init(in, out, 3, rng), ConvParams<T>::init(out, out, 3, rng)};
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    a.for_each_param(prefix + "a.", f);
    b.for_each_param(prefix + "b.", f);
  }
};

template <class T, class Bind>
Var<T> apply(ConvPairParams<T>& p, Var<T> x, Bind&& bind) {
  return leaky_relu(apply(p.b, leaky_relu(apply(p.a, x, bind)), bind));
}

// U-Net over [g_hat, p]: encoder level i feeds decoder level i through a skip
// concatenation; the deepest encoder level is the bottleneck.
template <class T = float>
struct GeneratorParams {
  std::vector<ConvPairParams<T>> down;  // depth entries
  std::vector<ConvPairParams<T>> up;    // depth - 1 entries, up[i] produces level i
  ConvParams<T> head;

  int depth() const { return static_cast<int>(down.size()); }
  int in_channels() const { return down.front().a.in_channels(); }

  template <class Rng>
  static GeneratorParams init(int in_channels, const GeneratorConfig& cfg, Rng& rng) {
    cfg.validate();
    GeneratorParams p;
    int prev = in_channels;
    for (int w : cfg.widths) {
      p.down.push_back(ConvPairParams<T>::init(prev, w, rng));
      prev = w;
    }
    for (int i = 0; i + 1 < cfg.depth(); ++i)
      p.up.push_back(ConvPairParams<T>::init(cfg.widths[i] + cfg.widths[i + 1], cfg.widths[i], rng));
    p.head = ConvParams<T>::init(cfg.widths.front(), 3, 1, rng, 0.5);
    return p;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < down.size(); ++i) down[i].for_each_param(prefix + "down" + std::to_string(i) + ".", f);
    for (std::size_t i = 0; i < up.size(); ++i) up[i].for_each_param(prefix + "up" + std::to_string(i) + ".", f);
    head.for_each_param(prefix + "head.", f);
  }
};

// t = G([g_hat, p]), bounded to [-1, 1] by a tanh head.
template <class T, class Bind>
Var<T> generate(Var<T> g_hat, Var<T> p, GeneratorParams<T>& params, Bind&& bind) {
  const Tensor<T>&gv = g_hat.value(), &pv = p.value();
  require(gv.rank() == 3 && pv.rank() == 3 && gv.height() == pv.height() && gv.width() == pv.width(),
          "shape_mismatch", "generate: warped garment " + gv.shape().str() + " vs person " + pv.shape().str());
  const int step = 1 << (params.depth() - 1);
  require(gv.height() % step == 0 && gv.width() % step == 0, "invalid_resolution",
          "generate: resolution must be divisible by " + std::to_string(step));
  Var<T> x = concat(g_hat, p);
  require(x.value().channels() == params.in_channels(), "channel_mismatch",
          "generate: expects " + std::to_string(params.in_channels()) + " input channels in total");

  std::vector<Var<T>> skips;
  Var<T> h = x;
  for (int i = 0; i < params.depth(); ++i) {
    if (i > 0) h = avg_pool2(h);
    h = apply(params.down[i], h, bind);
    skips.push_back(h);
  }
  for (int i = params.depth() - 2; i >= 0; --i) {
    const Tensor<T>& s = skips[i].value();
    h = resize_bilinear(h, s.height(), s.width());
    h = apply(params.up[i], concat(skips[i], h), bind);
  }
  return tanh(apply(params.head, h, bind));
}

}  // namespace fsvt

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fsvt/autograd.hpp"
#include "fsvt/ops.hpp"

namespace fsvt {

template <class T = float>
struct ConvParams {
  Parameter<T> weight;  // (out, in, k, k)
  Parameter<T> bias;    // (out)

  int out_channels() const { return weight.value.dim(0); }
  int in_channels() const { return weight.value.dim(1); }

  // He-normal for a leaky-ReLU(0.2) successor; gain < 1 shrinks the draw,
  // gain == 0 gives an all-zero layer.
  template <class Rng>
  static ConvParams init(int in, int out, int k, Rng& rng, double gain = 1.0) {
    require(k % 2 == 1, "invalid_argument", "conv kernel size must be odd");
    ConvParams p;
    const double std_w = gain * std::sqrt(2.0 / (1.04 * in * k * k));
    p.weight = Parameter<T>(gain == 0 ? Tensor<T>(Shape{out, in, k, k})
                                      : random_normal<T>(Shape{out, in, k, k}, rng, static_cast<T>(std_w)));
    p.bias = Parameter<T>(Tensor<T>(Shape{out}));
    return p;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + "w", weight);
    f(prefix + "b", bias);
  }
};

template <class T, class Bind>
Var<T> apply(ConvParams<T>& p, Var<T> x, Bind&& bind) {
  return conv2d(x, bind(p.weight), bind(p.bias));
}

template <class T = float>
struct LinearParams {
  Parameter<T> weight;  // (out, in)
  Parameter<T> bias;    // (out)

  int out_features() const { return weight.value.dim(0); }
  int in_features() const { return weight.value.dim(1); }

  template <class Rng>
  static LinearParams init(int in, int out, Rng& rng) {
    LinearParams p;
    p.weight = Parameter<T>(random_normal<T>(Shape{out, in}, rng, static_cast<T>(1.0 / std::sqrt(in))));
    p.bias = Parameter<T>(Tensor<T>(Shape{out}));
    return p;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + "w", weight);
    f(prefix + "b", bias);
  }
};

template <class T, class Bind>
Var<T> apply(LinearParams<T>& p, Var<T> x, Bind&& bind) {
  return linear(x, bind(p.weight), bind(p.bias));
}

// out = lrelu(conv_b(lrelu(conv_a(x))) + skip(x)); skip is a 1x1 projection
// when the channel count changes, the identity otherwise.
template <class T = float>
struct ResBlockParams {
  ConvParams<T> conv_a, conv_b;
  ConvParams<T> proj;
  bool has_proj = false;

  template <class Rng>
  static ResBlockParams init(int in, int out, Rng& rng) {
    ResBlockParams p;
    p.conv_a = ConvParams<T>::init(in, out, 3, rng);
    // Keeps the residual branch small at init so deep stacks stay well scaled.
    p.conv_b = ConvParams<T>::init(out, out, 3, rng, 0.5);
    p.has_proj = in != out;
    if (p.has_proj) p.proj = ConvParams<T>::init(in, out, 1, rng, std::sqrt(0.5 * 1.04));
    return p;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    conv_a.for_each_param(prefix + "a.", f);
    conv_b.for_each_param(prefix + "b.", f);
    if (has_proj) proj.for_each_param(prefix + "proj.", f);
  }
};

template <class T, class Bind>
Var<T> apply(ResBlockParams<T>& p, Var<T> x, Bind&& bind) {
  Var<T> h = leaky_relu(apply(p.conv_a, x, bind));
  h = apply(p.conv_b, h, bind);
  Var<T> skip = p.has_proj ? apply(p.proj, x, bind) : x;
  return leaky_relu(add(h, skip));
}

// Flat (name, parameter) listing in a stable order.
template <class T>
using ParamList = std::vector<std::pair<std::string, Parameter<T>*>>;

template <class T, class Module>
ParamList<T> collect_params(Module& m, const std::string& prefix = "") {
  ParamList<T> out;
  m.for_each_param(prefix, [&](const std::string& name, Parameter<T>& p) { out.emplace_back(name, &p); });
  return out;
}

template <class T>
std::size_t count_scalars(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += p->value.size();
  return n;
}

}  // namespace fsvt

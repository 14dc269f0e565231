#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fsvt/encoders.hpp"
#include "fsvt/flow_estimator.hpp"
#include "fsvt/layers.hpp"

namespace fsvt {

struct LossWeights {
  double lambda_p = 1.0;
  double lambda_g = 1.0;
  double lambda_r = 0.01;
  double lambda_d = 0.1;

  void validate() const {
    require(lambda_p >= 0 && lambda_g >= 0 && lambda_r >= 0 && lambda_d >= 0, "invalid_weights",
            "loss weights must be nonnegative");
  }
};

// Frozen multi-level feature extractor for the perceptual loss. Level i is
// lrelu(conv(x)) on a 2^i-downsampled input; weights come from a fixed seed
// unless replaced through for_each_param.
template <class T = float>
struct FeatureNet {
  std::vector<ConvParams<T>> levels;

  static FeatureNet random(std::uint64_t seed, const std::vector<int>& widths = {16, 32, 64, 64}, int in = 3) {
    std::mt19937_64 rng(derive_seed(seed, 0xfea7));
    FeatureNet net;
    int prev = in;
    for (int w : widths) {
      net.levels.push_back(ConvParams<T>::init(prev, w, 3, rng));
      prev = w;
    }
    return net;
  }

  int size() const { return static_cast<int>(levels.size()); }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i].for_each_param(prefix + "phi" + std::to_string(i + 1) + ".", f);
  }

  std::vector<Var<T>> features(Var<T> x) {
    Binder<T> frozen = Binder<T>::frozen(*x.tape());
    std::vector<Var<T>> out;
    Var<T> h = x;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (i > 0) h = avg_pool2(h);
      h = leaky_relu(apply(levels[i], h, frozen));
      out.push_back(h);
    }
    return out;
  }
};

// L_p = sum_i mean|phi_i(t) - phi_i(p_gt)|.
template <class T>
Var<T> perceptual_loss(Var<T> t, Var<T> p_gt, FeatureNet<T>& phi) {
  require(t.shape() == p_gt.shape(), "shape_mismatch",
          "perceptual_loss: " + t.shape().str() + " vs " + p_gt.shape().str());
  const auto ft = phi.features(t);
  const auto fg = phi.features(p_gt);
  Var<T> total = mean_abs(sub(ft[0], fg[0]));
  for (std::size_t i = 1; i < ft.size(); ++i) total = add(total, mean_abs(sub(ft[i], fg[i])));
  return total;
}

// L_g = mean|g_hat - m_g * p_gt|, mask broadcast over channels.
template <class T>
Var<T> garment_loss(Var<T> g_hat, const Tensor<T>& mask, const Tensor<T>& p_gt) {
  const Tensor<T>& gv = g_hat.value();
  require(gv.shape() == p_gt.shape(), "shape_mismatch",
          "garment_loss: " + gv.shape().str() + " vs " + p_gt.shape().str());
  require(mask.rank() == 3 && mask.channels() == 1 && mask.height() == gv.height() && mask.width() == gv.width(),
          "shape_mismatch", "garment_loss: mask " + mask.shape().str() + " does not match " + gv.shape().str());
  for (T v : mask.values()) require(v == T(0) || v == T(1), "non_binary_mask", "garment_loss: mask must be 0/1");
  Tensor<T> target(p_gt.shape());
  const std::size_t plane = static_cast<std::size_t>(gv.height()) * gv.width();
  for (int c = 0; c < gv.channels(); ++c)
    for (std::size_t i = 0; i < plane; ++i) target[c * plane + i] = mask[i] * p_gt[c * plane + i];
  return mean_abs(sub(g_hat, g_hat.tape()->constant(std::move(target))));
}

// L_R = sum over cascade blocks of the charbonnier smoothness of f_i.
template <class T>
Var<T> smoothness_loss(const FlowCascade<T>& cascade, CharbonnierParams<T> cp = {}) {
  require(cascade.size() > 0, "empty_cascade", "smoothness_loss: cascade is empty");
  Var<T> total = charbonnier_smoothness(cascade.flows[0], cp);
  for (int i = 1; i < cascade.size(); ++i) total = add(total, charbonnier_smoothness(cascade.flows[i], cp));
  return total;
}

// L_D = sum_i mean|p_i^PB - p_i|. Teacher features enter as constants.
template <class T>
Var<T> distill_loss(const std::vector<Tensor<T>>& teacher, const FeaturePyramid<T>& student) {
  require(static_cast<int>(teacher.size()) == student.size() && student.size() > 0, "level_mismatch",
          "distill_loss: teacher has " + std::to_string(teacher.size()) + " levels, student " +
              std::to_string(student.size()));
  Tape<T>& tape = *student[0].tape();
  Var<T> total;
  for (int i = 0; i < student.size(); ++i) {
    require(teacher[i].shape() == student[i].shape(), "shape_mismatch",
            "distill_loss: level " + std::to_string(i + 1) + " teacher " + teacher[i].shape().str() + " vs student " +
                student[i].shape().str());
    Var<T> term = mean_abs(sub(student[i], tape.constant(teacher[i])));
    total = i == 0 ? term : add(total, term);
  }
  return total;
}

template <class T>
Var<T> distill_loss(const FeaturePyramid<T>& teacher, const FeaturePyramid<T>& student) {
  std::vector<Tensor<T>> values;
  for (const auto& v : teacher.levels) values.push_back(v.value());
  return distill_loss(values, student);
}

// Unset terms count as zero (the teacher has no L_D).
template <class T>
struct LossParts {
  Var<T> perceptual, garment, smooth, distill;
};

template <class T>
Var<T> total_loss(const LossParts<T>& parts, const LossWeights& w, Tape<T>& tape) {
  w.validate();
  const std::pair<Var<T>, double> terms[] = {
      {parts.perceptual, w.lambda_p}, {parts.garment, w.lambda_g}, {parts.smooth, w.lambda_r}, {parts.distill, w.lambda_d}};
  Var<T> total = tape.constant(Tensor<T>(Shape{1}));
  for (const auto& [v, lambda] : terms) {
    if (!v.valid()) continue;
    require(v.value().size() == 1 && std::isfinite(static_cast<double>(v.value()[0])), "non_finite_loss",
            "total_loss: loss parts must be finite scalars");
    total = add(total, scale(v, static_cast<T>(lambda)));
  }
  return total;
}

}  // namespace fsvt

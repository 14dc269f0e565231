#pragma once

#include <string>
#include <vector>

#include "fsvt/encoders.hpp"
#include "fsvt/warp.hpp"

namespace fsvt {

struct FlowConfig {
  int hidden = 32;
  bool use_sm = true;  // style-modulated coarse head
  bool use_rf = true;  // local refinement head
  bool demodulate = true;

  void validate() const {
    require(hidden >= 1, "invalid_config", "flow head width must be positive");
    require(use_sm || use_rf, "invalid_config", "at least one of use_SM / use_RF must be enabled");
  }
};

// Heads of one warping block. Final layers start at zero so an untrained
// cascade is the identity warp.
template <class T = float>
struct WarpBlockParams {
  bool use_sm = false, use_rf = false;
  ModConvParams<T> coarse_a, coarse_b;
  ConvParams<T> refine_a, refine_b;

  template <class Rng>
  static WarpBlockParams init(int feat_channels, int style_dim, const FlowConfig& cfg, Rng& rng) {
    WarpBlockParams p;
    p.use_sm = cfg.use_sm;
    p.use_rf = cfg.use_rf;
    if (p.use_sm) {
      p.coarse_a = ModConvParams<T>::init(feat_channels, cfg.hidden, 3, style_dim, rng, cfg.demodulate);
      // Demodulating an all-zero kernel would divide by sqrt(eps), so the
      // output layer is modulation-only.
      p.coarse_b = ModConvParams<T>::init(cfg.hidden, 2, 3, style_dim, rng, false, true);
    }
    if (p.use_rf) {
      p.refine_a = ConvParams<T>::init(2 * feat_channels, cfg.hidden, 3, rng);
      p.refine_b = ConvParams<T>::init(cfg.hidden, 2, 3, rng, 0.0);
    }
    return p;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    if (use_sm) {
      coarse_a.for_each_param(prefix + "sm_a.", f);
      coarse_b.for_each_param(prefix + "sm_b.", f);
    }
    if (use_rf) {
      refine_a.for_each_param(prefix + "rf_a.", f);
      refine_b.for_each_param(prefix + "rf_b.", f);
    }
  }
};

template <class T = float>
struct FlowEstimatorParams {
  std::vector<WarpBlockParams<T>> blocks;  // blocks[0] is warping block 1 (deepest level)

  // level_channels are the encoder widths, finest first.
  template <class Rng>
  static FlowEstimatorParams init(const std::vector<int>& level_channels, int style_dim, const FlowConfig& cfg,
                                  Rng& rng) {
    cfg.validate();
    FlowEstimatorParams p;
    for (auto it = level_channels.rbegin(); it != level_channels.rend(); ++it)
      p.blocks.push_back(WarpBlockParams<T>::init(*it, style_dim, cfg, rng));
    return p;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].for_each_param(prefix + "block" + std::to_string(i + 1) + ".", f);
  }
};

template <class T>
struct BlockOutput {
  Var<T> coarse;  // f_ci
  Var<T> flow;    // f_i
};

// One warping block. prev_flow is invalid for the first block; otherwise it is
// the previous block's output, resized onto this level's grid.
template <class T, class Bind>
BlockOutput<T> warp_block(Var<T> g_feat, Var<T> p_feat, Var<T> prev_flow, Var<T> style, WarpBlockParams<T>& params,
                          Bind&& bind) {
  const Tensor<T>&gv = g_feat.value(), &pv = p_feat.value();
  require(gv.rank() == 3 && pv.rank() == 3 && gv.height() == pv.height() && gv.width() == pv.width(),
          "shape_mismatch", "warp_block: garment " + gv.shape().str() + " vs person " + pv.shape().str());
  const int h = gv.height(), w = gv.width();
  Tape<T>& tape = *g_feat.tape();

  Var<T> base;
  if (prev_flow.valid()) {
    const Tensor<T>& fv = prev_flow.value();
    require(fv.rank() == 3 && fv.channels() == 2 && fv.height() == h / 2 && fv.width() == w / 2, "shape_mismatch",
            "warp_block: previous flow " + fv.shape().str() + " is not one level below " + gv.shape().str());
    base = (fv.height() * 2 == h && fv.width() * 2 == w) ? upsample_flow(prev_flow) : resize_flow(prev_flow, h, w);
  } else {
    base = zero_flow(tape, h, w);
  }

  Var<T> coarse = base;
  if (params.use_sm) {
    Var<T> warped = bilinear_sample(g_feat, base);
    Var<T> hdn = leaky_relu(modulated_conv(warped, style, fsvt::bind(params.coarse_a, bind)));
    coarse = add(base, modulated_conv(hdn, style, fsvt::bind(params.coarse_b, bind)));
  }
  Var<T> flow = coarse;
  if (params.use_rf) {
    Var<T> warped = bilinear_sample(g_feat, coarse);
    Var<T> hdn = leaky_relu(apply(params.refine_a, concat(warped, p_feat), bind));
    flow = add(coarse, apply(params.refine_b, hdn, bind));
  }
  return {coarse, flow};
}

template <class T>
struct FlowCascade {
  std::vector<Var<T>> flows;   // f_1 .. f_N, coarsest first
  std::vector<Var<T>> coarse;  // f_c1 .. f_cN

  int size() const { return static_cast<int>(flows.size()); }
  Var<T> final() const { return flows.back(); }
};

template <class T, class Bind>
FlowCascade<T> estimate_flow(const FeaturePyramid<T>& pyr_p, const FeaturePyramid<T>& pyr_g, Var<T> style,
                             FlowEstimatorParams<T>& params, Bind&& bind) {
  const int n = pyr_g.size();
  require(pyr_p.size() == n && static_cast<int>(params.blocks.size()) == n, "level_mismatch",
          "estimate_flow: person pyramid has " + std::to_string(pyr_p.size()) + " levels, garment pyramid " +
              std::to_string(n) + ", estimator " + std::to_string(params.blocks.size()));
  FlowCascade<T> out;
  Var<T> prev;
  for (int i = 0; i < n; ++i) {
    const int level = n - 1 - i;
    BlockOutput<T> b = warp_block(pyr_g[level], pyr_p[level], prev, style, params.blocks[i], bind);
    out.coarse.push_back(b.coarse);
    out.flows.push_back(b.flow);
    prev = b.flow;
  }
  return out;
}

// Brings a cascade flow to image resolution (H, W).
template <class T>
Var<T> flow_to_image(Var<T> flow, int H, int W) {
  const Tensor<T>& fv = flow.value();
  if (fv.height() == H && fv.width() == W) return flow;
  return resize_flow(flow, H, W);
}

// Warps the garment image with a flow given at any resolution.
template <class T>
Var<T> warp_garment(Var<T> g, Var<T> flow) {
  const Tensor<T>& gv = g.value();
  require(gv.rank() == 3, "shape_mismatch", "warp_garment: expects a (C,H,W) image");
  return bilinear_sample(g, flow_to_image(flow, gv.height(), gv.width()));
}

}  // namespace fsvt

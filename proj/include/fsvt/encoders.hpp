#pragma once

#include <string>
#include <vector>

#include "fsvt/layers.hpp"

namespace fsvt {

enum class StyleSource { person_only, both };

inline std::string to_string(StyleSource s) { return s == StyleSource::both ? "both" : "person_only"; }

inline StyleSource parse_style_source(const std::string& s) {
  if (s == "both") return StyleSource::both;
  if (s == "person_only") return StyleSource::person_only;
  throw Error("invalid_config", "style_source must be 'both' or 'person_only', got '" + s + "'");
}

// N pyramid levels need both dimensions divisible by 2^(N-1) and at least
// 2^N; the deepest level then has integer-floor size >= 1.
inline void check_pyramid_resolution(int H, int W, int levels) {
  require(levels >= 1 && levels <= 8, "invalid_config", "pyramid levels must be in [1, 8]");
  const int step = 1 << (levels - 1);
  require(H % step == 0 && W % step == 0 && H >= 2 * step && W >= 2 * step, "invalid_resolution",
          std::to_string(H) + "x" + std::to_string(W) + " cannot form " + std::to_string(levels) + " pyramid levels");
}

template <class T>
struct FeaturePyramid {
  std::vector<Var<T>> levels;  // levels[0] is the finest (H/2, W/2)

  int size() const { return static_cast<int>(levels.size()); }
  Var<T> operator[](int i) const { return levels.at(i); }
  Var<T> deepest() const { return levels.back(); }
};

struct EncoderConfig {
  int in_channels = 3;
  std::vector<int> channels{16, 32, 64, 128, 128};  // finest first
  int style_dim = 256;
  bool pooled_style = true;  // average-pool the deepest level before the fc map
  StyleSource style_source = StyleSource::both;

  int levels() const { return static_cast<int>(channels.size()); }

  void validate() const {
    require(in_channels >= 1, "invalid_config", "encoder input channels must be positive");
    require(!channels.empty(), "invalid_config", "encoder needs at least one level");
    for (std::size_t i = 0; i < channels.size(); ++i) {
      require(channels[i] >= 1, "invalid_config", "encoder widths must be positive");
      require(i == 0 || channels[i] >= channels[i - 1], "invalid_config", "encoder widths must be nondecreasing");
    }
    require(style_dim >= 2 && style_dim % 2 == 0, "invalid_config", "style_dim must be even and >= 2");
  }
};

// One residual block per level plus the fc map that feeds the style vector.
template <class T = float>
struct EncoderParams {
  std::vector<ResBlockParams<T>> blocks;
  LinearParams<T> fc;
  bool has_fc = false;

  int levels() const { return static_cast<int>(blocks.size()); }
  int in_channels() const { return blocks.front().conv_a.in_channels(); }

  // fc_out == 0 builds an encoder with no style branch. fc_in is the flattened
  // deepest-level size; for pooled styles pass the deepest channel count.
  template <class Rng>
  static EncoderParams init(int in_channels, const std::vector<int>& channels, int fc_in, int fc_out, Rng& rng) {
    EncoderParams p;
    int prev = in_channels;
    for (int c : channels) {
      p.blocks.push_back(ResBlockParams<T>::init(prev, c, rng));
      prev = c;
    }
    p.has_fc = fc_out > 0;
    if (p.has_fc) p.fc = LinearParams<T>::init(fc_in, fc_out, rng);
    return p;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].for_each_param(prefix + "level" + std::to_string(i + 1) + ".", f);
    if (has_fc) fc.for_each_param(prefix + "fc.", f);
  }
};

// Size of the fc input for the deepest level of an H x W input.
inline int style_fc_inputs(const EncoderConfig& cfg, int H, int W) {
  if (cfg.pooled_style) return cfg.channels.back();
  const int n = cfg.levels();
  return cfg.channels.back() * (H >> n) * (W >> n);
}

// Builds the (person, garment) encoder pair; which one carries an fc map and
// its width follows cfg.style_source.
template <class T, class Rng>
std::pair<EncoderParams<T>, EncoderParams<T>> init_encoder_pair(const EncoderConfig& person_cfg, int garment_in,
                                                                int H, int W, Rng& rng) {
  person_cfg.validate();
  const int fc_in = style_fc_inputs(person_cfg, H, W);
  const bool both = person_cfg.style_source == StyleSource::both;
  const int half = person_cfg.style_dim / 2;
  auto ep = EncoderParams<T>::init(person_cfg.in_channels, person_cfg.channels, fc_in,
                                   both ? half : person_cfg.style_dim, rng);
  auto eg = EncoderParams<T>::init(garment_in, person_cfg.channels, fc_in, both ? half : 0, rng);
  return {std::move(ep), std::move(eg)};
}

template <class T, class Bind>
FeaturePyramid<T> extract_pyramid(Var<T> x, EncoderParams<T>& enc, Bind&& bind) {
  const Tensor<T>& xv = x.value();
  require(xv.rank() == 3, "shape_mismatch", "extract_pyramid: expects a (C,H,W) raster");
  require(xv.channels() == enc.in_channels(), "channel_mismatch",
          "extract_pyramid: encoder expects " + std::to_string(enc.in_channels()) + " channels, got " +
              std::to_string(xv.channels()));
  check_pyramid_resolution(xv.height(), xv.width(), enc.levels());
  FeaturePyramid<T> pyr;
  Var<T> h = x;
  for (auto& block : enc.blocks) {
    h = avg_pool2(apply(block, h, bind));
    pyr.levels.push_back(h);
  }
  return pyr;
}

template <class T, class Bind>
Var<T> style_branch(Var<T> deepest, EncoderParams<T>& enc, bool pooled, Bind&& bind) {
  require(enc.has_fc, "invalid_config", "style_branch: encoder has no fc map");
  Var<T> v = pooled ? global_avg_pool(deepest) : flatten(deepest);
  require(static_cast<int>(v.value().size()) == enc.fc.in_features(), "shape_mismatch",
          "style_branch: fc expects " + std::to_string(enc.fc.in_features()) + " inputs, got " +
              std::to_string(v.value().size()));
  return apply(enc.fc, v, bind);
}

// s = [fc_p(p_N), fc_g(g_N)], or fc_p(p_N) alone for person-only styles.
template <class T, class Bind>
Var<T> style_vector(Var<T> p_deepest, Var<T> g_deepest, EncoderParams<T>& enc_p, EncoderParams<T>& enc_g,
                    const EncoderConfig& cfg, Bind&& bind) {
  Var<T> sp = style_branch(p_deepest, enc_p, cfg.pooled_style, bind);
  Var<T> s = sp;
  if (cfg.style_source == StyleSource::both) s = concat(sp, style_branch(g_deepest, enc_g, cfg.pooled_style, bind));
  require(static_cast<int>(s.value().size()) == cfg.style_dim, "shape_mismatch",
          "style_vector: length " + std::to_string(s.value().size()) + " != style_dim " + std::to_string(cfg.style_dim));
  return s;
}

}  // namespace fsvt

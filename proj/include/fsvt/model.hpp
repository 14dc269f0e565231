#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "fsvt/config.hpp"
#include "fsvt/encoders.hpp"
#include "fsvt/flow_estimator.hpp"
#include "fsvt/generator.hpp"
#include "fsvt/synth.hpp"

namespace fsvt {

// Architecture of one try-on network. The teacher and the student share
// everything except the person encoder's input channel count.
struct ModelConfig {
  int height = 64;
  int width = 48;
  int person_channels = 3;
  EncoderConfig encoder;
  FlowConfig flow;
  GeneratorConfig generator;

  int levels() const { return encoder.levels(); }

  void validate() const {
    require(person_channels >= 1, "invalid_config", "person_channels must be positive");
    encoder.validate();
    flow.validate();
    generator.validate();
    check_pyramid_resolution(height, width, levels());
    const int step = 1 << (generator.depth() - 1);
    require(height % step == 0 && width % step == 0, "invalid_resolution",
            "generator depth " + std::to_string(generator.depth()) + " does not divide the resolution");
  }

  static ModelConfig student() { return ModelConfig{}; }

  static ModelConfig teacher() {
    ModelConfig c;
    c.person_channels = kSemanticChannels;
    return c;
  }

  void write(KeyValues& kv, const std::string& prefix = "model.") const {
    kv.set(prefix + "height", height);
    kv.set(prefix + "width", width);
    kv.set(prefix + "person_channels", person_channels);
    kv.set(prefix + "encoder_channels", encoder.channels);
    kv.set(prefix + "style_dim", encoder.style_dim);
    kv.set(prefix + "pooled_style", encoder.pooled_style);
    kv.set(prefix + "style_source", to_string(encoder.style_source));
    kv.set(prefix + "flow_hidden", flow.hidden);
    kv.set(prefix + "use_SM", flow.use_sm);
    kv.set(prefix + "use_RF", flow.use_rf);
    kv.set(prefix + "demodulate", flow.demodulate);
    kv.set(prefix + "generator_widths", generator.widths);
  }

  static ModelConfig read(const KeyValues& kv, ModelConfig c, const std::string& prefix = "model.") {
    c.height = kv.get(prefix + "height", c.height);
    c.width = kv.get(prefix + "width", c.width);
    c.person_channels = kv.get(prefix + "person_channels", c.person_channels);
    c.encoder.channels = kv.get(prefix + "encoder_channels", c.encoder.channels);
    c.encoder.style_dim = kv.get(prefix + "style_dim", c.encoder.style_dim);
    c.encoder.pooled_style = kv.get(prefix + "pooled_style", c.encoder.pooled_style);
    c.encoder.style_source = parse_style_source(kv.get(prefix + "style_source", to_string(c.encoder.style_source)));
    c.flow.hidden = kv.get(prefix + "flow_hidden", c.flow.hidden);
    c.flow.use_sm = kv.get(prefix + "use_SM", c.flow.use_sm);
    c.flow.use_rf = kv.get(prefix + "use_RF", c.flow.use_rf);
    c.flow.demodulate = kv.get(prefix + "demodulate", c.flow.demodulate);
    c.generator.widths = kv.get(prefix + "generator_widths", c.generator.widths);
    return c;
  }

  bool operator==(const ModelConfig& o) const {
    KeyValues a, b;
    write(a);
    o.write(b);
    return a.str() == b.str();
  }
};

template <class T = float>
struct TryOnModel {
  ModelConfig config;
  EncoderParams<T> enc_p, enc_g;
  FlowEstimatorParams<T> flow;
  GeneratorParams<T> gen;

  static TryOnModel init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TryOnModel m;
    m.config = cfg;
    EncoderConfig ec = cfg.encoder;
    ec.in_channels = cfg.person_channels;
    std::mt19937_64 rng_enc(derive_seed(seed, 1)), rng_flow(derive_seed(seed, 2)), rng_gen(derive_seed(seed, 3));
    std::tie(m.enc_p, m.enc_g) = init_encoder_pair<T>(ec, 3, cfg.height, cfg.width, rng_enc);
    m.flow = FlowEstimatorParams<T>::init(cfg.encoder.channels, cfg.encoder.style_dim, cfg.flow, rng_flow);
    m.gen = GeneratorParams<T>::init(6, cfg.generator, rng_gen);
    return m;
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    enc_p.for_each_param(prefix + "enc_p.", f);
    enc_g.for_each_param(prefix + "enc_g.", f);
    flow.for_each_param(prefix + "flow.", f);
    gen.for_each_param(prefix + "gen.", f);
  }

  // FNV-1a over every parameter name and raw value.
  std::uint64_t hash() {
    std::uint64_t h = fnv1a(std::string("params"));
    for_each_param("", [&](const std::string& name, Parameter<T>& p) {
      h = fnv1a(name.data(), name.size(), h);
      h = fnv1a(p.value.data(), p.value.size() * sizeof(T), h);
    });
    return h;
  }
};

template <class T>
struct Forward {
  FeaturePyramid<T> pyr_p, pyr_g;
  Var<T> style;
  FlowCascade<T> cascade;
  Var<T> flow;    // final flow at image resolution
  Var<T> warped;  // g_hat
  Var<T> tryon;   // t
};

// Warp + generate for a known image-resolution flow.
template <class T, class Bind>
void render(TryOnModel<T>& m, Var<T> garment, Var<T> flow, Var<T> gen_person, Forward<T>& out, Bind&& bind) {
  out.flow = flow;
  out.warped = warp_garment(garment, flow);
  out.tryon = generate(out.warped, gen_person, m.gen, bind);
}

// person_in feeds E_p (image for the student, semantics for the teacher);
// gen_person is the person raster concatenated with g_hat in the generator.
template <class T, class Bind>
Forward<T> forward(TryOnModel<T>& m, Var<T> person_in, Var<T> garment, Var<T> gen_person, Bind&& bind) {
  Forward<T> out;
  out.pyr_p = extract_pyramid(person_in, m.enc_p, bind);
  out.pyr_g = extract_pyramid(garment, m.enc_g, bind);
  out.style = style_vector(out.pyr_p.deepest(), out.pyr_g.deepest(), m.enc_p, m.enc_g, m.config.encoder, bind);
  out.cascade = estimate_flow(out.pyr_p, out.pyr_g, out.style, m.flow, bind);
  const Tensor<T>& gv = garment.value();
  render(m, garment, flow_to_image(out.cascade.final(), gv.height(), gv.width()), gen_person, out, bind);
  return out;
}

}  // namespace fsvt

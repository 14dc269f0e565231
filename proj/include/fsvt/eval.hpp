#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsvt/metrics.hpp"
#include "fsvt/training.hpp"

namespace fsvt {

inline const std::vector<std::string>& eval_split_names() {
  static const std::vector<std::string> names{"aligned", "shifted", "zoomed"};
  return names;
}

struct SplitMetrics {
  double ssim_mean = 0;
  double epe_mean_px = 0;
  double epe_masked_px = 0;
  std::size_t count = 0;
};

struct EvalReport {
  std::string variant;  // SM+RF, SM, RF; "/oracle-flow" when gt_flow is injected
  std::string stage;
  std::size_t sample_count = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, SplitMetrics> splits;
  std::map<std::string, SplitMetrics> degradation;  // augmented / aligned, count unused

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["variant"] = variant;
    j["stage"] = stage;
    j["sample_count"] = sample_count;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    for (const auto& [name, m] : splits)
      j["splits"][name] = {{"ssim_mean", m.ssim_mean},
                           {"epe_mean_px", m.epe_mean_px},
                           {"epe_masked_px", m.epe_masked_px},
                           {"count", m.count}};
    for (const auto& [name, m] : degradation)
      j["degradation"][name] = {
          {"ssim_mean", m.ssim_mean}, {"epe_mean_px", m.epe_mean_px}, {"epe_masked_px", m.epe_masked_px}};
    return j;
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.variant = j.at("variant").get<std::string>();
    r.stage = j.at("stage").get<std::string>();
    r.sample_count = j.at("sample_count").get<std::size_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [name, m] : j.at("splits").items())
      r.splits[name] = {m.at("ssim_mean").get<double>(), m.at("epe_mean_px").get<double>(),
                        m.at("epe_masked_px").get<double>(), m.at("count").get<std::size_t>()};
    for (const auto& [name, m] : j.at("degradation").items())
      r.degradation[name] = {m.at("ssim_mean").get<double>(), m.at("epe_mean_px").get<double>(),
                             m.at("epe_masked_px").get<double>(), 0};
    return r;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("io", "cannot write report " + path);
    os << to_json().dump(2) << '\n';
  }
};

inline std::string variant_name(const FlowConfig& f) {
  return f.use_sm && f.use_rf ? "SM+RF" : f.use_sm ? "SM" : "RF";
}

struct EvalOptions {
  std::uint64_t seed = 0;
  bool oracle_flow = false;  // inject gt_flow in place of the estimated flow
  SsimParams ssim;
};

// Output of one forward pass in evaluation mode.
struct Inference {
  Image tryon;
  Image warped;
  FlowField<float> flow;
};

// Student: person image and garment. Teacher: semantics + preserved person
// derived from the sample. With gt_flow given, the estimator is bypassed.
inline Inference infer(TryOnModel<float>& m, const SyntheticSample& s, const FlowField<float>* gt_flow = nullptr) {
  require(s.height() == m.config.height && s.width() == m.config.width, "checkpoint_mismatch",
          "sample is " + std::to_string(s.height()) + "x" + std::to_string(s.width()) + ", model expects " +
              std::to_string(m.config.height) + "x" + std::to_string(m.config.width));
  Tape<float> tape(false);
  Binder<float> frozen = Binder<float>::frozen(tape);
  Var<float> garment = tape.constant(s.garment);
  const bool teacher = m.config.person_channels == kSemanticChannels;
  Forward<float> f;
  if (gt_flow) {
    Var<float> gen_person = tape.constant(teacher ? teacher_input(s).preserved : s.person);
    render(m, garment, tape.constant(gt_flow->tensor()), gen_person, f, frozen);
  } else if (teacher) {
    f = teacher_forward(m, teacher_input(s), garment, frozen);
  } else {
    Var<float> p = tape.constant(s.person);
    f = forward(m, p, garment, p, frozen);
  }
  return {f.tryon.value(), f.warped.value(), FlowField<float>(f.flow.value())};
}

// Augmentation applied to test sample `s` in the given split; drawn from a
// stream keyed on (seed, sample seed, split) so reports do not depend on order.
inline AugmentSpec split_augment(const std::string& split, const SyntheticSample& s, std::uint64_t seed) {
  if (split == "aligned") return AugmentSpec::none();
  const bool shift = split == "shifted";
  require(shift || split == "zoomed", "invalid_argument", "unknown evaluation split '" + split + "'");
  std::mt19937_64 rng(derive_seed(derive_seed(seed, s.seed), shift ? 1 : 2));
  return random_augment(shift ? AugmentSpec::Mode::shift : AugmentSpec::Mode::zoom, rng, s.height(), s.width());
}

namespace eval_detail {

inline double ratio(double augmented, double aligned) {
  constexpr double eps = 1e-9;  // keeps 0/0 (oracle flow) at 1
  return (augmented + eps) / (aligned + eps);
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace eval_detail

inline EvalReport eval_suite(TryOnModel<float>& m, const std::string& stage, const std::vector<SyntheticSample>& test,
                             const EvalOptions& opt = {}) {
  require(!test.empty(), "empty_dataset", "evaluation needs at least one test sample");
  EvalReport r;
  r.variant = variant_name(m.config.flow) + (opt.oracle_flow ? "/oracle-flow" : "");
  r.stage = stage;
  r.sample_count = test.size();
  r.seed = opt.seed;
  KeyValues kv;
  m.config.write(kv);
  const std::string arch = kv.str();
  r.config_hash = eval_detail::hex(fnv1a(arch.data(), arch.size(), m.hash()));

  for (const auto& split : eval_split_names()) {
    SplitMetrics acc;
    for (const auto& base : test) {
      const SyntheticSample s = augment_sample(base, split_augment(split, base, opt.seed));
      const Inference out = infer(m, s, opt.oracle_flow ? &s.gt_flow : nullptr);
      acc.ssim_mean += ssim(out.tryon, s.person, opt.ssim);
      acc.epe_mean_px += epe(out.flow, s.gt_flow);
      acc.epe_masked_px += epe(out.flow, s.gt_flow, s.garment_mask);
      ++acc.count;
    }
    acc.ssim_mean /= acc.count;
    acc.epe_mean_px /= acc.count;
    acc.epe_masked_px /= acc.count;
    r.splits[split] = acc;
  }
  const SplitMetrics& a = r.splits["aligned"];
  for (const char* split : {"shifted", "zoomed"}) {
    const SplitMetrics& b = r.splits[split];
    r.degradation[split] = {eval_detail::ratio(b.ssim_mean, a.ssim_mean),
                            eval_detail::ratio(b.epe_mean_px, a.epe_mean_px),
                            eval_detail::ratio(b.epe_masked_px, a.epe_masked_px), 0};
  }
  return r;
}

inline EvalReport eval_checkpoint(const std::string& path, const std::vector<SyntheticSample>& test,
                                  const EvalOptions& opt = {}) {
  TrainState st = resume_state(path);
  return eval_suite(st.model, to_string(st.stage), test, opt);
}

// Students for RF-only, SM-only and SM+RF, distilled from the same teacher
// with otherwise identical settings. Already-trained variants can be passed in
// by name to skip their training.
inline std::vector<EvalReport> ablation_sweep(TryOnModel<float>& teacher, const std::vector<SyntheticSample>& train,
                                              const std::vector<SyntheticSample>& test, const TrainConfig& base,
                                              const EvalOptions& opt = {},
                                              std::map<std::string, TryOnModel<float>*> pretrained = {}) {
  std::vector<EvalReport> reports;
  for (const auto& [sm, rf] : {std::pair{false, true}, std::pair{true, false}, std::pair{true, true}}) {
    TrainConfig cfg = base;
    cfg.model.flow.use_sm = sm;
    cfg.model.flow.use_rf = rf;
    cfg.checkpoint.clear();
    cfg.loss_csv.clear();
    const std::string name = variant_name(cfg.model.flow);
    if (auto it = pretrained.find(name); it != pretrained.end()) {
      require(variant_name(it->second->config.flow) == name, "invalid_argument", "pretrained variant mismatch");
      reports.push_back(eval_suite(*it->second, "student", test, opt));
      continue;
    }
    TrainState st = distill_student(teacher, train, cfg);
    reports.push_back(eval_suite(st.model, "student", test, opt));
  }
  return reports;
}

}  // namespace fsvt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fsvt/checkpoint.hpp"
#include "fsvt/losses.hpp"
#include "fsvt/model.hpp"
#include "fsvt/teacher.hpp"

namespace fsvt {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 4;
  double lr0 = 5e-4;
  int decay_start_epoch = 20;
  std::uint64_t seed = 0;
  LossWeights weights;
  double grad_clip = 10.0;
  bool augment = true;  // shift / zoom / none, one third each
  std::uint64_t feature_seed = 7;
  std::string feature_weights;  // optional checkpoint with phi1.w, phi1.b, ...
  ModelConfig model = ModelConfig::student();
  std::string data;
  std::string checkpoint;
  std::string teacher_checkpoint;
  std::string loss_csv;

  void validate() const {
    require(epochs >= 1, "invalid_config", "epochs must be >= 1");
    require(batch_size >= 1, "invalid_config", "batch_size must be >= 1");
    require(lr0 > 0, "invalid_config", "lr0 must be positive");
    require(decay_start_epoch >= 0 && decay_start_epoch <= epochs, "invalid_config",
            "decay_start_epoch must lie in [0, epochs]");
    require(grad_clip > 0, "invalid_config", "grad_clip must be positive");
    weights.validate();
    model.validate();
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("epochs", epochs);
    kv.set("batch_size", batch_size);
    kv.set("lr0", lr0);
    kv.set("decay_start_epoch", decay_start_epoch);
    kv.set("seed", seed);
    kv.set("lambda_p", weights.lambda_p);
    kv.set("lambda_g", weights.lambda_g);
    kv.set("lambda_R", weights.lambda_r);
    kv.set("lambda_D", weights.lambda_d);
    kv.set("grad_clip", grad_clip);
    kv.set("augment", augment);
    kv.set("feature_seed", feature_seed);
    kv.set("feature_weights", feature_weights);
    kv.set("data", data);
    kv.set("checkpoint", checkpoint);
    kv.set("teacher_checkpoint", teacher_checkpoint);
    kv.set("loss_csv", loss_csv);
    model.write(kv);
    return kv;
  }

  static TrainConfig from_kv(const KeyValues& kv, TrainConfig c) {
    c.epochs = kv.get("epochs", c.epochs);
    c.batch_size = kv.get("batch_size", c.batch_size);
    c.lr0 = kv.get("lr0", c.lr0);
    c.decay_start_epoch = kv.get("decay_start_epoch", kv.has("epochs") && !kv.has("decay_start_epoch")
                                                          ? c.epochs / 2
                                                          : c.decay_start_epoch);
    c.seed = kv.get("seed", c.seed);
    c.weights.lambda_p = kv.get("lambda_p", c.weights.lambda_p);
    c.weights.lambda_g = kv.get("lambda_g", c.weights.lambda_g);
    c.weights.lambda_r = kv.get("lambda_R", c.weights.lambda_r);
    c.weights.lambda_d = kv.get("lambda_D", c.weights.lambda_d);
    c.grad_clip = kv.get("grad_clip", c.grad_clip);
    c.augment = kv.get("augment", c.augment);
    c.feature_seed = kv.get("feature_seed", c.feature_seed);
    c.feature_weights = kv.get("feature_weights", c.feature_weights);
    c.data = kv.get("data", c.data);
    c.checkpoint = kv.get("checkpoint", c.checkpoint);
    c.teacher_checkpoint = kv.get("teacher_checkpoint", c.teacher_checkpoint);
    c.loss_csv = kv.get("loss_csv", c.loss_csv);
    c.model = ModelConfig::read(kv, c.model);
    return c;
  }
};

// Perceptual feature extractor: seeded random weights, or levels phi1, phi2,
// ... read from a checkpoint of externally trained 3x3 convolutions.
inline FeatureNet<float> load_feature_net(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  FeatureNet<float> net;
  for (int i = 1; c.has("phi" + std::to_string(i) + ".w"); ++i) {
    const std::string name = "phi" + std::to_string(i);
    ConvParams<float> level;
    level.weight = Parameter<float>(c.tensor(name + ".w"));
    level.bias = Parameter<float>(c.tensor(name + ".b"));
    const auto& w = level.weight.value;
    require(w.rank() == 4 && w.dim(2) == w.dim(3) && w.dim(2) % 2 == 1 && level.bias.value.size() == std::size_t(w.dim(0)),
            "checkpoint_mismatch", "feature level " + name + " is not an odd square conv");
    require(i == 1 ? w.dim(1) == 3 : w.dim(1) == net.levels.back().out_channels(), "checkpoint_mismatch",
            "feature level " + name + " input channels do not chain");
    net.levels.push_back(std::move(level));
  }
  require(net.size() > 0, "checkpoint_mismatch", "no phi1.w record in " + path);
  return net;
}

inline FeatureNet<float> make_feature_net(const TrainConfig& cfg) {
  return cfg.feature_weights.empty() ? FeatureNet<float>::random(cfg.feature_seed) : load_feature_net(cfg.feature_weights);
}

// lr0 before decay_start_epoch, then linear to 0 at cfg.epochs.
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  require(epoch >= 0 && epoch <= cfg.epochs, "epoch_out_of_range",
          "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + "]");
  if (epoch < cfg.decay_start_epoch) return cfg.lr0;
  if (cfg.epochs == cfg.decay_start_epoch) return 0.0;
  return cfg.lr0 * static_cast<double>(cfg.epochs - epoch) / (cfg.epochs - cfg.decay_start_epoch);
}

// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, Tensor<float>> m, v;

  void update(const ParamList<float>& params, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (const auto& [name, p] : params) {
      auto& mt = m[name];
      auto& vt = v[name];
      if (mt.empty()) mt = Tensor<float>(p->value.shape());
      if (vt.empty()) vt = Tensor<float>(p->value.shape());
      float* w = p->value.data();
      const float* g = p->grad.data();
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double gi = g[i];
        mt[i] = static_cast<float>(beta1 * mt[i] + (1 - beta1) * gi);
        vt[i] = static_cast<float>(beta2 * vt[i] + (1 - beta2) * gi * gi);
        const double mhat = mt[i] / c1, vhat = vt[i] / c2;
        w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

// Rescales gradients so their global L2 norm is at most max_norm; returns
// the norm before clipping.
inline double clip_grad_norm(const ParamList<float>& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, p] : params)
    for (float g : p->grad.values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const float k = static_cast<float>(max_norm / (norm + 1e-12));
    for (const auto& [name, p] : params) p->grad *= k;
  }
  return norm;
}

struct LossRecord {
  int epoch = 0;
  int step = 0;
  double lp = 0, lg = 0, lr = 0, ld = 0, total = 0;

  bool operator==(const LossRecord&) const = default;
};

inline void write_loss_csv(const std::string& path, const std::vector<LossRecord>& curve) {
  std::ofstream os(path);
  if (!os) throw Error("io", "cannot open " + path + " for writing");
  os.precision(9);
  os << "epoch,step,L_p,L_g,L_R,L_D,total\n";
  for (const auto& r : curve)
    os << r.epoch << ',' << r.step << ',' << r.lp << ',' << r.lg << ',' << r.lr << ',' << r.ld << ',' << r.total << '\n';
}

// Curve as "epoch,step,lp,lg,lr,ld,total;..." with round-trip precision.
inline std::string encode_curve(const std::vector<LossRecord>& curve) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& r = curve[i];
    os << (i ? ";" : "") << r.epoch << ',' << r.step << ',' << r.lp << ',' << r.lg << ',' << r.lr << ',' << r.ld << ','
       << r.total;
  }
  return os.str();
}

inline std::vector<LossRecord> decode_curve(const std::string& text) {
  std::vector<LossRecord> curve;
  std::istringstream records(text);
  std::string rec;
  while (std::getline(records, rec, ';')) {
    std::istringstream fields(rec);
    LossRecord r;
    char c1, c2, c3, c4, c5, c6;
    fields >> r.epoch >> c1 >> r.step >> c2 >> r.lp >> c3 >> r.lg >> c4 >> r.lr >> c5 >> r.ld >> c6 >> r.total;
    require(!fields.fail(), "checkpoint_mismatch", "malformed loss-curve record '" + rec + "'");
    curve.push_back(r);
  }
  return curve;
}

enum class Stage { teacher, student };

inline std::string to_string(Stage s) { return s == Stage::teacher ? "teacher" : "student"; }

// Everything needed to continue training bit-exactly.
struct TrainState {
  Stage stage = Stage::teacher;
  TrainConfig config;
  TryOnModel<float> model;
  Adam adam;
  int epoch = 0;  // next epoch to run
  std::vector<LossRecord> curve;
  std::uint64_t teacher_hash = 0;

  static TrainState fresh(Stage stage, const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.stage = stage;
    st.config = cfg;
    ModelConfig mc = cfg.model;
    if (stage == Stage::teacher) mc.person_channels = kSemanticChannels;
    st.model = TryOnModel<float>::init(mc, derive_seed(cfg.seed, stage == Stage::teacher ? 11 : 12));
    return st;
  }
};

inline Checkpoint to_checkpoint(TrainState& st) {
  Checkpoint c;
  c.meta = st.config.to_kv();
  st.model.config.write(c.meta, "arch.");
  c.meta.set("stage", to_string(st.stage));
  c.meta.set("epoch", st.epoch);
  c.meta.set("adam.step", st.adam.step);
  // Every epoch reseeds from (seed, epoch), so this pair is the full RNG state.
  c.meta.set("rng.seed", st.config.seed);
  c.meta.set("rng.epoch", st.epoch);
  c.meta.set("teacher_hash", st.teacher_hash);
  c.meta.set("curve", encode_curve(st.curve));
  store_params(st.model, c);
  for (const auto& [name, t] : st.adam.m) c.tensors["adam/m/" + name] = t;
  for (const auto& [name, t] : st.adam.v) c.tensors["adam/v/" + name] = t;
  return c;
}

inline TrainState from_checkpoint(const Checkpoint& c) {
  TrainState st;
  const std::string stage = c.meta.get("stage", "");
  require(stage == "teacher" || stage == "student", "checkpoint_mismatch", "checkpoint has no training stage");
  st.stage = stage == "teacher" ? Stage::teacher : Stage::student;
  st.config = TrainConfig::from_kv(c.meta, TrainConfig{});
  const ModelConfig arch = ModelConfig::read(c.meta, st.config.model, "arch.");
  st.model = TryOnModel<float>::init(arch, 0);
  restore_params(st.model, c);
  st.epoch = c.meta.get("epoch", 0);
  st.adam.step = c.meta.get<std::int64_t>("adam.step", 0);
  st.teacher_hash = c.meta.get<std::uint64_t>("teacher_hash", 0);
  st.curve = decode_curve(c.meta.get("curve", ""));
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind("adam/m/", 0) == 0) st.adam.m[name.substr(7)] = t;
    if (name.rfind("adam/v/", 0) == 0) st.adam.v[name.substr(7)] = t;
  }
  return st;
}

inline TryOnModel<float> load_model(const std::string& path) { return from_checkpoint(load_checkpoint(path)).model; }

struct TrainHooks {
  std::function<void(const TrainState&)> on_epoch;  // after each finished epoch
  int stop_after_epoch = -1;                        // stop once this epoch is done (for resume tests)
};

struct TrainResult {
  std::vector<LossRecord> curve;
  std::vector<std::string> dead_params;  // never saw a nonzero gradient in the first epoch
};

namespace train_detail {

inline AugmentSpec draw_augment(std::mt19937_64& rng, int H, int W) {
  std::uniform_int_distribution<int> pick(0, 2);
  const int k = pick(rng);
  if (k == 0) return AugmentSpec::none();
  return random_augment(k == 1 ? AugmentSpec::Mode::shift : AugmentSpec::Mode::zoom, rng, H, W);
}

struct SampleLoss {
  double lp = 0, lg = 0, lr = 0, ld = 0, total = 0;
};

}  // namespace train_detail

// Runs epochs [st.epoch, config.epochs). Teacher stage optimizes L_p + L_g + L_R
// on paired data; student stage builds its person input through `teacher` and
// adds L_D against the teacher's person-encoder features.
inline TrainResult run_training(TrainState& st, const std::vector<SyntheticSample>& data, const TeacherFn& teacher = {},
                                const TrainHooks& hooks = {}) {
  const TrainConfig& cfg = st.config;
  require(!data.empty(), "empty_dataset", "training needs at least one sample");
  require(st.stage == Stage::teacher || teacher, "invalid_argument", "student training needs a teacher");
  require(st.stage == Stage::teacher || data.size() >= 2, "empty_dataset", "student training needs >= 2 samples");
  const int H = st.model.config.height, W = st.model.config.width;
  for (const auto& s : data)
    require(s.height() == H && s.width() == W, "invalid_resolution", "dataset resolution does not match the model");

  FeatureNet<float> phi = make_feature_net(cfg);
  ParamList<float> params = collect_params<float>(st.model);
  std::set<std::string> touched;
  const bool audit = st.epoch == 0;
  const int n = static_cast<int>(data.size());
  TrainResult result;

  while (st.epoch < cfg.epochs) {
    const int epoch = st.epoch;
    const double lr = lr_schedule(epoch, cfg);
    std::mt19937_64 rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    for (int start = 0, step = 0; start < n; start += cfg.batch_size, ++step) {
      const int b = std::min(cfg.batch_size, n - start);
      std::vector<int> unpaired(b);
      if (st.stage == Stage::student) {
        if (b >= 2) {
          const auto perm = derangement(b, rng);
          for (int j = 0; j < b; ++j) unpaired[j] = order[start + perm[j]];
        } else {
          unpaired[0] = order[(start + 1) % n];
        }
      }
      for (const auto& [name, p] : params) p->zero_grad();
      LossRecord rec;
      rec.epoch = epoch;
      rec.step = step;

      for (int j = 0; j < b; ++j) {
        const SyntheticSample& base = data[order[start + j]];
        const AugmentSpec aug = cfg.augment ? train_detail::draw_augment(rng, H, W) : AugmentSpec::none();
        const SyntheticSample s = augment_sample(base, aug);

        Tape<float> tape;
        Binder<float> bind = Binder<float>::trainable(tape);
        Forward<float> f;
        StudentInput student_in;
        if (st.stage == Stage::teacher) {
          f = teacher_forward(st.model, teacher_input(s), tape.constant(s.garment), bind);
        } else {
          student_in = teacher(s, data[unpaired[j]]);
          Var<float> p = tape.constant(student_in.person);
          f = forward(st.model, p, tape.constant(s.garment), p, bind);
        }
        LossParts<float> parts;
        parts.perceptual = perceptual_loss(f.tryon, tape.constant(s.person), phi);
        parts.garment = garment_loss(f.warped, s.garment_mask, s.person);
        parts.smooth = smoothness_loss(f.cascade);
        if (st.stage == Stage::student && !student_in.teacher_features.empty())
          parts.distill = distill_loss(student_in.teacher_features, f.pyr_p);
        const std::pair<const char*, Var<float>> named[] = {
            {"L_p", parts.perceptual}, {"L_g", parts.garment}, {"L_R", parts.smooth}, {"L_D", parts.distill}};
        for (const auto& [name, v] : named)
          if (v.valid() && !std::isfinite(v.value()[0]))
            throw Error("non_finite_loss", "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " +
                                               name + " is " + std::to_string(v.value()[0]) + " on sample seed " +
                                               std::to_string(base.seed) + " (augment " + aug.mode_name() + ")");
        Var<float> total = total_loss(parts, cfg.weights, tape);
        const double tv = total.value()[0];
        tape.backward(total, 1.0f / static_cast<float>(b));
        rec.lp += parts.perceptual.value()[0] / b;
        rec.lg += parts.garment.value()[0] / b;
        rec.lr += parts.smooth.value()[0] / b;
        rec.ld += parts.distill.valid() ? parts.distill.value()[0] / b : 0.0;
        rec.total += tv / b;
      }

      if (audit && epoch == 0)
        for (const auto& [name, p] : params)
          if (!touched.count(name))
            for (float g : p->grad.values())
              if (g != 0) {
                touched.insert(name);
                break;
              }
      clip_grad_norm(params, cfg.grad_clip);
      st.adam.update(params, lr);
      st.curve.push_back(rec);
      result.curve.push_back(rec);
    }

    if (audit && epoch == 0)
      for (const auto& [name, p] : params)
        if (!touched.count(name)) result.dead_params.push_back(name);

    st.epoch = epoch + 1;  // checkpoints record the next epoch to run
    if (!cfg.checkpoint.empty()) save_checkpoint(cfg.checkpoint, to_checkpoint(st));
    if (!cfg.loss_csv.empty()) write_loss_csv(cfg.loss_csv, st.curve);
    if (hooks.on_epoch) hooks.on_epoch(st);
    if (hooks.stop_after_epoch == epoch) break;
  }
  return result;
}

inline TrainState train_teacher(const std::vector<SyntheticSample>& data, const TrainConfig& cfg,
                                const TrainHooks& hooks = {}) {
  TrainState st = TrainState::fresh(Stage::teacher, cfg);
  run_training(st, data, {}, hooks);
  return st;
}

// Student and teacher must agree on everything but the person input width.
inline void check_teacher_compatible(const ModelConfig& student, const ModelConfig& teacher) {
  ModelConfig t = teacher;
  t.person_channels = student.person_channels;
  t.flow = student.flow;  // ablation switches may differ
  t.encoder.style_source = student.encoder.style_source;
  require(t == student, "architecture_mismatch", "teacher and student architectures differ");
  require(teacher.person_channels == kSemanticChannels, "architecture_mismatch",
          "teacher person encoder must take the semantic channels");
}

// Continues a fresh or checkpointed state to config.epochs. The student stage
// needs the same teacher it started with.
inline TrainResult continue_training(TrainState& st, const std::vector<SyntheticSample>& data,
                                     TryOnModel<float>* teacher = nullptr, const TrainHooks& hooks = {}) {
  if (st.stage == Stage::teacher) return run_training(st, data, {}, hooks);
  require(teacher != nullptr, "invalid_argument", "student training needs a teacher");
  check_teacher_compatible(st.model.config, teacher->config);
  const std::uint64_t h = teacher->hash();
  if (st.teacher_hash == 0) st.teacher_hash = h;
  require(h == st.teacher_hash, "teacher_mismatch", "teacher differs from the one this student was trained with");
  TrainResult r = run_training(st, data, model_teacher(*teacher), hooks);
  require(teacher->hash() == st.teacher_hash, "teacher_modified", "teacher parameters changed during distillation");
  return r;
}

inline TrainState distill_student(TryOnModel<float>& teacher, const std::vector<SyntheticSample>& data,
                                  const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  TrainState st = TrainState::fresh(Stage::student, cfg);
  continue_training(st, data, &teacher, hooks);
  return st;
}

inline TrainState resume_state(const std::string& checkpoint_path) {
  return from_checkpoint(load_checkpoint(checkpoint_path));
}

}  // namespace fsvt

#pragma once

// On-disk dataset: <root>/manifest.json plus <root>/<split>/<seed>.sample/
// bundles holding 8-bit PNG rasters, FLO1 flows and a small meta.json.

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fsvt/synth.hpp"

namespace fsvt {

using json = nlohmann::json;

inline json to_json(const AugmentSpec& a) {
  return json{{"mode", a.mode_name()}, {"dx", a.dx}, {"dy", a.dy}, {"zoom", a.zoom}};
}

inline AugmentSpec augment_from_json(const json& j) {
  AugmentSpec a;
  a.mode = AugmentSpec::parse_mode(j.at("mode").get<std::string>());
  a.dx = j.value("dx", 0.0);
  a.dy = j.value("dy", 0.0);
  a.zoom = j.value("zoom", 1.0);
  return a;
}

inline json to_json(const DataConfig& c) {
  return json{{"height", c.height},
              {"width", c.width},
              {"levels", c.levels},
              {"max_rotation_deg", c.max_rotation_deg},
              {"min_scale", c.min_scale},
              {"max_scale", c.max_scale},
              {"max_translation", c.max_translation},
              {"wave_amplitude", c.wave_amplitude},
              {"keypoint_sigma", c.keypoint_sigma}};
}

inline DataConfig data_config_from_json(const json& j) {
  DataConfig c;
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.levels = j.value("levels", c.levels);
  c.max_rotation_deg = j.value("max_rotation_deg", c.max_rotation_deg);
  c.min_scale = j.value("min_scale", c.min_scale);
  c.max_scale = j.value("max_scale", c.max_scale);
  c.max_translation = j.value("max_translation", c.max_translation);
  c.wave_amplitude = j.value("wave_amplitude", c.wave_amplitude);
  c.keypoint_sigma = j.value("keypoint_sigma", c.keypoint_sigma);
  return c;
}

inline void save_bundle(const std::filesystem::path& dir, const SyntheticSample& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int H = s.height(), W = s.width();
  save_png((dir / "person.png").string(), s.person);
  save_png((dir / "garment.png").string(), s.garment);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(H) * W), labels(mask.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      mask[static_cast<std::size_t>(y) * W + x] = s.garment_mask.at(0, y, x) >= 0.5f ? 255 : 0;
      int cls = 0;
      for (int c = 0; c < kSegClasses; ++c)
        if (s.semantics.segmentation.at(c, y, x) > 0.5f) cls = c;
      labels[static_cast<std::size_t>(y) * W + x] = static_cast<std::uint8_t>(cls);
    }
  save_label_png((dir / "garment_mask.png").string(), mask, H, W);
  save_label_png((dir / "segmentation.png").string(), labels, H, W);
  flo::save((dir / "gt_flow.flo").string(), s.gt_flow);
  flo::save((dir / "densebody.flo").string(), FlowField<float>(s.semantics.densebody));
  json meta{{"seed", s.seed}, {"keypoints", json::array()}};
  for (const auto& kp : s.semantics.keypoint_xy) meta["keypoints"].push_back({kp[0], kp[1]});
  std::ofstream((dir / "meta.json").string()) << meta.dump(2) << '\n';
}

inline SyntheticSample load_bundle(const std::filesystem::path& dir, double keypoint_sigma) {
  if (!std::filesystem::is_directory(dir)) throw Error("missing_file", "sample bundle not found: " + dir.string());
  SyntheticSample s;
  s.person = load_png((dir / "person.png").string());
  s.garment = load_png((dir / "garment.png").string());
  const int H = s.person.height(), W = s.person.width();
  int h = 0, w = 0;
  auto mask = load_label_png((dir / "garment_mask.png").string(), h, w);
  require(h == H && w == W, "io", "mask size mismatch in " + dir.string());
  s.garment_mask = Tensor<float>(Shape{1, H, W});
  for (std::size_t i = 0; i < mask.size(); ++i) s.garment_mask[i] = mask[i] >= 128 ? 1.0f : 0.0f;
  auto labels = load_label_png((dir / "segmentation.png").string(), h, w);
  s.semantics.segmentation = Tensor<float>(Shape{kSegClasses, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int cls = std::min<int>(labels[static_cast<std::size_t>(y) * W + x], kSegClasses - 1);
      s.semantics.segmentation.at(cls, y, x) = 1;
    }
  s.gt_flow = flo::load((dir / "gt_flow.flo").string());
  s.semantics.densebody = flo::load((dir / "densebody.flo").string()).tensor();
  std::ifstream mf((dir / "meta.json").string());
  if (!mf) throw Error("missing_file", "meta.json missing in " + dir.string());
  const json meta = json::parse(mf);
  s.seed = meta.at("seed").get<std::uint64_t>();
  for (const auto& kp : meta.at("keypoints")) s.semantics.keypoint_xy.push_back({kp[0].get<float>(), kp[1].get<float>()});
  s.semantics.keypoints = keypoint_heatmaps(s.semantics.keypoint_xy, H, W, keypoint_sigma);
  return s;
}

struct Dataset {
  DataConfig config;
  std::uint64_t seed = 0;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
  std::vector<AugmentSpec> test_augments;  // one per test sample
};

// Train seeds are seed, seed+1, ...; test seeds follow them.
inline Dataset generate_dataset(const DataConfig& cfg, std::size_t train_count, std::size_t test_count,
                                std::uint64_t seed) {
  Dataset d;
  d.config = cfg;
  d.seed = seed;
  for (std::size_t i = 0; i < train_count; ++i) d.train.push_back(gen_sample(seed + i, cfg));
  for (std::size_t i = 0; i < test_count; ++i) d.test.push_back(gen_sample(seed + train_count + i, cfg));
  if (test_count >= 3) d.test_augments = eval_augment_plan(test_count, seed, cfg.height, cfg.width);
  else d.test_augments.assign(test_count, AugmentSpec::none());
  return d;
}

inline void write_dataset(const std::filesystem::path& root, const Dataset& d) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  json manifest{{"format", "fsvt-dataset"}, {"version", 1}, {"seed", d.seed}, {"config", to_json(d.config)}};
  json splits = json::object();
  auto dump = [&](const std::string& name, const std::vector<SyntheticSample>& samples,
                  const std::vector<AugmentSpec>* augs) {
    json list = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      save_bundle(root / name / (std::to_string(samples[i].seed) + ".sample"), samples[i]);
      list.push_back({{"seed", samples[i].seed}, {"augment", to_json(augs ? (*augs)[i] : AugmentSpec::none())}});
    }
    splits[name] = list;
  };
  dump("train", d.train, nullptr);
  dump("test", d.test, &d.test_augments);
  manifest["splits"] = splits;
  std::ofstream os((root / "manifest.json").string());
  if (!os) throw Error("io", "cannot write manifest in " + root.string());
  os << manifest.dump(2) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& root) {
  std::ifstream is((root / "manifest.json").string());
  if (!is) throw Error("missing_file", "no manifest.json in " + root.string());
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw Error("io", std::string("malformed manifest: ") + e.what());
  }
  Dataset d;
  d.config = data_config_from_json(manifest.at("config"));
  d.seed = manifest.value("seed", std::uint64_t{0});
  const auto& splits = manifest.at("splits");
  auto load = [&](const std::string& name, std::vector<SyntheticSample>& out, std::vector<AugmentSpec>* augs) {
    if (!splits.contains(name)) return;
    for (const auto& e : splits.at(name)) {
      const auto seed = e.at("seed").get<std::uint64_t>();
      out.push_back(load_bundle(root / name / (std::to_string(seed) + ".sample"), d.config.keypoint_sigma));
      if (augs) augs->push_back(augment_from_json(e.at("augment")));
    }
  };
  load("train", d.train, nullptr);
  load("test", d.test, &d.test_augments);
  return d;
}

}  // namespace fsvt

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fsvt/eval.hpp"
#include "fsvt/plot.hpp"

using namespace fsvt;

namespace {

DataConfig small_data() {
  DataConfig d;
  d.height = 32;
  d.width = 24;
  d.levels = 3;
  return d;
}

ModelConfig small_model(bool sm = true, bool rf = true) {
  ModelConfig c;
  c.height = 32;
  c.width = 24;
  c.encoder.channels = {4, 6, 8};
  c.encoder.style_dim = 8;
  c.flow.hidden = 4;
  c.flow.use_sm = sm;
  c.flow.use_rf = rf;
  c.generator.widths = {4, 6};
  return c;
}

std::vector<SyntheticSample> samples(int n, std::uint64_t first) {
  std::vector<SyntheticSample> d;
  for (int i = 0; i < n; ++i) d.push_back(gen_sample(first + i, small_data()));
  return d;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fsvt_eval_" + name)).string();
}

// Perturbs the zero-initialised flow heads so the estimated flow is nonzero.
void shake(TryOnModel<float>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  m.flow.for_each_param("", [&](const std::string&, Parameter<float>& p) {
    p.value += random_normal<float>(p.value.shape(), rng, 0.05f);
  });
}

}  // namespace

TEST(EvalSuite, ReportHasAllSplitsAndMetrics) {
  auto m = TryOnModel<float>::init(small_model(), 1);
  const auto test = samples(4, 100);
  const EvalReport r = eval_suite(m, "student", test);
  const auto j = r.to_json();
  EXPECT_EQ(j.at("variant"), "SM+RF");
  EXPECT_EQ(j.at("sample_count"), 4);
  EXPECT_EQ(j.at("config_hash").get<std::string>().size(), 16u);
  for (const char* split : {"aligned", "shifted", "zoomed"}) {
    ASSERT_TRUE(j.at("splits").contains(split)) << split;
    const auto& s = j.at("splits").at(split);
    for (const char* key : {"ssim_mean", "epe_mean_px", "epe_masked_px"}) {
      ASSERT_TRUE(s.contains(key)) << split << '.' << key;
      EXPECT_TRUE(std::isfinite(s.at(key).get<double>()));
    }
    EXPECT_EQ(s.at("count"), 4);
  }
  for (const char* split : {"shifted", "zoomed"})
    for (const char* key : {"ssim_mean", "epe_mean_px", "epe_masked_px"}) {
      const double v = j.at("degradation").at(split).at(key).get<double>();
      EXPECT_TRUE(std::isfinite(v) && v > 0) << split << '.' << key;
    }
  const double want = r.splits.at("shifted").epe_masked_px / r.splits.at("aligned").epe_masked_px;
  EXPECT_NEAR(r.degradation.at("shifted").epe_masked_px, want, 1e-6 * want);
}

TEST(EvalSuite, JsonRoundTrip) {
  auto m = TryOnModel<float>::init(small_model(false, true), 2);
  const EvalReport r = eval_suite(m, "student", samples(3, 10));
  const EvalReport back = EvalReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.variant, "RF");
}

TEST(EvalSuite, PureFunctionOfModelDataAndSeed) {
  auto m = TryOnModel<float>::init(small_model(), 3);
  shake(m, 4);
  const auto test = samples(3, 20);
  EvalOptions opt;
  opt.seed = 9;
  const auto a = eval_suite(m, "student", test, opt).to_json().dump();
  EXPECT_EQ(eval_suite(m, "student", test, opt).to_json().dump(), a);
  auto reversed = test;
  std::reverse(reversed.begin(), reversed.end());
  const auto r = eval_suite(m, "student", reversed, opt);
  const auto b = eval_suite(m, "student", test, opt);
  EXPECT_NEAR(r.splits.at("shifted").epe_masked_px, b.splits.at("shifted").epe_masked_px, 1e-9);
  opt.seed = 10;
  EXPECT_NE(eval_suite(m, "student", test, opt).splits.at("shifted").epe_masked_px,
            b.splits.at("shifted").epe_masked_px);
}

TEST(EvalSuite, OracleFlowHasZeroEpe) {
  auto m = TryOnModel<float>::init(small_model(), 5);
  shake(m, 6);
  EvalOptions opt;
  opt.oracle_flow = true;
  const EvalReport r = eval_suite(m, "student", samples(3, 30), opt);
  EXPECT_EQ(r.variant, "SM+RF/oracle-flow");
  for (const auto& [name, s] : r.splits) {
    EXPECT_EQ(s.epe_mean_px, 0.0) << name;
    EXPECT_EQ(s.epe_masked_px, 0.0) << name;
    EXPECT_LE(s.ssim_mean, 1.0);
  }
  EXPECT_DOUBLE_EQ(r.degradation.at("shifted").epe_masked_px, 1.0);
}

TEST(EvalSuite, UntrainedIdentityFlowEpeEqualsGroundTruthMagnitude) {
  auto m = TryOnModel<float>::init(small_model(), 7);
  const auto test = samples(3, 40);
  const EvalReport r = eval_suite(m, "student", test);
  double want = 0;
  for (const auto& s : test) want += epe(FlowField<float>(s.height(), s.width()), s.gt_flow, s.garment_mask);
  EXPECT_NEAR(r.splits.at("aligned").epe_masked_px, want / test.size(), 1e-9);
}

TEST(EvalSuite, TeacherCheckpointsUseSemantics) {
  ModelConfig mc = small_model();
  mc.person_channels = kSemanticChannels;
  auto m = TryOnModel<float>::init(mc, 8);
  const EvalReport r = eval_suite(m, "teacher", samples(3, 50));
  EXPECT_EQ(r.stage, "teacher");
  EXPECT_TRUE(std::isfinite(r.splits.at("zoomed").ssim_mean));
}

TEST(EvalSuite, ResolutionMismatchIsRejected) {
  ModelConfig mc = small_model();
  mc.height = 64;
  mc.width = 48;
  auto m = TryOnModel<float>::init(mc, 1);
  try {
    eval_suite(m, "student", samples(3, 0));
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "checkpoint_mismatch");
  }
}

TEST(SplitAugment, ModesAndBounds) {
  const auto s = samples(1, 3)[0];
  EXPECT_EQ(split_augment("aligned", s, 1), AugmentSpec::none());
  const auto sh = split_augment("shifted", s, 1);
  EXPECT_EQ(sh.mode, AugmentSpec::Mode::shift);
  EXPECT_GE(std::abs(sh.dx), s.width() / 8.0 - 0.5);
  EXPECT_LE(std::abs(sh.dx), s.width() / 4.0 + 0.5);
  const auto z = split_augment("zoomed", s, 1);
  EXPECT_EQ(z.mode, AugmentSpec::Mode::zoom);
  EXPECT_EQ(split_augment("zoomed", s, 1), z);
  EXPECT_THROW(split_augment("rotated", s, 1), Error);
}

TEST(AblationSweep, EmitsThreeVariantReports) {
  ModelConfig tc = small_model();
  tc.person_channels = kSemanticChannels;
  auto teacher = TryOnModel<float>::init(tc, 9);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.decay_start_epoch = 0;
  cfg.batch_size = 2;
  cfg.model = small_model();
  auto pre = TryOnModel<float>::init(small_model(), 10);
  const auto reports = ablation_sweep(teacher, samples(4, 60), samples(3, 70), cfg, {}, {{"SM+RF", &pre}});
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports[0].variant, "RF");
  EXPECT_EQ(reports[1].variant, "SM");
  EXPECT_EQ(reports[2].variant, "SM+RF");
  EXPECT_EQ(reports[2].to_json(), eval_suite(pre, "student", samples(3, 70)).to_json());
}

TEST(Plot, GridLayout) {
  const auto s = samples(2, 80);
  auto m = TryOnModel<float>::init(small_model(), 11);
  std::vector<GridRow> rows;
  for (const auto& x : s) {
    const auto r = infer(m, x);
    rows.push_back({x.person, x.garment, r.warped, r.tryon});
  }
  const Image g = tryon_grid(rows);
  EXPECT_EQ(g.shape(), (Shape{3, 2 * 32 + 3 * 2, 4 * 24 + 5 * 2}));
  EXPECT_EQ(g.at(0, 2, 2 + 24 + 2), s[0].garment.at(0, 0, 0));
  EXPECT_EQ(g.at(1, 2 + 32 + 2 + 5, 2 + 7), s[1].person.at(1, 5, 7));
  EXPECT_EQ(g.at(2, 0, 0), 1.0f);
  rows[1].warped = Image(Shape{3, 16, 16});
  EXPECT_THROW(tryon_grid(rows), Error);
}

TEST(Plot, LossCurvePng) {
  std::vector<LossRecord> curve;
  for (int e = 0; e < 5; ++e)
    for (int s = 0; s < 3; ++s) curve.push_back({e, s, 1.0 / (e + 1), 0.5 / (e + 1), 0.01, 0.0, 1.5 / (e + 1)});
  const auto path = temp_path("curve.png");
  plot_loss_curves(path, curve, 200, 300);
  int h = 0, w = 0;
  const auto px = read_png_bytes(path, h, w, 3);
  EXPECT_EQ(h, 200);
  EXPECT_EQ(w, 300);
  std::size_t dark = 0;
  for (std::size_t i = 0; i < px.size(); i += 3) dark += px[i] < 128 && px[i + 1] < 128 && px[i + 2] < 128;
  EXPECT_GT(dark, 200u);
  std::filesystem::remove(path);
  EXPECT_THROW(plot_loss_curves(path, {}), Error);
}

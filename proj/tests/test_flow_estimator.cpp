#include <gtest/gtest.h>

#include <random>

#include "fsvt/flow_estimator.hpp"
#include "fsvt/losses.hpp"
#include "fsvt/synth.hpp"
#include "test_util.hpp"

using namespace fsvt;
using fsvt::testing::checked_binder;
using fsvt::testing::kFloatStep;
using fsvt::testing::kKinkTol;
using fsvt::testing::kMaxSkipped;
using fsvt::testing::perturb_params;
using fsvt::testing::randomize_params;
using fsvt::testing::zero_params;

namespace {

constexpr int kStyle = 6;

WarpBlockParams<float> make_block(int channels, bool sm, bool rf, std::uint64_t seed) {
  FlowConfig cfg;
  cfg.hidden = 5;
  cfg.use_sm = sm;
  cfg.use_rf = rf;
  std::mt19937_64 rng(seed);
  return WarpBlockParams<float>::init(channels, kStyle, cfg, rng);
}

struct BlockInputs {
  Tensor<float> g, p, prev, s;

  BlockInputs(int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    g = random_normal<float>(Shape{c, h, w}, rng);
    p = random_normal<float>(Shape{c, h, w}, rng);
    prev = random_uniform<float>(Shape{2, h / 2, w / 2}, rng, -0.7f, 0.7f);
    s = random_normal<float>(Shape{kStyle}, rng);
  }
};

BlockOutput<float> run_block(Tape<float>& tape, WarpBlockParams<float>& params, const BlockInputs& in, bool first) {
  return warp_block(tape.constant(in.g), tape.constant(in.p), first ? Var<float>() : tape.constant(in.prev),
                    tape.constant(in.s), params, Binder<float>::frozen(tape));
}

// Toy three-level pyramids at 8x6.
struct CascadeInputs {
  std::vector<Tensor<float>> p, g;
  Tensor<float> s;

  explicit CascadeInputs(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int sizes[3][2] = {{8, 6}, {4, 3}, {2, 1}};
    for (const auto& hw : sizes) {
      p.push_back(random_normal<float>(Shape{3, hw[0], hw[1]}, rng));
      g.push_back(random_normal<float>(Shape{3, hw[0], hw[1]}, rng));
    }
    s = random_normal<float>(Shape{kStyle}, rng);
  }
};

template <class T = float>
FlowEstimatorParams<T> make_estimator(std::uint64_t seed, bool sm = true, bool rf = true) {
  FlowConfig cfg;
  cfg.hidden = 4;
  cfg.use_sm = sm;
  cfg.use_rf = rf;
  std::mt19937_64 rng(seed);
  return FlowEstimatorParams<T>::init({3, 3, 3}, kStyle, cfg, rng);
}

}  // namespace

TEST(WarpBlock, FirstBlockCoarseFlowIgnoresPersonFeatures) {
  auto params = make_block(4, true, true, 1);
  randomize_params<float>(params, 2);
  BlockInputs in(4, 2, 1, 3);
  Tape<float> tape(false);
  const auto a = run_block(tape, params, in, true);
  BlockInputs zeroed = in;
  zeroed.p.fill(0);
  const auto b = run_block(tape, params, zeroed, true);
  EXPECT_EQ(a.coarse.value(), b.coarse.value());
  EXPECT_FALSE(a.flow.value() == b.flow.value());  // the refinement does see p_N
}

TEST(WarpBlock, ZeroHeadsPassPreviousFlowThrough) {
  auto params = make_block(3, true, true, 4);
  zero_params<float>(params);
  BlockInputs in(3, 4, 6, 5);
  Tape<float> tape(false);
  const auto out = run_block(tape, params, in, false);
  const auto up = upsample_flow(tape.constant(in.prev)).value();
  EXPECT_EQ(out.coarse.value(), up);
  EXPECT_EQ(out.flow.value(), up);
}

TEST(WarpBlock, FreshInitIsPassThrough) {
  auto params = make_block(3, true, true, 6);
  BlockInputs in(3, 4, 6, 7);
  Tape<float> tape(false);
  EXPECT_EQ(run_block(tape, params, in, false).flow.value(), upsample_flow(tape.constant(in.prev)).value());
}

TEST(WarpBlock, UsesResizeWhenLevelIsNotAnExactDoubling) {
  auto params = make_block(3, true, true, 8);
  zero_params<float>(params);
  BlockInputs in(3, 4, 3, 9);  // previous level is 2x1
  ASSERT_EQ(in.prev.shape(), (Shape{2, 2, 1}));
  Tape<float> tape(false);
  const auto out = run_block(tape, params, in, false);
  EXPECT_EQ(out.flow.value(), resize_flow(tape.constant(in.prev), 4, 3).value());
}

TEST(WarpBlock, CoarseDependsOnStyleAndRefinementOnPerson) {
  auto params = make_block(3, true, true, 10);
  randomize_params<float>(params, 11);
  BlockInputs in(3, 4, 6, 12);
  Tape<float> tape(false);
  const auto base = run_block(tape, params, in, false);
  BlockInputs s2 = in;
  s2.s[0] += 0.5f;
  EXPECT_FALSE(run_block(tape, params, s2, false).coarse.value() == base.coarse.value());
  BlockInputs p2 = in;
  p2.p[5] += 0.5f;
  const auto out_p = run_block(tape, params, p2, false);
  EXPECT_EQ(out_p.coarse.value(), base.coarse.value());
  EXPECT_FALSE(out_p.flow.value() == base.flow.value());
}

TEST(WarpBlock, AblationSwitchesDropHeads) {
  auto rf_only = make_block(3, false, true, 13);
  auto sm_only = make_block(3, true, false, 13);
  int n_rf = 0, n_sm = 0;
  rf_only.for_each_param("", [&](const std::string& n, Parameter<float>&) {
    ++n_rf;
    EXPECT_EQ(n.rfind("rf_", 0), 0u) << n;
  });
  sm_only.for_each_param("", [&](const std::string& n, Parameter<float>&) {
    ++n_sm;
    EXPECT_EQ(n.rfind("sm_", 0), 0u) << n;
  });
  EXPECT_EQ(n_rf, 4);
  EXPECT_EQ(n_sm, 8);

  randomize_params<float>(rf_only, 14);
  randomize_params<float>(sm_only, 15);
  BlockInputs in(3, 4, 6, 16);
  Tape<float> tape(false);
  const auto up = upsample_flow(tape.constant(in.prev)).value();
  EXPECT_EQ(run_block(tape, rf_only, in, false).coarse.value(), up);
  const auto sm = run_block(tape, sm_only, in, false);
  EXPECT_EQ(sm.flow.value(), sm.coarse.value());
}

TEST(WarpBlock, RejectsMismatchedResolutions) {
  auto params = make_block(3, true, true, 17);
  BlockInputs in(3, 4, 6, 18);
  Tape<float> tape(false);
  BlockInputs bad = in;
  bad.p = Tensor<float>(Shape{3, 4, 4});
  EXPECT_THROW(run_block(tape, params, bad, false), Error);
  bad = in;
  bad.prev = Tensor<float>(Shape{2, 4, 6});
  EXPECT_THROW(run_block(tape, params, bad, false), Error);
}

TEST(WarpBlock, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {20u, 21u, 22u}) {
    auto params = make_block(3, true, true, seed);
    perturb_params<float>(params, seed + 100);
    BlockInputs in(3, 4, 6, seed + 200);
    ASSERT_EQ(in.prev.shape(), (Shape{2, 2, 3}));
    GradCheck<float> gc(
        [&](Tape<float>& tape, const auto& x) {
          return warp_block(x("g_feat", in.g), x("p_feat", in.p), x("prev", in.prev), x("s", in.s), params,
                            checked_binder<float>(tape, params, x))
              .flow;
        },
        seed);
    auto r = gc.run(kFloatStep, 32, kKinkTol);
    EXPECT_LT(r.max_rel_error, 1e-2) << "seed " << seed << " worst " << r.worst;
    EXPECT_LE(r.skipped_fraction(), kMaxSkipped);
    for (const char* name : {"g_feat", "p_feat", "s"}) EXPECT_GT(r.rel_error.count(name), 0u);
  }
}

TEST(EstimateFlow, ShapeScheduleAt64x48) {
  FlowConfig cfg;
  cfg.hidden = 4;
  std::mt19937_64 rng(1);
  const std::vector<int> ch{2, 2, 2, 2, 2};
  auto params = FlowEstimatorParams<float>::init(ch, kStyle, cfg, rng);
  randomize_params<float>(params, 2, 0.1);
  Tape<float> tape(false);
  FeaturePyramid<float> pp, pg;
  int h = 64, w = 48;
  for (int i = 0; i < 5; ++i) {
    h /= 2;
    w /= 2;
    pp.levels.push_back(tape.constant(random_normal<float>(Shape{2, h, w}, rng)));
    pg.levels.push_back(tape.constant(random_normal<float>(Shape{2, h, w}, rng)));
  }
  auto casc = estimate_flow(pp, pg, tape.constant(random_normal<float>(Shape{kStyle}, rng)), params,
                            Binder<float>::frozen(tape));
  ASSERT_EQ(casc.size(), 5);
  const int expect[5][2] = {{2, 1}, {4, 3}, {8, 6}, {16, 12}, {32, 24}};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(casc.flows[i].shape(), (Shape{2, expect[i][0], expect[i][1]})) << i;
  EXPECT_TRUE(FlowField<float>(casc.final().value()).sane());
}

TEST(EstimateFlow, ZeroParamsGiveZeroFlow) {
  auto params = make_estimator(3);
  zero_params<float>(params);
  CascadeInputs in(4);
  Tape<float> tape(false);
  FeaturePyramid<float> pp, pg;
  for (int i = 0; i < 3; ++i) {
    pp.levels.push_back(tape.constant(in.p[i]));
    pg.levels.push_back(tape.constant(in.g[i]));
  }
  auto casc = estimate_flow(pp, pg, tape.constant(in.s), params, Binder<float>::frozen(tape));
  for (const auto& f : casc.flows) {
    const auto v = f.value();
    for (float x : v.values()) EXPECT_EQ(x, 0.0f);
  }
}

TEST(EstimateFlow, RejectsLevelCountMismatch) {
  auto params = make_estimator(5);
  CascadeInputs in(6);
  Tape<float> tape(false);
  FeaturePyramid<float> pp, pg;
  for (int i = 0; i < 3; ++i) pg.levels.push_back(tape.constant(in.g[i]));
  for (int i = 0; i < 2; ++i) pp.levels.push_back(tape.constant(in.p[i]));
  try {
    estimate_flow(pp, pg, tape.constant(in.s), params, Binder<float>::frozen(tape));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "level_mismatch");
  }
}

// Through three levels a float central difference straddles many bilinear
// cell boundaries at once, so this check runs in double with a tiny step.
TEST(EstimateFlow, FullCascadeGradientsMatchFiniteDifferences) {
  for (auto [sm, rf] : {std::pair{true, true}, std::pair{true, false}, std::pair{false, true}}) {
    auto params = make_estimator<double>(30, sm, rf);
    perturb_params<double>(params, 31);
    CascadeInputs in(32);
    std::vector<Tensor<double>> p, g;
    for (int i = 0; i < 3; ++i) {
      p.push_back(in.p[i].cast<double>());
      g.push_back(in.g[i].cast<double>());
    }
    auto s = in.s.cast<double>();
    GradCheck<double> gc(
        [&](Tape<double>& tape, const auto& x) {
          FeaturePyramid<double> pp, pg;
          for (int i = 0; i < 3; ++i) {
            pp.levels.push_back(x("p" + std::to_string(i), p[i]));
            pg.levels.push_back(x("g" + std::to_string(i), g[i]));
          }
          return estimate_flow(pp, pg, x("s", s), params, checked_binder<double>(tape, params, x))
              .final();
        },
        33);
    auto r = gc.run(1e-6, 24);
    EXPECT_LT(r.max_rel_error, 1e-5) << "sm=" << sm << " rf=" << rf << " worst " << r.worst;
    EXPECT_TRUE(r.any_nonzero);
  }
}

TEST(EstimateFlow, GarmentLossSendsGradientToStyle) {
  auto params = make_estimator(40);
  randomize_params<float>(params, 41, 0.3);
  CascadeInputs in(42);
  std::mt19937_64 rng(43);
  auto garment = random_uniform<float>(Shape{3, 16, 12}, rng, -1.0f, 1.0f);
  auto person = random_uniform<float>(Shape{3, 16, 12}, rng, -1.0f, 1.0f);
  Tensor<float> mask(Shape{1, 16, 12}, 1.0f);
  Tape<float> tape;
  FeaturePyramid<float> pp, pg;
  for (int i = 0; i < 3; ++i) {
    pp.levels.push_back(tape.constant(in.p[i]));
    pg.levels.push_back(tape.constant(in.g[i]));
  }
  Var<float> s = tape.leaf(in.s);
  auto casc = estimate_flow(pp, pg, s, params, Binder<float>::frozen(tape));
  auto loss = garment_loss(warp_garment(tape.constant(garment), casc.final()), mask, person);
  tape.backward(loss);
  const auto gs = tape.grad(s);
  double norm = 0;
  for (float v : gs.values()) norm += static_cast<double>(v) * v;
  EXPECT_GT(norm, 1e-12);
}

TEST(WarpGarment, ZeroFlowIsIdentity) {
  std::mt19937_64 rng(1);
  auto g = random_uniform<float>(Shape{3, 8, 6}, rng, -1.0f, 1.0f);
  Tape<float> tape(false);
  EXPECT_EQ(warp_garment(tape.constant(g), tape.constant(Tensor<float>(Shape{2, 4, 3}))).value(), g);
}

TEST(WarpGarment, ConstantShiftMatchesIndexOracle) {
  std::mt19937_64 rng(2);
  auto g = random_uniform<float>(Shape{3, 8, 10}, rng, -1.0f, 1.0f);
  Tape<float> tape(false);
  const auto out =
      warp_garment(tape.constant(g), tape.constant(FlowField<float>::constant(8, 10, 4, 0).tensor())).value();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 10; ++x) EXPECT_EQ(out.at(c, y, x), g.at(c, y, std::min(x + 4, 9)));
}

TEST(WarpGarment, HalfResolutionFlowIsUpsampledFirst) {
  std::mt19937_64 rng(3);
  auto g = random_uniform<float>(Shape{3, 8, 10}, rng, -1.0f, 1.0f);
  Tape<float> tape(false);
  // A constant (2, 0) flow at half resolution is (4, 0) at full resolution.
  const auto a =
      warp_garment(tape.constant(g), tape.constant(FlowField<float>::constant(4, 5, 2, 0).tensor())).value();
  const auto b =
      warp_garment(tape.constant(g), tape.constant(FlowField<float>::constant(8, 10, 4, 0).tensor())).value();
  EXPECT_EQ(a, b);
}

TEST(WarpGarment, GroundTruthFlowReproducesPersonUnderMask) {
  const DataConfig cfg;
  const auto s = gen_sample(0, cfg);
  Tape<float> tape(false);
  const auto out = warp_garment(tape.constant(s.garment), tape.constant(s.gt_flow.tensor())).value();
  double worst = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s.height(); ++y)
      for (int x = 0; x < s.width(); ++x)
        if (s.garment_mask.at(0, y, x) != 0)
          worst = std::max(worst, std::abs(static_cast<double>(out.at(c, y, x)) - s.person.at(c, y, x)));
  EXPECT_LE(worst, 1e-3);
}

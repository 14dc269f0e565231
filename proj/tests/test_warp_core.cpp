#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fsvt/gradcheck.hpp"
#include "fsvt/warp.hpp"

using namespace fsvt;

namespace {

Tensor<float> row(std::vector<float> v) {
  const int n = static_cast<int>(v.size());
  return Tensor<float>(Shape{1, 1, n}, std::move(v));
}

Tensor<float> const_flow(int h, int w, float dx, float dy) { return FlowField<float>::constant(h, w, dx, dy).tensor(); }

// Tent-kernel form of clamped bilinear reading, written independently of the
// floor/fraction implementation.
double tent_read(const Tensor<double>& src, int c, double X, double Y) {
  X = std::clamp(X, 0.0, src.width() - 1.0);
  Y = std::clamp(Y, 0.0, src.height() - 1.0);
  double s = 0;
  for (int j = 0; j < src.height(); ++j)
    for (int i = 0; i < src.width(); ++i)
      s += std::max(0.0, 1 - std::abs(X - i)) * std::max(0.0, 1 - std::abs(Y - j)) * src.at(c, j, i);
  return s;
}

template <class T>
Tensor<T> sample(const Tensor<T>& src, const Tensor<T>& flow) {
  Tape<T> tape(false);
  return bilinear_sample(tape.constant(src), tape.constant(flow)).value();
}

template <class T>
Tensor<T> upsample(const Tensor<T>& flow) {
  Tape<T> tape(false);
  return upsample_flow(tape.constant(flow)).value();
}

}  // namespace

TEST(BilinearSample, ZeroFlowIsIdentity) {
  std::mt19937_64 rng(1);
  auto src = random_normal<float>(Shape{3, 5, 4}, rng);
  EXPECT_EQ(sample(src, const_flow(5, 4, 0, 0)), src);
}

TEST(BilinearSample, UnitShiftClampsAtBorder) {
  auto out = sample(row({0, 1, 2, 3}), const_flow(1, 4, 1, 0));
  EXPECT_EQ(out.to_vector(), (std::vector<float>{1, 2, 3, 3}));
}

TEST(BilinearSample, HalfPixelInterpolates) {
  auto out = sample(row({0, 1, 2, 3}), const_flow(1, 4, 0.5f, 0));
  EXPECT_EQ(out.to_vector(), (std::vector<float>{0.5f, 1.5f, 2.5f, 3.0f}));
}

TEST(BilinearSample, IntegerFlowIsExactShift) {
  std::mt19937_64 rng(2);
  auto src = random_normal<float>(Shape{2, 6, 7}, rng);
  auto out = sample(src, const_flow(6, 7, -2, 1));
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 7; ++x) {
        const int sx = std::clamp(x - 2, 0, 6), sy = std::clamp(y + 1, 0, 5);
        EXPECT_EQ(out.at(c, y, x), src.at(c, sy, sx));
      }
}

TEST(BilinearSample, MatchesTentKernelOracle) {
  std::mt19937_64 rng(3);
  auto src = random_normal<double>(Shape{2, 6, 5}, rng);
  auto flow = random_uniform<double>(Shape{2, 6, 5}, rng, -3.0, 3.0);
  auto out = sample(src, flow);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 5; ++x)
        EXPECT_NEAR(out.at(c, y, x), tent_read(src, c, x + flow.at(0, y, x), y + flow.at(1, y, x)), 1e-12);
}

TEST(BilinearSample, RejectsShapeMismatch) {
  Tape<float> tape;
  auto src = tape.constant(Tensor<float>(Shape{3, 4, 4}));
  auto flow = tape.constant(Tensor<float>(Shape{2, 4, 5}));
  EXPECT_THROW(bilinear_sample(src, flow), Error);
}

TEST(UpsampleFlow, ConstantScalesByTwo) {
  auto up = upsample(const_flow(2, 2, 1, 0));
  ASSERT_EQ(up.shape(), (Shape{2, 4, 4}));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      EXPECT_FLOAT_EQ(up.at(0, y, x), 2.0f);
      EXPECT_FLOAT_EQ(up.at(1, y, x), 0.0f);
    }
}

TEST(UpsampleFlow, ZeroStaysZero) {
  auto up = upsample(const_flow(3, 2, 0, 0));
  for (float v : up.values()) EXPECT_EQ(v, 0.0f);
}

TEST(UpsampleFlow, HalfPixelCentresConvention) {
  Tensor<float> f(Shape{2, 1, 2});
  f.at(0, 0, 1) = 1;
  auto up = upsample(f);
  ASSERT_EQ(up.shape(), (Shape{2, 2, 4}));
  const float expect[4] = {0, 0.5f, 1.5f, 2};
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_FLOAT_EQ(up.at(0, y, x), expect[x]);
}

TEST(UpsampleFlow, MatchesDirectFormulaOracle) {
  std::mt19937_64 rng(4);
  auto f = random_normal<double>(Shape{2, 3, 5}, rng);
  auto up = upsample(f);
  // out(X) = 2 * tent interpolation at source coordinate (X + 0.5) / 2 - 0.5.
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 10; ++x) {
        const double sx = std::max(0.0, (x + 0.5) / 2 - 0.5), sy = std::max(0.0, (y + 0.5) / 2 - 0.5);
        EXPECT_NEAR(up.at(c, y, x), 2 * tent_read(f, c, sx, sy), 1e-12);
      }
}

TEST(UpsampleFlow, TwiceEqualsFourTimesForConstantFlow) {
  auto twice = upsample(upsample(const_flow(2, 3, 0.75f, -1.25f)));
  Tape<float> tape(false);
  auto once = resize_flow(tape.constant(const_flow(2, 3, 0.75f, -1.25f)), 8, 12).value();
  EXPECT_LT(max_abs_diff(twice, once), 1e-5f);
}

TEST(ResizeFlow, OddTargetScalesEachAxis) {
  Tape<float> tape(false);
  auto out = resize_flow(tape.constant(const_flow(2, 1, 1.0f, 1.0f)), 4, 3).value();
  ASSERT_EQ(out.shape(), (Shape{2, 4, 3}));
  EXPECT_FLOAT_EQ(out.at(0, 2, 1), 3.0f);
  EXPECT_FLOAT_EQ(out.at(1, 2, 1), 2.0f);
}

namespace {

template <class T>
ModConvParams<T> random_modconv(int in, int out, int k, int style, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = ModConvParams<T>::init(in, out, k, style, rng);
  p.bias.value = random_normal<T>(Shape{out}, rng, T(0.1));
  p.affine_b.value = random_uniform<T>(Shape{in}, rng, T(0.5), T(1.5));
  return p;
}

template <class T>
Tensor<T> run_modconv(const Tensor<T>& x, const Tensor<T>& s, ModConvParams<T>& p) {
  Tape<T> tape(false);
  auto b = Binder<T>::frozen(tape);
  return modulated_conv(tape.constant(x), tape.constant(s), bind(p, b)).value();
}

}  // namespace

TEST(ModulatedConv, ZeroInputZeroBiasGivesZero) {
  auto p = random_modconv<float>(3, 4, 3, 8, 5);
  p.bias.value.fill(0);
  std::mt19937_64 rng(6);
  auto out = run_modconv(Tensor<float>(Shape{3, 5, 4}), random_normal<float>(Shape{8}, rng), p);
  for (float v : out.values()) EXPECT_EQ(v, 0.0f);
}

TEST(ModulatedConv, UnitKernelDemodulatesToInput) {
  ModConvParams<float> p;
  p.kernel = Parameter<float>(Tensor<float>(Shape{1, 1, 1, 1}, 1.0f));
  p.affine_w = Parameter<float>(Tensor<float>(Shape{1, 1}));
  p.affine_b = Parameter<float>(Tensor<float>(Shape{1}, 1.0f));
  p.bias = Parameter<float>(Tensor<float>(Shape{1}));
  p.eps = 1e-8f;
  std::mt19937_64 rng(7);
  auto x = random_normal<float>(Shape{1, 4, 3}, rng);
  auto out = run_modconv(x, Tensor<float>(Shape{1}, 0.3f), p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out[i], x[i], 1e-6);
}

TEST(ModulatedConv, GlobalModulationScaleInvariance) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    auto p = random_modconv<float>(4, 3, 3, 6, seed);
    std::mt19937_64 rng(seed + 100);
    auto x = random_normal<float>(Shape{4, 5, 5}, rng);
    auto s = random_normal<float>(Shape{6}, rng);
    auto base = run_modconv(x, s, p);
    p.affine_w.value *= 3.0f;
    p.affine_b.value *= 3.0f;
    auto scaled = run_modconv(x, s, p);
    EXPECT_LT(max_abs_diff(base, scaled), 1e-5f) << "seed " << seed;
  }
}

TEST(ModulatedConv, MatchesDirectLoopOracle) {
  auto p = random_modconv<double>(3, 2, 3, 5, 21);
  std::mt19937_64 rng(22);
  auto x = random_normal<double>(Shape{3, 4, 5}, rng);
  auto s = random_normal<double>(Shape{5}, rng);
  auto out = run_modconv(x, s, p);
  std::vector<double> m(3);
  for (int i = 0; i < 3; ++i) {
    m[i] = p.affine_b.value[i];
    for (int j = 0; j < 5; ++j) m[i] += p.affine_w.value[i * 5 + j] * s[j];
  }
  const auto& w = p.kernel.value;
  for (int o = 0; o < 2; ++o) {
    double ss = 0;
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 9; ++k) ss += std::pow(w[(o * 3 + i) * 9 + k] * m[i], 2);
    const double d = 1 / std::sqrt(ss + p.eps);
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 5; ++xx) {
        double acc = p.bias.value[o];
        for (int i = 0; i < 3; ++i)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = y + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sy >= 4 || sx < 0 || sx >= 5) continue;
              acc += w[((o * 3 + i) * 3 + ky) * 3 + kx] * m[i] * d * x.at(i, sy, sx);
            }
        EXPECT_NEAR(out.at(o, y, xx), acc, 1e-10);
      }
  }
}

TEST(ModulatedConv, RejectsStyleLengthMismatch) {
  auto p = random_modconv<float>(2, 2, 3, 4, 23);
  EXPECT_THROW(run_modconv(Tensor<float>(Shape{2, 3, 3}), Tensor<float>(Shape{5}), p), Error);
}

namespace {

template <class T>
T smooth(const Tensor<T>& f) {
  Tape<T> tape(false);
  return charbonnier_smoothness(tape.constant(f)).value()[0];
}

}  // namespace

TEST(Charbonnier, ConstantFlowHitsFloorWithZeroGradient) {
  Tape<float> tape;
  auto f = tape.leaf(const_flow(4, 5, 1.5f, -2.0f));
  auto v = charbonnier_smoothness(f);
  EXPECT_NEAR(v.value()[0], std::pow(1e-6, 0.45), 1e-7);
  EXPECT_NEAR(v.value()[0], 1.995e-3, 1e-6);
  tape.backward(v);
  const auto grad = tape.grad(f);
  for (float g : grad.values()) EXPECT_EQ(g, 0.0f);
}

TEST(Charbonnier, UnitRampAlongX) {
  // Only dx varies, linearly in x: the x-differences of dx are all 1.
  Tensor<double> f(Shape{2, 4, 5});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) f.at(0, y, x) = x;
  const double floor = std::pow(1e-6, 0.45), one = std::pow(1 + 1e-6, 0.45);
  const double n_ramp = 4 * 4, n_total = 2 * (4 * 4 + 3 * 5);
  EXPECT_NEAR(smooth(f), (n_ramp * one + (n_total - n_ramp) * floor) / n_total, 1e-12);
  EXPECT_NEAR(one, 1.0, 1e-5);
}

TEST(Charbonnier, MonotoneInScale) {
  std::mt19937_64 rng(30);
  auto f = random_normal<double>(Shape{2, 5, 4}, rng);
  auto g = f;
  g *= 2.0;
  EXPECT_GT(smooth(g), smooth(f));
}

TEST(Charbonnier, MatchesDirectOracle) {
  std::mt19937_64 rng(31);
  auto f = random_normal<double>(Shape{2, 3, 6}, rng);
  double total = 0;
  int n = 0;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 6; ++x) {
        if (x < 5) total += std::pow(std::pow(f.at(c, y, x + 1) - f.at(c, y, x), 2) + 1e-6, 0.45), ++n;
        if (y < 2) total += std::pow(std::pow(f.at(c, y + 1, x) - f.at(c, y, x), 2) + 1e-6, 0.45), ++n;
      }
  EXPECT_NEAR(smooth(f), total / n, 1e-12);
}

TEST(Charbonnier, SingleColumnFlowUsesVerticalDifferences) {
  EXPECT_NEAR(smooth(const_flow(2, 1, 0.5f, 0.5f)), std::pow(1e-6, 0.45), 1e-7);
  EXPECT_THROW(smooth(const_flow(1, 1, 0, 0)), Error);
}

// ----- gradient checks --------------------------------------------------------

namespace {

template <class T>
GradCheckResult check_sample(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto src = random_normal<T>(Shape{2, 4, 4}, rng);
  auto flow = random_uniform<T>(Shape{2, 4, 4}, rng, T(-1.3), T(1.3));
  GradCheck<T> gc([&](Tape<T>&, const auto& in) { return bilinear_sample(in("src", src), in("flow", flow)); }, seed);
  return gc.run(std::is_same_v<T, float> ? 1e-3 : 1e-6, -1);
}

template <class T>
GradCheckResult check_upsample(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto flow = random_normal<T>(Shape{2, 2, 3}, rng);
  GradCheck<T> gc([&](Tape<T>&, const auto& in) { return upsample_flow(in("flow", flow)); }, seed);
  return gc.run(std::is_same_v<T, float> ? 1e-2 : 1e-6, -1);
}

template <class T>
GradCheckResult check_modconv(std::uint64_t seed, bool demod) {
  auto p = random_modconv<T>(3, 2, 3, 4, seed);
  p.demodulate = demod;
  std::mt19937_64 rng(seed + 1);
  auto x = random_normal<T>(Shape{3, 4, 4}, rng);
  auto s = random_normal<T>(Shape{4}, rng);
  GradCheck<T> gc(
      [&](Tape<T>&, const auto& in) {
        ModConvVars<T> v{in("kernel", p.kernel.value), in("affine_w", p.affine_w.value),
                         in("affine_b", p.affine_b.value), in("bias", p.bias.value), p.eps, p.demodulate};
        return modulated_conv(in("x", x), in("s", s), v);
      },
      seed);
  return gc.run(std::is_same_v<T, float> ? 1e-2 : 1e-6, -1);
}

template <class T>
GradCheckResult check_charbonnier(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto flow = random_normal<T>(Shape{2, 4, 4}, rng);
  GradCheck<T> gc([&](Tape<T>&, const auto& in) { return charbonnier_smoothness(in("flow", flow)); }, seed);
  return gc.run(std::is_same_v<T, float> ? 1e-2 : 1e-6, -1);
}

}  // namespace

TEST(WarpGradients, Float32) {
  for (std::uint64_t seed : {40, 41, 42}) {
    EXPECT_LT(check_sample<float>(seed).max_rel_error, 1e-2);
    EXPECT_LT(check_upsample<float>(seed).max_rel_error, 1e-2);
    EXPECT_LT(check_modconv<float>(seed, true).max_rel_error, 1e-2);
    EXPECT_LT(check_modconv<float>(seed, false).max_rel_error, 1e-2);
    EXPECT_LT(check_charbonnier<float>(seed).max_rel_error, 1e-2);
  }
}

TEST(WarpGradients, Float64) {
  for (std::uint64_t seed : {50, 51}) {
    EXPECT_LT(check_sample<double>(seed).max_rel_error, 1e-4);
    EXPECT_LT(check_upsample<double>(seed).max_rel_error, 1e-4);
    EXPECT_LT(check_modconv<double>(seed, true).max_rel_error, 1e-4);
    EXPECT_LT(check_charbonnier<double>(seed).max_rel_error, 1e-4);
  }
}

TEST(Flo1, RoundTripIsBitExact) {
  std::mt19937_64 rng(60);
  FlowField<float> f(random_normal<float>(Shape{2, 7, 5}, rng, 3.0f));
  f.dx(0, 0) = -0.0f;
  std::stringstream ss;
  flo::write(ss, f);
  EXPECT_EQ(ss.str().size(), 12u + 7 * 5 * 8);
  EXPECT_EQ(ss.str().substr(0, 4), "FLO1");
  const std::string bytes = ss.str();
  auto g = flo::read(ss);
  std::stringstream again;
  flo::write(again, g);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Flo1, HeaderLayoutIsLittleEndian) {
  std::stringstream ss;
  flo::write(ss, FlowField<float>::constant(2, 3, 1.0f, 0.0f));
  const std::string s = ss.str();
  EXPECT_EQ(static_cast<unsigned char>(s[4]), 3);  // width
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 2);  // height
  // 1.0f = 0x3f800000 little-endian.
  EXPECT_EQ(static_cast<unsigned char>(s[15]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(s[14]), 0x80);
}

TEST(Flo1, RejectsBadMagic) {
  std::stringstream ss("PIEH\x01\0\0\0\x01\0\0\0");
  EXPECT_THROW(flo::read(ss), Error);
}

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fsvt/teacher.hpp"

using namespace fsvt;

namespace {

DataConfig small_data() {
  DataConfig d;
  d.height = 32;
  d.width = 24;
  d.levels = 3;
  return d;
}

ModelConfig small_model(int person_channels = 3) {
  ModelConfig c;
  c.height = 32;
  c.width = 24;
  c.person_channels = person_channels;
  c.encoder.channels = {4, 6, 8};
  c.encoder.style_dim = 8;
  c.flow.hidden = 4;
  c.generator.widths = {4, 6};
  return c;
}

TryOnModel<float> small_teacher(std::uint64_t seed = 1) {
  return TryOnModel<float>::init(small_model(kSemanticChannels), seed);
}

Forward<float> run_teacher(Tape<float>& tape, TryOnModel<float>& m, const SyntheticSample& s) {
  return teacher_forward(m, teacher_input(s), tape.constant(s.garment), Binder<float>::frozen(tape));
}

}  // namespace

TEST(TeacherForward, ProducesTryOnImageAndFullCascade) {
  auto teacher = small_teacher();
  auto s = gen_sample(3, small_data());
  Tape<float> tape(false);
  auto f = run_teacher(tape, teacher, s);
  EXPECT_EQ(f.tryon.shape(), (Shape{3, 32, 24}));
  EXPECT_EQ(f.flow.shape(), (Shape{2, 32, 24}));
  EXPECT_EQ(f.cascade.size(), 3);
  EXPECT_EQ(f.pyr_p.size(), 3);
}

TEST(TeacherInput, GarmentClassIsFlippedToBackground) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = gen_sample(seed, small_data());
    const auto in = teacher_input(s);
    ASSERT_EQ(in.semantics.channels(), kSemanticChannels);
    const int g = static_cast<int>(SegClass::garment);
    double garment = 0, background = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 24; ++x) {
        garment += in.semantics.at(g, y, x);
        background += in.semantics.at(static_cast<int>(SegClass::background), y, x);
      }
    EXPECT_EQ(garment, 0.0) << seed;
    EXPECT_GT(background, 0.0);
  }
}

TEST(TeacherInput, RejectsUnflippedSegmentation) {
  auto s = gen_sample(4, small_data());
  s.semantics.segmentation.at(static_cast<int>(SegClass::garment), 10, 10) = 1.0f;
  try {
    teacher_input(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "garment_not_flipped");
  }
}

TEST(TeacherInput, PreservedPersonHidesGarmentPixelsOnly) {
  auto s = gen_sample(5, small_data());
  const auto in = teacher_input(s);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 24; ++x) {
        if (s.garment_mask.at(0, y, x) != 0)
          EXPECT_EQ(in.preserved.at(c, y, x), 0.0f);
        else
          EXPECT_EQ(in.preserved.at(c, y, x), s.person.at(c, y, x));
      }
}

TEST(TeacherForward, DeterministicForFixedParams) {
  auto a = small_teacher(7), b = small_teacher(7);
  auto s = gen_sample(8, small_data());
  Tape<float> ta(false), tb(false);
  EXPECT_EQ(run_teacher(ta, a, s).tryon.value(), run_teacher(tb, b, s).tryon.value());
}

TEST(TeacherForward, RejectsStudentArchitecture) {
  auto student = TryOnModel<float>::init(small_model(), 9);
  auto s = gen_sample(10, small_data());
  Tape<float> tape(false);
  try {
    run_teacher(tape, student, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "channel_mismatch");
  }
}

TEST(TeacherForward, CascadeScheduleMatchesStudent) {
  auto teacher = small_teacher(11);
  auto student = TryOnModel<float>::init(small_model(), 12);
  auto s = gen_sample(13, small_data());
  Tape<float> tape(false);
  auto bind = Binder<float>::frozen(tape);
  auto ft = run_teacher(tape, teacher, s);
  auto fs = forward(student, tape.constant(s.person), tape.constant(s.garment), tape.constant(s.person), bind);
  ASSERT_EQ(ft.cascade.size(), fs.cascade.size());
  for (int i = 0; i < fs.cascade.size(); ++i) {
    EXPECT_EQ(ft.cascade.flows[i].shape(), fs.cascade.flows[i].shape()) << i;
    EXPECT_EQ(ft.pyr_p[i].shape(), fs.pyr_p[i].shape()) << i;
  }
}

TEST(Derangement, NoItemKeepsItsPlace) {
  std::mt19937_64 rng(14);
  for (int n = 2; n <= 12; ++n)
    for (int trial = 0; trial < 50; ++trial) {
      const auto perm = derangement(n, rng);
      ASSERT_EQ(static_cast<int>(perm.size()), n);
      EXPECT_EQ(std::set<int>(perm.begin(), perm.end()).size(), static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) EXPECT_NE(perm[i], i);
    }
  EXPECT_THROW(derangement(1, rng), Error);
}

TEST(Derangement, DeterministicForSeed) {
  std::mt19937_64 a(15), b(15);
  EXPECT_EQ(derangement(9, a), derangement(9, b));
}

TEST(MakeStudentInput, TeacherTryOnIsValidImageWithTargets) {
  auto teacher = small_teacher(16);
  auto paired = gen_sample(17, small_data()), unpaired = gen_sample(18, small_data());
  const auto in = make_student_input(paired, unpaired, teacher);
  EXPECT_EQ(in.person.shape(), (Shape{3, 32, 24}));
  for (float v : in.person.values()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  ASSERT_EQ(in.teacher_features.size(), 3u);
  EXPECT_EQ(in.teacher_features[0].shape(), (Shape{4, 16, 12}));
  EXPECT_EQ(in.teacher_features[2].shape(), (Shape{8, 4, 3}));
}

TEST(MakeStudentInput, DependsOnTheUnpairedGarment) {
  auto teacher = small_teacher(19);
  auto paired = gen_sample(20, small_data());
  const auto a = make_student_input(paired, gen_sample(21, small_data()), teacher);
  const auto b = make_student_input(paired, gen_sample(22, small_data()), teacher);
  EXPECT_GT(max_abs_diff(a.person, b.person), 0.0f);
  // The person-encoder targets only see the paired layout.
  for (std::size_t i = 0; i < a.teacher_features.size(); ++i) EXPECT_EQ(a.teacher_features[i], b.teacher_features[i]);
}

TEST(MakeStudentInput, RejectsPairedGarment) {
  auto teacher = small_teacher(23);
  auto s = gen_sample(24, small_data());
  for (const auto& fn : {model_teacher(teacher), oracle_teacher()}) {
    try {
      fn(s, s);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "paired_garment");
    }
  }
}

TEST(MakeStudentInput, OracleTeacherCopiesGroundTruthPerson) {
  auto paired = gen_sample(25, small_data()), unpaired = gen_sample(26, small_data());
  const auto in = oracle_teacher()(paired, unpaired);
  EXPECT_EQ(in.person, paired.person);
  EXPECT_TRUE(in.teacher_features.empty());
}

TEST(MakeStudentInput, LeavesTeacherUntouched) {
  auto teacher = small_teacher(27);
  const auto before = teacher.hash();
  auto paired = gen_sample(28, small_data()), unpaired = gen_sample(29, small_data());
  make_student_input(paired, unpaired, teacher);
  EXPECT_EQ(teacher.hash(), before);
  teacher.for_each_param("", [](const std::string& n, Parameter<float>& p) {
    for (float g : p.grad.values()) ASSERT_EQ(g, 0.0f) << n;
  });
}

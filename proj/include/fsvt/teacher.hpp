#pragma once

#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "fsvt/model.hpp"

namespace fsvt {

// Person pixels outside the garment region; the garment region is zeroed.
inline Image preserved_person(const Image& person, const Tensor<float>& mask) {
  require(mask.rank() == 3 && mask.channels() == 1 && mask.height() == person.height() &&
              mask.width() == person.width(),
          "shape_mismatch", "preserved_person: mask does not match person");
  Image out = person;
  const std::size_t plane = static_cast<std::size_t>(person.height()) * person.width();
  for (int c = 0; c < person.channels(); ++c)
    for (std::size_t i = 0; i < plane; ++i)
      if (mask[i] != 0) out[c * plane + i] = 0;
  return out;
}

// Parser-based inputs derived from a (possibly augmented) sample.
struct TeacherInput {
  Tensor<float> semantics;  // stacked semantic channels, garment class empty
  Image preserved;          // non-garment person pixels
};

inline TeacherInput teacher_input(const SyntheticSample& s) {
  const int garment = static_cast<int>(SegClass::garment);
  const auto& seg = s.semantics.segmentation;
  for (int y = 0; y < seg.height(); ++y)
    for (int x = 0; x < seg.width(); ++x)
      require(seg.at(garment, y, x) == 0, "garment_not_flipped",
              "teacher input: garment region must be relabelled as background");
  return {s.semantics.stacked(), preserved_person(s.person, s.garment_mask)};
}

template <class T, class Bind>
Forward<T> teacher_forward(TryOnModel<T>& teacher, const TeacherInput& in, Var<T> garment, Bind&& bind) {
  require(in.semantics.channels() == teacher.config.person_channels, "channel_mismatch",
          "teacher_forward: model expects " + std::to_string(teacher.config.person_channels) +
              " semantic channels, got " + std::to_string(in.semantics.channels()));
  Tape<T>& tape = *garment.tape();
  return forward(teacher, tape.constant(in.semantics.template cast<T>()), garment,
                 tape.constant(in.preserved.template cast<T>()), bind);
}

// Random cyclic permutation (Sattolo): perm[i] != i for every i.
template <class Rng>
std::vector<int> derangement(int n, Rng& rng) {
  require(n >= 2, "invalid_argument", "a derangement needs at least two items");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  return perm;
}

// What the student sees for one training sample: the person image p and the
// teacher's person-encoder features used as distillation targets.
struct StudentInput {
  Image person;
  std::vector<Tensor<float>> teacher_features;  // empty when no distillation target exists
};

using TeacherFn = std::function<StudentInput(const SyntheticSample& paired, const SyntheticSample& unpaired)>;

// p = teacher try-on of the unpaired garment on the paired person's layout.
inline StudentInput make_student_input(const SyntheticSample& paired, const SyntheticSample& unpaired,
                                       TryOnModel<float>& teacher) {
  require(paired.seed != unpaired.seed, "paired_garment", "student input needs a garment from a different sample");
  Tape<float> tape(false);
  Binder<float> frozen = Binder<float>::frozen(tape);
  Forward<float> f = teacher_forward(teacher, teacher_input(paired), tape.constant(unpaired.garment), frozen);
  StudentInput out;
  out.person = f.tryon.value();
  for (const auto& level : f.pyr_p.levels) out.teacher_features.push_back(level.value());
  return out;
}

inline TeacherFn model_teacher(TryOnModel<float>& teacher) {
  return [&teacher](const SyntheticSample& paired, const SyntheticSample& unpaired) {
    return make_student_input(paired, unpaired, teacher);
  };
}

// Stub teacher that hands back the real person image, making student
// supervision exact. Used to test the pipeline plumbing.
inline TeacherFn oracle_teacher() {
  return [](const SyntheticSample& paired, const SyntheticSample& unpaired) {
    require(paired.seed != unpaired.seed, "paired_garment", "student input needs a garment from a different sample");
    return StudentInput{paired.person, {}};
  };
}

}  // namespace fsvt

#pragma once

// Central finite-difference verification of tape gradients. The checked
// function is projected onto a fixed random direction so every output element
// contributes; the projection is accumulated in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fsvt/autograd.hpp"

namespace fsvt {

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst;  // name of the input with the largest error
  std::map<std::string, double> rel_error;
  bool any_nonzero = false;
  int probes = 0;
  int skipped = 0;  // probes dropped because the step straddled a kink

  double skipped_fraction() const { return probes == 0 ? 0.0 : static_cast<double>(skipped) / probes; }
};

template <class T>
class GradCheck {
 public:
  // fwd(tape, in) builds the function; `in(name, tensor)` puts a checked input
  // on the tape and must be used for every tensor whose gradient is checked.
  using Input = std::function<Var<T>(const std::string&, Tensor<T>&)>;
  using Fwd = std::function<Var<T>(Tape<T>&, const Input&)>;

  explicit GradCheck(Fwd fwd, std::uint64_t seed = 7) : fwd_(std::move(fwd)), seed_(seed) {}

  // step: finite-difference step; max_probes: coordinates sampled per input
  // (all of them when the input is smaller). With kink_tol > 0 a probe is
  // skipped when its forward and backward one-sided slopes differ by more than
  // kink_tol relative to the input's RMS analytic gradient; central
  // differences are meaningless across a kink (ReLU corner, bilinear cell edge,
  // border clamp).
  GradCheckResult run(double step, int max_probes = 64, double kink_tol = 0) {
    const Tensor<T> direction = make_direction(output_shape());
    return compare(analytic(direction), direction, step, max_probes, kink_tol);
  }

  // Gradients of <direction, f> w.r.t. every checked input, by backprop.
  std::map<std::string, Tensor<T>> analytic(const Tensor<T>& direction) {
    Tape<T> tape;
    std::map<std::string, Var<T>> leaves;
    Var<T> out = fwd_(tape, [&](const std::string& name, Tensor<T>& t) { return leaves[name] = tape.leaf(t); });
    tape.backward(out, direction);
    std::map<std::string, Tensor<T>> g;
    for (auto& [name, v] : leaves) g[name] = tape.grad(v);
    return g;
  }

  Shape output_shape() {
    Tape<T> tape(false);
    return fwd_(tape, [&](const std::string&, Tensor<T>& t) { return tape.constant(t); }).shape();
  }

  Tensor<T> make_direction(const Shape& s) const {
    std::mt19937_64 rng(seed_);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Tensor<T> t(s);
    for (auto& v : t.values()) v = static_cast<T>(d(rng));
    return t;
  }

  // Central differences of this function against the given analytic
  // gradients, which may come from another precision.
  template <class U>
  GradCheckResult compare(const std::map<std::string, Tensor<U>>& analytic, const Tensor<T>& direction, double step,
                          int max_probes, double kink_tol) {
    std::map<std::string, Tensor<T>*> inputs;
    {
      Tape<T> tape(false);
      fwd_(tape, [&](const std::string& name, Tensor<T>& t) {
        inputs[name] = &t;
        return tape.constant(t);
      });
    }
    GradCheckResult res;
    std::mt19937_64 rng(seed_ ^ 0x5bd1e995ull);
    const double f0 = kink_tol > 0 ? project(direction) : 0.0;
    for (auto& [name, tensor] : inputs) {
      require(analytic.count(name) && analytic.at(name).size() == tensor->size(), "shape_mismatch",
              "gradcheck: no matching analytic gradient for '" + name + "'");
      const Tensor<U>& ga = analytic.at(name);
      std::vector<std::size_t> idx(tensor->size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      if (max_probes > 0 && idx.size() > static_cast<std::size_t>(max_probes)) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(max_probes);
      }
      double rms = 0;
      for (std::size_t i : idx) rms += static_cast<double>(ga[i]) * ga[i];
      rms = std::sqrt(rms / std::max<std::size_t>(idx.size(), 1));
      double num = 0, na = 0, nf = 0;
      for (std::size_t i : idx) {
        const T orig = (*tensor)[i];
        (*tensor)[i] = static_cast<T>(orig + step);
        const double fp = project(direction);
        (*tensor)[i] = static_cast<T>(orig - step);
        const double fm = project(direction);
        (*tensor)[i] = orig;
        const double fd = (fp - fm) / (2 * step);
        const double a = static_cast<double>(ga[i]);
        ++res.probes;
        if (kink_tol > 0 && std::abs((fp - f0) - (f0 - fm)) / step > kink_tol * std::max(rms, 1e-12)) {
          ++res.skipped;
          continue;
        }
        num += (a - fd) * (a - fd);
        na += a * a;
        nf += fd * fd;
      }
      const double denom = std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
      const double rel = (na == 0 && nf == 0) ? 0.0 : std::sqrt(num) / denom;
      if (na > 0) res.any_nonzero = true;
      res.rel_error[name] = rel;
      if (rel >= res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = name;
      }
    }
    return res;
  }

 private:
  double project(const Tensor<T>& direction) {
    Tape<T> tape(false);
    Var<T> out = fwd_(tape, [&](const std::string&, Tensor<T>& t) { return tape.constant(t); });
    double s = 0;
    for (std::size_t i = 0; i < direction.size(); ++i)
      s += static_cast<double>(direction[i]) * static_cast<double>(out.value()[i]);
    return s;
  }

  Fwd fwd_;
  std::uint64_t seed_;
};

// Low-precision (float32) backprop against high-precision central
// differences of the same function at the same point. `hi` must read inputs
// holding exactly the values `lo` reads, converted to Hi.
template <class Lo, class Hi>
GradCheckResult cross_check(GradCheck<Lo>& lo, GradCheck<Hi>& hi, double step, int max_probes = 64,
                            double kink_tol = 0) {
  const Tensor<Lo> direction = lo.make_direction(lo.output_shape());
  return hi.compare(lo.analytic(direction), direction.template cast<Hi>(), step, max_probes, kink_tol);
}

}  // namespace fsvt

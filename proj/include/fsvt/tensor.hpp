#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsvt {

// Error carrying a short machine-readable code, surfaced verbatim by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

inline void require(bool cond, const char* code, const std::string& msg) {
  if (!cond) throw Error(code, msg);
}

// Up to rank 4; rank-3 tensors are (channels, height, width).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    if (dims.size() > 4) throw Error("shape", "rank > 4 is not supported");
    for (int d : dims) dims_[rank_++] = d;
  }
  static Shape from(std::span<const int> dims) {
    Shape s;
    if (dims.size() > 4) throw Error("shape", "rank > 4 is not supported");
    for (int d : dims) s.dims_[s.rank_++] = d;
    return s;
  }

  int rank() const { return rank_; }
  int operator[](int i) const { return dims_[i]; }
  int& operator[](int i) { return dims_[i]; }
  std::size_t numel() const {
    std::size_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[i]);
    return n;
  }
  std::span<const int> dims() const { return {dims_.data(), static_cast<std::size_t>(rank_)}; }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
    os << ')';
    return os.str();
  }

 private:
  std::array<int, 4> dims_{};
  int rank_ = 0;
};

// 64-byte aligned storage. Eigen's vectorized reductions peel a variable
// number of leading elements on unaligned data, which changes summation order
// with the heap address; fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, const std::vector<T>& data) : shape_(shape), data_(data.begin(), data.end()) {
    require(data_.size() == shape_.numel(), "shape", "data size does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  int dim(int i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T> to_vector() const { return {data_.begin(), data_.end()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // (c, y, x) access for rank-3 rasters.
  T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape s) {
    require(s.numel() == data_.size(), "shape", "reshape to " + s.str() + " changes element count");
    shape_ = s;
  }

  Tensor& operator+=(const Tensor& o) {
    require(o.size() == size(), "shape", "in-place add shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator*=(T k) {
    for (auto& v : data_) v *= k;
    return *this;
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

template <class T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!(a.shape() == b.shape()))
    throw Error("shape_mismatch", std::string(what) + ": " + a.shape().str() + " vs " + b.shape().str());
}

template <class T, class Rng>
Tensor<T> random_normal(Shape shape, Rng& rng, T stddev = T(1)) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng) * stddev);
  return t;
}

template <class T, class Rng>
Tensor<T> random_uniform(Shape shape, Rng& rng, T lo, T hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
  return m;
}

// 64-bit FNV-1a; used for config hashes and parameter fingerprints.
inline std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

// Stable per-purpose seed derivation (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace fsvt

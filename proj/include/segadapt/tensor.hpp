#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "segadapt/errors.hpp"

namespace segadapt {

// Dense row-major tensor, rank <= 4. Feature maps use CHW layout.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    size_t n = 1;
    for (int d : shape_) {
      if (d <= 0) throw ShapeError("tensor dimension must be positive");
      n *= static_cast<size_t>(d);
    }
    data_.assign(n, T(0));
  }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  T& at(int i, int j) { return data_[static_cast<size_t>(i) * dim(1) + j]; }
  const T& at(int i, int j) const {
    return data_[static_cast<size_t>(i) * dim(1) + j];
  }
  T& at(int c, int i, int j) {
    return data_[(static_cast<size_t>(c) * dim(1) + i) * dim(2) + j];
  }
  const T& at(int c, int i, int j) const {
    return data_[(static_cast<size_t>(c) * dim(1) + i) * dim(2) + j];
  }
  T& at(int a, int b, int c, int d) {
    return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * dim(3) + d];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void zero() { fill(T(0)); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // this += s * o
  void add_scaled(const Tensor& o, T s) {
    if (!same_shape(o)) throw ShapeError("add_scaled: shape mismatch");
    const T* p = o.data();
    T* q = data();
    const size_t n = numel();
    for (size_t i = 0; i < n; ++i) q[i] += s * p[i];
  }

  void scale(T s) {
    for (auto& v : data_) v *= s;
  }

  bool all_finite() const {
    for (const auto& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (size_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch");
}

inline std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// FNV-1a over raw bytes; used for parameter freeze checks and run manifests.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
uint64_t content_hash(const Tensor<T>& t, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(t.data(), t.numel() * sizeof(T), h);
}

}  // namespace segadapt

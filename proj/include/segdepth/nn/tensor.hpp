#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace segdepth::nn {

// NCHW activation / parameter tensor.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T{}) : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw std::invalid_argument("Tensor: negative dimension");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::array<int, 4> shape() const { return {n_, c_, h_, w_}; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }
  bool same_shape(const Tensor& o) const { return shape() == o.shape(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T* plane_ptr(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane(); }
  const T* plane_ptr(int n, int c) const { return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane(); }

  T& at(int n, int c, int y, int x) { return plane_ptr(n, c)[static_cast<std::size_t>(y) * w_ + x]; }
  const T& at(int n, int c, int y, int x) const { return plane_ptr(n, c)[static_cast<std::size_t>(y) * w_ + x]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n_, c_, h_, w_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(value.n(), value.c(), value.h(), value.w()) {}
  void zero_grad() { grad.fill(T{}); }
};

// Named views of a network's learnable parameters and persistent buffers
// (normalisation running statistics). IsConst selects read-only pointers.
template <typename T, bool IsConst>
struct BasicRegistry {
  template <class U>
  using Ptr = std::conditional_t<IsConst, const U*, U*>;

  std::vector<std::pair<std::string, Ptr<Parameter<T>>>> params;
  std::vector<std::pair<std::string, Ptr<Tensor<T>>>> buffers;
};

template <typename T>
using Registry = BasicRegistry<T, false>;
template <typename T>
using ConstRegistry = BasicRegistry<T, true>;

enum class Mode { Train, Eval };

}  // namespace segdepth::nn

#pragma once

// Layer kernels with hand-written backward passes. Every layer offers a const
// `apply` (pure inference, no caching) and a mutating `forward` / `backward`
// pair that caches what the backward pass needs. Parameter gradients
// accumulate until zero_grad().

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "segdepth/nn/tensor.hpp"

namespace segdepth::nn {

// 2D convolution, square kernel, replication padding of kernel / 2.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, bool bias, std::mt19937_64& rng);

  Tensor<T> apply(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  int out_size(int in) const { return (in + 2 * pad_ - kernel_) / stride_ + 1; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  template <class R>
  void collect(R& r, const std::string& p) { collect_(*this, r, p); }
  template <class R>
  void collect(R& r, const std::string& p) const { collect_(*this, r, p); }

 private:
  template <class Self, class R>
  static void collect_(Self& s, R& r, const std::string& p) {
    r.params.emplace_back(p + ".weight", &s.weight_);
    if (s.has_bias_) r.params.emplace_back(p + ".bias", &s.bias_);
  }

  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  Parameter<T> weight_;  // [out, in, k, k]
  Parameter<T> bias_;    // [1, out, 1, 1]
  Tensor<T> input_;
};

// Transposed convolution with kernel 2 and stride 2 (exact 2x upsampling).
template <typename T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(int in_channels, int out_channels, std::mt19937_64& rng);

  Tensor<T> apply(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  template <class R>
  void collect(R& r, const std::string& p) { collect_(*this, r, p); }
  template <class R>
  void collect(R& r, const std::string& p) const { collect_(*this, r, p); }

 private:
  template <class Self, class R>
  static void collect_(Self& s, R& r, const std::string& p) {
    r.params.emplace_back(p + ".weight", &s.weight_);
    r.params.emplace_back(p + ".bias", &s.bias_);
  }

  int in_ = 0, out_ = 0;
  Parameter<T> weight_;  // [in, out, 2, 2]
  Parameter<T> bias_;    // [1, out, 1, 1]
  Tensor<T> input_;
};

// Per-channel normalisation: batch statistics in Train mode (updating the
// running estimates), stored running statistics in Eval mode.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor<T> apply(const Tensor<T>& x) const;  // Eval statistics
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy);

  template <class R>
  void collect(R& r, const std::string& p) { collect_(*this, r, p); }
  template <class R>
  void collect(R& r, const std::string& p) const { collect_(*this, r, p); }

 private:
  template <class Self, class R>
  static void collect_(Self& s, R& r, const std::string& p) {
    r.params.emplace_back(p + ".gamma", &s.gamma_);
    r.params.emplace_back(p + ".beta", &s.beta_);
    r.buffers.emplace_back(p + ".running_mean", &s.running_mean_);
    r.buffers.emplace_back(p + ".running_var", &s.running_var_);
  }

  int channels_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Mode cached_mode_ = Mode::Eval;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> apply(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Tensor<T> output_;
};

// 2x2 max pooling, stride 2, odd trailing rows/columns dropped.
template <typename T>
class MaxPool2x2 {
 public:
  Tensor<T> apply(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  std::array<int, 4> in_shape_{};
  std::vector<std::uint32_t> argmax_;
};

// Bilinear resize to an explicit target size (half-pixel centres, edge clamp).
template <typename T>
class UpsampleBilinear {
 public:
  Tensor<T> apply(const Tensor<T>& x, int out_h, int out_w) const;
  Tensor<T> forward(const Tensor<T>& x, int out_h, int out_w);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  std::array<int, 4> in_shape_{};
};

// Crops or replicate-pads the trailing rows/columns to a target size.
template <typename T>
class FitToSize {
 public:
  Tensor<T> apply(const Tensor<T>& x, int out_h, int out_w) const;
  Tensor<T> forward(const Tensor<T>& x, int out_h, int out_w);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  std::array<int, 4> in_shape_{};
};

// Channelwise k x k median with replicate-padded borders. The window spans
// k / 2 pixels before and k - 1 - k / 2 after the output pixel on each axis and
// the output is the element of rank ceil(k^2 / 2) (1-based; the lower median
// for even k^2). Ties are ordered by source index. The backward pass routes the
// gradient to the selected element.
template <typename T>
class MedianFilter {
 public:
  MedianFilter() = default;
  explicit MedianFilter(int kernel);

  Tensor<T> apply(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  int kernel() const { return kernel_; }

 private:
  Tensor<T> run(const Tensor<T>& x, std::vector<std::uint32_t>* selected) const;

  int kernel_ = 1;
  std::array<int, 4> in_shape_{};
  std::vector<std::uint32_t> selected_;
};

// Softmax over the channel axis at every pixel.
template <typename T>
class ChannelSoftmax {
 public:
  Tensor<T> apply(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Tensor<T> output_;
};

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
// Splits a channel-concatenated gradient back into its two parts.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& d, int first_channels);

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x);

}  // namespace segdepth::nn

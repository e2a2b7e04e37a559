#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdepth/grid.hpp"
#include "segdepth/nn/layers.hpp"
#include "segdepth/noise.hpp"

namespace segdepth {

enum class UpsampleMode { Bilinear, Transposed };

struct ModelConfig {
  int base_channels = 16;
  int scales = 6;
  int num_classes = 11;
  int median_kernel = 4;
  UpsampleMode upsample = UpsampleMode::Bilinear;
  int in_channels = 1;

  // Channels at UNet scale s (0 = full resolution); doubles per scale.
  int channels_at(int scale) const { return base_channels << scale; }
  // Smallest accepted spatial extent.
  int min_input_size() const { return 1 << scales; }
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  // Short content hash of the canonical JSON form.
  std::string hash() const;

  bool operator==(const ModelConfig&) const = default;
};

namespace nn {

// conv3x3 -> norm -> ReLU, twice.
template <typename T>
class DoubleConv {
 public:
  DoubleConv() = default;
  DoubleConv(int in, int out, std::mt19937_64& rng);

  Tensor<T> apply(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy);

  template <class R>
  void collect(R& r, const std::string& p) { collect_(*this, r, p); }
  template <class R>
  void collect(R& r, const std::string& p) const { collect_(*this, r, p); }

 private:
  template <class Self, class R>
  static void collect_(Self& s, R& r, const std::string& p) {
    s.conv1_.collect(r, p + ".conv1");
    s.norm1_.collect(r, p + ".norm1");
    s.conv2_.collect(r, p + ".conv2");
    s.norm2_.collect(r, p + ".norm2");
  }

  Conv2d<T> conv1_, conv2_;
  BatchNorm2d<T> norm1_, norm2_;
  ReLU<T> relu1_, relu2_;
};

// Encoder-decoder with skip connections; output has base_channels at input resolution.
template <typename T>
class UNetTrunk {
 public:
  UNetTrunk() = default;
  UNetTrunk(const ModelConfig& config, std::mt19937_64& rng);

  Tensor<T> apply(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy);

  template <class R>
  void collect(R& r, const std::string& p) { collect_(*this, r, p); }
  template <class R>
  void collect(R& r, const std::string& p) const { collect_(*this, r, p); }

 private:
  template <class Self, class R>
  static void collect_(Self& s, R& r, const std::string& p) {
    for (std::size_t i = 0; i < s.enc_.size(); ++i) s.enc_[i].collect(r, p + ".enc" + std::to_string(i));
    for (std::size_t i = 0; i < s.dec_.size(); ++i) s.dec_[i].collect(r, p + ".dec" + std::to_string(i));
    for (std::size_t i = 0; i < s.tups_.size(); ++i) s.tups_[i].collect(r, p + ".up" + std::to_string(i));
  }

  Tensor<T> upsample_apply(std::size_t level, const Tensor<T>& h, const Tensor<T>& skip) const;

  ModelConfig config_;
  std::vector<DoubleConv<T>> enc_;
  std::vector<MaxPool2x2<T>> pools_;
  std::vector<DoubleConv<T>> dec_;  // dec_[s] produces scale s
  std::vector<UpsampleBilinear<T>> ups_;
  std::vector<ConvTranspose2x2<T>> tups_;
  std::vector<FitToSize<T>> fits_;
  std::vector<int> up_channels_;
};

}  // namespace nn

// UNet trunk followed by the depth head: two stride-2 conv blocks (x4 spatial
// reduction), a 1x1 conv to num_classes, a channelwise median filter on the
// class scores and a per-pixel softmax. Input [n, 1, H, W] -> probabilities
// [n, num_classes, ceil(ceil(H/2)/2), ceil(ceil(W/2)/2)].
template <typename T>
class SegDepthNet {
 public:
  SegDepthNet() = default;
  SegDepthNet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  nn::Tensor<T> infer(const nn::Tensor<T>& x) const;
  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode);
  // Gradient of a scalar with respect to the input, given its gradient with
  // respect to the output probabilities. Accumulates parameter gradients.
  nn::Tensor<T> backward(const nn::Tensor<T>& dprobs);

  nn::Registry<T> registry();
  nn::ConstRegistry<T> registry() const;
  void zero_grad();
  std::size_t parameter_count() const;

  // Zeroes the final 1x1 convolution (constant output, used in tests).
  void zero_classifier();

 private:
  void check_input(const nn::Tensor<T>& x) const;

  ModelConfig config_;
  nn::UNetTrunk<T> trunk_;
  nn::Conv2d<T> head1_, head2_, classifier_;
  nn::BatchNorm2d<T> head_norm1_, head_norm2_;
  nn::ReLU<T> head_relu1_, head_relu2_;
  nn::MedianFilter<T> median_;
  nn::ChannelSoftmax<T> softmax_;
};

// UNet regressor for the denoise-then-segment baselines: x + conv1x1(trunk(x)).
// The residual projection starts at zero, so an untrained denoiser is the identity.
template <typename T>
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  nn::Tensor<T> infer(const nn::Tensor<T>& x) const;
  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode);
  nn::Tensor<T> backward(const nn::Tensor<T>& dy);

  nn::Registry<T> registry();
  nn::ConstRegistry<T> registry() const;
  void zero_grad();
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  nn::UNetTrunk<T> trunk_;
  nn::Conv2d<T> out_;
};

using Network = SegDepthNet<float>;

// Per-pixel categorical distribution over depths, row-major [rows][cols][classes].
struct ProbabilityMap {
  int rows = 0;
  int cols = 0;
  int classes = 0;
  std::vector<float> probs;

  float at(int r, int c, int k) const {
    return probs[(static_cast<std::size_t>(r) * cols + c) * classes + k];
  }
  const float* pixel(int r, int c) const { return probs.data() + (static_cast<std::size_t>(r) * cols + c) * classes; }
};

struct DepthEstimate {
  Grid<int> depth;         // argmax, ties to the smaller depth
  Grid<float> confidence;  // probability of the argmax class
};

nn::Tensor<float> image_batch(std::span<const Grid<float>* const> images);
nn::Tensor<float> image_batch(const Grid<float>& image);

ProbabilityMap probability_map(const nn::Tensor<float>& probs, int sample);
ProbabilityMap forward(const Network& net, const NoisyImage& y);
DepthEstimate predict(const ProbabilityMap& probs);
DepthEstimate predict(const Network& net, const NoisyImage& y);

// Channelwise median filter on an NCHW tensor (same rule as the network head).
nn::Tensor<float> median_filter(const nn::Tensor<float>& map, int kernel);

// Checkpoint directory: config.json, params/<name>.tns, manifest.json with
// SHA-256 content hashes. Loading verifies hashes, the config hash, shapes and
// rejects non-finite values.
void save_checkpoint(const std::filesystem::path& dir, const Network& net);
Network load_checkpoint(const std::filesystem::path& dir);
void save_denoiser(const std::filesystem::path& dir, const Denoiser<float>& net);
Denoiser<float> load_denoiser(const std::filesystem::path& dir);

std::string sha256_hex(const void* data, std::size_t size);

}  // namespace segdepth

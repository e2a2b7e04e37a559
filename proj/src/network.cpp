#include "segdepth/network.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "segdepth/rng.hpp"
#include "segdepth/tensor_io.hpp"

namespace segdepth {

// ---------------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
  if (base_channels < 1) throw std::invalid_argument("ModelConfig: base_channels must be >= 1");
  if (scales < 1 || scales > 10) throw std::invalid_argument("ModelConfig: scales must lie in [1, 10]");
  if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes must be >= 2");
  if (median_kernel < 1) throw std::invalid_argument("ModelConfig: median_kernel must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("ModelConfig: in_channels must be >= 1");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"base_channels", base_channels},
          {"scales", scales},
          {"num_classes", num_classes},
          {"median_kernel", median_kernel},
          {"upsample", upsample == UpsampleMode::Bilinear ? "BILINEAR" : "TRANSPOSED"},
          {"in_channels", in_channels}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.base_channels = j.value("base_channels", c.base_channels);
  c.scales = j.value("scales", c.scales);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.median_kernel = j.value("median_kernel", c.median_kernel);
  c.in_channels = j.value("in_channels", c.in_channels);
  const std::string up = j.value("upsample", std::string("BILINEAR"));
  if (up == "BILINEAR") c.upsample = UpsampleMode::Bilinear;
  else if (up == "TRANSPOSED") c.upsample = UpsampleMode::Transposed;
  else throw std::invalid_argument("ModelConfig: unknown upsample mode '" + up + "'");
  c.validate();
  return c;
}

std::string ModelConfig::hash() const {
  const std::string canon = to_json().dump();
  return sha256_hex(canon.data(), canon.size()).substr(0, 16);
}

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

namespace nn {

// ---------------------------------------------------------------- DoubleConv

template <typename T>
DoubleConv<T>::DoubleConv(int in, int out, std::mt19937_64& rng)
    : conv1_(in, out, 3, 1, false, rng), conv2_(out, out, 3, 1, false, rng), norm1_(out), norm2_(out) {}

template <typename T>
Tensor<T> DoubleConv<T>::apply(const Tensor<T>& x) const {
  return relu2_.apply(norm2_.apply(conv2_.apply(relu1_.apply(norm1_.apply(conv1_.apply(x))))));
}

template <typename T>
Tensor<T> DoubleConv<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = relu1_.forward(norm1_.forward(conv1_.forward(x), mode));
  return relu2_.forward(norm2_.forward(conv2_.forward(h), mode));
}

template <typename T>
Tensor<T> DoubleConv<T>::backward(const Tensor<T>& dy) {
  Tensor<T> g = conv2_.backward(norm2_.backward(relu2_.backward(dy)));
  return conv1_.backward(norm1_.backward(relu1_.backward(g)));
}

// ---------------------------------------------------------------- UNetTrunk

template <typename T>
UNetTrunk<T>::UNetTrunk(const ModelConfig& config, std::mt19937_64& rng) : config_(config) {
  config.validate();
  const int scales = config.scales;
  enc_.emplace_back(config.in_channels, config.channels_at(0), rng);
  for (int s = 1; s < scales; ++s) {
    pools_.emplace_back();
    enc_.emplace_back(config.channels_at(s - 1), config.channels_at(s), rng);
  }
  dec_.resize(static_cast<std::size_t>(std::max(0, scales - 1)));
  up_channels_.resize(dec_.size());
  ups_.resize(dec_.size());
  fits_.resize(dec_.size());
  for (int s = scales - 2; s >= 0; --s) {
    const auto u = static_cast<std::size_t>(s);
    if (config.upsample == UpsampleMode::Transposed) {
      tups_.emplace_back(config.channels_at(s + 1), config.channels_at(s), rng);
      up_channels_[u] = config.channels_at(s);
    } else {
      up_channels_[u] = config.channels_at(s + 1);
    }
    dec_[u] = DoubleConv<T>(up_channels_[u] + config.channels_at(s), config.channels_at(s), rng);
  }
  // tups_ was filled from the coarsest scale down; index it by scale.
  std::reverse(tups_.begin(), tups_.end());
}

template <typename T>
Tensor<T> UNetTrunk<T>::upsample_apply(std::size_t level, const Tensor<T>& h, const Tensor<T>& skip) const {
  if (config_.upsample == UpsampleMode::Transposed)
    return fits_[level].apply(tups_[level].apply(h), skip.h(), skip.w());
  return ups_[level].apply(h, skip.h(), skip.w());
}

template <typename T>
Tensor<T> UNetTrunk<T>::apply(const Tensor<T>& x) const {
  const auto scales = enc_.size();
  std::vector<Tensor<T>> skips(scales);
  skips[0] = enc_[0].apply(x);
  for (std::size_t s = 1; s < scales; ++s) skips[s] = enc_[s].apply(pools_[s - 1].apply(skips[s - 1]));
  Tensor<T> h = std::move(skips[scales - 1]);
  for (std::size_t s = scales - 1; s-- > 0;) h = dec_[s].apply(concat_channels(upsample_apply(s, h, skips[s]), skips[s]));
  return h;
}

template <typename T>
Tensor<T> UNetTrunk<T>::forward(const Tensor<T>& x, Mode mode) {
  const auto scales = enc_.size();
  std::vector<Tensor<T>> skips(scales);
  skips[0] = enc_[0].forward(x, mode);
  for (std::size_t s = 1; s < scales; ++s) skips[s] = enc_[s].forward(pools_[s - 1].forward(skips[s - 1]), mode);
  Tensor<T> h = std::move(skips[scales - 1]);
  for (std::size_t s = scales - 1; s-- > 0;) {
    Tensor<T> up = config_.upsample == UpsampleMode::Transposed
                       ? fits_[s].forward(tups_[s].forward(h), skips[s].h(), skips[s].w())
                       : ups_[s].forward(h, skips[s].h(), skips[s].w());
    h = dec_[s].forward(concat_channels(up, skips[s]), mode);
  }
  return h;
}

template <typename T>
Tensor<T> UNetTrunk<T>::backward(const Tensor<T>& dy) {
  const auto scales = enc_.size();
  std::vector<Tensor<T>> dskips(scales);
  Tensor<T> g = dy;
  for (std::size_t s = 0; s + 1 < scales; ++s) {
    auto [dup, dskip] = split_channels(dec_[s].backward(g), up_channels_[s]);
    dskips[s] = std::move(dskip);
    g = config_.upsample == UpsampleMode::Transposed ? tups_[s].backward(fits_[s].backward(dup)) : ups_[s].backward(dup);
  }
  for (std::size_t s = scales - 1; s >= 1; --s) {
    g = pools_[s - 1].backward(enc_[s].backward(g));
    add_inplace(g, dskips[s - 1]);
  }
  return enc_[0].backward(g);
}

template class DoubleConv<float>;
template class DoubleConv<double>;
template class UNetTrunk<float>;
template class UNetTrunk<double>;

}  // namespace nn

// ---------------------------------------------------------------- SegDepthNet

template <typename T>
SegDepthNet<T>::SegDepthNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  std::mt19937_64 rng(derive_seed({seed, 0x5e9ull}));
  trunk_ = nn::UNetTrunk<T>(config, rng);
  const int b = config.base_channels;
  head1_ = nn::Conv2d<T>(b, 2 * b, 3, 2, false, rng);
  head_norm1_ = nn::BatchNorm2d<T>(2 * b);
  head2_ = nn::Conv2d<T>(2 * b, 4 * b, 3, 2, false, rng);
  head_norm2_ = nn::BatchNorm2d<T>(4 * b);
  classifier_ = nn::Conv2d<T>(4 * b, config.num_classes, 1, 1, true, rng);
  median_ = nn::MedianFilter<T>(config.median_kernel);
}

template <typename T>
void SegDepthNet<T>::check_input(const nn::Tensor<T>& x) const {
  if (x.c() != config_.in_channels) throw std::invalid_argument("SegDepthNet: input channels do not match the config");
  if (x.h() < config_.min_input_size() || x.w() < config_.min_input_size())
    throw std::invalid_argument("SegDepthNet: input smaller than 2^scales");
}

template <typename T>
nn::Tensor<T> SegDepthNet<T>::infer(const nn::Tensor<T>& x) const {
  check_input(x);
  nn::Tensor<T> h = trunk_.apply(x);
  h = head_relu1_.apply(head_norm1_.apply(head1_.apply(h)));
  h = head_relu2_.apply(head_norm2_.apply(head2_.apply(h)));
  return softmax_.apply(median_.apply(classifier_.apply(h)));
}

template <typename T>
nn::Tensor<T> SegDepthNet<T>::forward(const nn::Tensor<T>& x, nn::Mode mode) {
  check_input(x);
  nn::Tensor<T> h = trunk_.forward(x, mode);
  h = head_relu1_.forward(head_norm1_.forward(head1_.forward(h), mode));
  h = head_relu2_.forward(head_norm2_.forward(head2_.forward(h), mode));
  return softmax_.forward(median_.forward(classifier_.forward(h)));
}

template <typename T>
nn::Tensor<T> SegDepthNet<T>::backward(const nn::Tensor<T>& dprobs) {
  nn::Tensor<T> g = classifier_.backward(median_.backward(softmax_.backward(dprobs)));
  g = head2_.backward(head_norm2_.backward(head_relu2_.backward(g)));
  g = head1_.backward(head_norm1_.backward(head_relu1_.backward(g)));
  return trunk_.backward(g);
}

template <typename T>
nn::Registry<T> SegDepthNet<T>::registry() {
  nn::Registry<T> r;
  trunk_.collect(r, "trunk");
  head1_.collect(r, "head.block1.conv");
  head_norm1_.collect(r, "head.block1.norm");
  head2_.collect(r, "head.block2.conv");
  head_norm2_.collect(r, "head.block2.norm");
  classifier_.collect(r, "head.classifier");
  return r;
}

template <typename T>
nn::ConstRegistry<T> SegDepthNet<T>::registry() const {
  nn::ConstRegistry<T> r;
  trunk_.collect(r, "trunk");
  head1_.collect(r, "head.block1.conv");
  head_norm1_.collect(r, "head.block1.norm");
  head2_.collect(r, "head.block2.conv");
  head_norm2_.collect(r, "head.block2.norm");
  classifier_.collect(r, "head.classifier");
  return r;
}

template <typename T>
void SegDepthNet<T>::zero_grad() {
  for (auto& [name, p] : registry().params) p->zero_grad();
}

template <typename T>
std::size_t SegDepthNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : registry().params) n += p->value.size();
  return n;
}

template <typename T>
void SegDepthNet<T>::zero_classifier() {
  classifier_.weight().value.fill(T(0));
  classifier_.bias().value.fill(T(0));
}

template class SegDepthNet<float>;
template class SegDepthNet<double>;

// ---------------------------------------------------------------- Denoiser

template <typename T>
Denoiser<T>::Denoiser(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  std::mt19937_64 rng(derive_seed({seed, 0xde7015eull}));
  trunk_ = nn::UNetTrunk<T>(config, rng);
  out_ = nn::Conv2d<T>(config.base_channels, config.in_channels, 1, 1, true, rng);
  out_.weight().value.fill(T(0));
}

template <typename T>
nn::Tensor<T> Denoiser<T>::infer(const nn::Tensor<T>& x) const {
  nn::Tensor<T> y = out_.apply(trunk_.apply(x));
  nn::add_inplace(y, x);
  return y;
}

template <typename T>
nn::Tensor<T> Denoiser<T>::forward(const nn::Tensor<T>& x, nn::Mode mode) {
  nn::Tensor<T> y = out_.forward(trunk_.forward(x, mode));
  nn::add_inplace(y, x);
  return y;
}

template <typename T>
nn::Tensor<T> Denoiser<T>::backward(const nn::Tensor<T>& dy) {
  nn::Tensor<T> dx = trunk_.backward(out_.backward(dy));
  nn::add_inplace(dx, dy);
  return dx;
}

template <typename T>
nn::Registry<T> Denoiser<T>::registry() {
  nn::Registry<T> r;
  trunk_.collect(r, "trunk");
  out_.collect(r, "out");
  return r;
}

template <typename T>
nn::ConstRegistry<T> Denoiser<T>::registry() const {
  nn::ConstRegistry<T> r;
  trunk_.collect(r, "trunk");
  out_.collect(r, "out");
  return r;
}

template <typename T>
void Denoiser<T>::zero_grad() {
  for (auto& [name, p] : registry().params) p->zero_grad();
}

template <typename T>
std::size_t Denoiser<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : registry().params) n += p->value.size();
  return n;
}

template class Denoiser<float>;
template class Denoiser<double>;

// ---------------------------------------------------------------- inference helpers

nn::Tensor<float> image_batch(std::span<const Grid<float>* const> images) {
  if (images.empty()) throw std::invalid_argument("image_batch: no images");
  const Shape2 shape = images.front()->shape();
  nn::Tensor<float> x(static_cast<int>(images.size()), 1, shape.rows, shape.cols);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != shape) throw std::invalid_argument("image_batch: images differ in shape");
    std::copy(images[i]->begin(), images[i]->end(), x.plane_ptr(static_cast<int>(i), 0));
  }
  return x;
}

nn::Tensor<float> image_batch(const Grid<float>& image) {
  const Grid<float>* one[] = {&image};
  return image_batch(one);
}

ProbabilityMap probability_map(const nn::Tensor<float>& probs, int sample) {
  ProbabilityMap m{probs.h(), probs.w(), probs.c(), {}};
  m.probs.resize(static_cast<std::size_t>(m.rows) * m.cols * m.classes);
  for (int k = 0; k < m.classes; ++k) {
    const float* p = probs.plane_ptr(sample, k);
    for (std::size_t i = 0; i < probs.plane(); ++i) m.probs[i * m.classes + k] = p[i];
  }
  return m;
}

ProbabilityMap forward(const Network& net, const NoisyImage& y) {
  for (float v : y.pixels)
    if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input pixel");
  return probability_map(net.infer(image_batch(y.pixels)), 0);
}

DepthEstimate predict(const ProbabilityMap& probs) {
  DepthEstimate e{Grid<int>(Shape2{probs.rows, probs.cols}), Grid<float>(Shape2{probs.rows, probs.cols})};
  for (int r = 0; r < probs.rows; ++r)
    for (int c = 0; c < probs.cols; ++c) {
      const float* p = probs.pixel(r, c);
      int best = 0;
      for (int k = 1; k < probs.classes; ++k)
        if (p[k] > p[best]) best = k;
      e.depth(r, c) = best;
      e.confidence(r, c) = p[best];
    }
  return e;
}

DepthEstimate predict(const Network& net, const NoisyImage& y) { return predict(forward(net, y)); }

nn::Tensor<float> median_filter(const nn::Tensor<float>& map, int kernel) {
  return nn::MedianFilter<float>(kernel).apply(map);
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr const char* kCheckpointVersion = "segdepth-checkpoint-1";

std::string file_name_for(const std::string& name) { return name + ".tns"; }

void save_tensors(const std::filesystem::path& dir, const nn::ConstRegistry<float>& reg, const std::string& kind,
                  const ModelConfig& config) {
  std::filesystem::create_directories(dir / "params");
  write_json(dir / "config.json", config.to_json());
  nlohmann::json tensors = nlohmann::json::array();
  auto emit = [&](const std::string& name, const nn::Tensor<float>& t, bool buffer) {
    const auto shape = t.shape();
    const std::int64_t dims[4] = {shape[0], shape[1], shape[2], shape[3]};
    const auto rel = std::filesystem::path("params") / file_name_for(name);
    write_tensor(dir / rel, dims, t.values());
    tensors.push_back({{"name", name},
                       {"file", rel.generic_string()},
                       {"kind", buffer ? "buffer" : "param"},
                       {"shape", shape},
                       {"sha256", sha256_hex(t.data(), t.size() * sizeof(float))}});
  };
  for (const auto& [name, p] : reg.params) emit(name, p->value, false);
  for (const auto& [name, b] : reg.buffers) emit(name, *b, true);
  write_json(dir / "manifest.json", {{"version", kCheckpointVersion},
                                     {"model", kind},
                                     {"config_hash", config.hash()},
                                     {"tensors", std::move(tensors)}});
}

void load_tensor_into(const std::filesystem::path& dir, const nlohmann::json& entry, nn::Tensor<float>& dst) {
  const auto path = dir / entry.at("file").get<std::string>();
  TensorFile t = read_tensor(path);
  const auto shape = dst.shape();
  if (t.shape != std::vector<std::int64_t>{shape[0], shape[1], shape[2], shape[3]})
    throw std::runtime_error(path.string() + ": tensor shape does not match the model");
  if (sha256_hex(t.data.data(), t.data.size() * sizeof(float)) != entry.at("sha256").get<std::string>())
    throw std::runtime_error(path.string() + ": content hash mismatch");
  for (float v : t.data)
    if (!std::isfinite(v)) throw std::runtime_error(path.string() + ": non-finite parameter value");
  std::copy(t.data.begin(), t.data.end(), dst.data());
}

ModelConfig read_config(const std::filesystem::path& dir, const std::string& kind, nlohmann::json& manifest) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + ": checkpoint directory not found");
  manifest = read_json(dir / "manifest.json");
  if (manifest.value("version", "") != kCheckpointVersion)
    throw std::runtime_error(dir.string() + ": unsupported checkpoint version");
  if (manifest.value("model", "") != kind)
    throw std::runtime_error(dir.string() + ": checkpoint holds a '" + manifest.value("model", "") + "' model");
  ModelConfig config = ModelConfig::from_json(read_json(dir / "config.json"));
  if (config.hash() != manifest.value("config_hash", ""))
    throw std::runtime_error(dir.string() + ": config hash mismatch");
  return config;
}

template <class Net>
void load_registry(const std::filesystem::path& dir, const nlohmann::json& manifest, Net& net) {
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& e : manifest.at("tensors")) by_name[e.at("name").get<std::string>()] = &e;
  auto reg = net.registry();
  auto find = [&](const std::string& name) -> const nlohmann::json& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error(dir.string() + ": checkpoint is missing tensor " + name);
    return *it->second;
  };
  for (auto& [name, p] : reg.params) load_tensor_into(dir, find(name), p->value);
  for (auto& [name, b] : reg.buffers) load_tensor_into(dir, find(name), *b);
  if (by_name.size() != reg.params.size() + reg.buffers.size())
    throw std::runtime_error(dir.string() + ": checkpoint holds unexpected tensors");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Network& net) {
  save_tensors(dir, net.registry(), "segdepth", net.config());
}

Network load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  const ModelConfig config = read_config(dir, "segdepth", manifest);
  Network net(config, 0);
  load_registry(dir, manifest, net);
  return net;
}

void save_denoiser(const std::filesystem::path& dir, const Denoiser<float>& net) {
  save_tensors(dir, net.registry(), "denoiser", net.config());
}

Denoiser<float> load_denoiser(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  const ModelConfig config = read_config(dir, "denoiser", manifest);
  Denoiser<float> net(config, 0);
  load_registry(dir, manifest, net);
  return net;
}

}  // namespace segdepth

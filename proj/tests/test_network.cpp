#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "segdepth/network.hpp"
#include "segdepth/tensor_io.hpp"
#include "util.hpp"

using namespace segdepth;

namespace {

template <typename T>
nn::Tensor<T> random_input(std::uint64_t seed, int n, int h, int w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  nn::Tensor<T> x(n, 1, h, w);
  for (auto& v : x.values()) v = static_cast<T>(u(rng));
  return x;
}

ModelConfig tiny() {
  ModelConfig c;
  c.base_channels = 4;
  c.scales = 2;
  return c;
}

std::size_t double_conv(std::size_t in, std::size_t out) { return 9 * in * out + 9 * out * out + 4 * out; }

// Closed-form parameter count of the bilinear model.
std::size_t expected_parameters(const ModelConfig& c) {
  auto ch = [&](int s) { return static_cast<std::size_t>(c.channels_at(s)); };
  std::size_t n = double_conv(1, ch(0));
  for (int s = 1; s < c.scales; ++s) n += double_conv(ch(s - 1), ch(s));
  for (int s = 0; s + 1 < c.scales; ++s) n += double_conv(ch(s + 1) + ch(s), ch(s));
  const std::size_t b = ch(0);
  n += 9 * b * 2 * b + 4 * b + 9 * 2 * b * 4 * b + 8 * b;
  n += 4 * b * c.num_classes + c.num_classes;
  return n;
}

}  // namespace

TEST_CASE("output shape and normalisation for a 128 x 128 input") {
  const Network net(ModelConfig{}, 1);
  const nn::Tensor<float> p = net.infer(random_input<float>(3, 1, 128, 128));
  CHECK(p.shape() == std::array<int, 4>{1, 11, 32, 32});
  const ProbabilityMap m = probability_map(p, 0);
  CHECK(m.rows == 32);
  CHECK(m.cols == 32);
  CHECK(m.classes == 11);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      double s = 0.0;
      for (int k = 0; k < 11; ++k) {
        CHECK(m.at(r, c, k) >= 0.0f);
        s += m.at(r, c, k);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("odd input sizes round up through the head") {
  const Network net(tiny(), 1);
  CHECK(net.infer(random_input<float>(1, 2, 18, 21)).shape() == std::array<int, 4>{2, 11, 5, 6});
  CHECK_THROWS_AS(net.infer(random_input<float>(1, 1, 3, 16)), std::invalid_argument);
}

TEST_CASE("parameter count matches the closed form") {
  for (int b : {4, 8, 16}) {
    ModelConfig c;
    c.base_channels = b;
    CHECK(Network(c, 0).parameter_count() == expected_parameters(c));
  }
  CHECK(Network(tiny(), 0).parameter_count() == expected_parameters(tiny()));
}

TEST_CASE("inference is deterministic and mode-consistent") {
  const Network net(tiny(), 9);
  const auto x = random_input<float>(4, 2, 16, 16);
  CHECK(net.infer(x).values() == net.infer(x).values());
  Network copy = net;
  CHECK(copy.forward(x, nn::Mode::Eval).values() == net.infer(x).values());
  CHECK(Network(tiny(), 9).infer(x).values() == net.infer(x).values());
  CHECK_FALSE(Network(tiny(), 10).infer(x).values() == net.infer(x).values());
}

TEST_CASE("input gradient of the double-precision network matches finite differences") {
  SegDepthNet<double> net(tiny(), 2);
  // Move the normalisation statistics away from their defaults.
  net.forward(random_input<double>(7, 4, 16, 16), nn::Mode::Train);
  auto x = random_input<double>(5, 1, 16, 16);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  nn::Tensor<double> probe(1, 11, 4, 4);
  for (auto& v : probe.values()) v = g(rng);
  auto loss = [&] {
    const auto p = net.infer(x);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * probe[i];
    return s;
  };
  SegDepthNet<double> work = net;
  work.forward(x, nn::Mode::Eval);
  const nn::Tensor<double> dx = work.backward(probe);
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    const double fd = (up - down) / (2 * h);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
    ++checked;
  }
  CHECK(checked == 256);
}

TEST_CASE("parameter gradients match finite differences") {
  SegDepthNet<double> net(tiny(), 4);
  const auto x = random_input<double>(8, 2, 16, 16);
  nn::Tensor<double> probe(2, 11, 4, 4);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : probe.values()) v = g(rng);
  auto loss = [&](SegDepthNet<double> m) {
    const auto p = m.forward(x, nn::Mode::Train);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * probe[i];
    return s;
  };
  SegDepthNet<double> work = net;
  work.zero_grad();
  work.forward(x, nn::Mode::Train);
  work.backward(probe);
  auto reg = work.registry();
  auto base = net.registry();
  std::uniform_int_distribution<std::size_t> pick(0, 1 << 20);
  for (std::size_t t = 0; t < reg.params.size(); ++t) {
    CAPTURE(reg.params[t].first);
    auto& value = base.params[t].second->value;
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t i = pick(rng) % value.size();
      // Rectified zeros in the head tie median candidates, so keep the step far
      // below the gap between them.
      const double keep = value[i], h = 1e-8;
      value[i] = keep + h;
      const double up = loss(net);
      value[i] = keep - h;
      const double down = loss(net);
      value[i] = keep;
      CHECK(reg.params[t].second->grad[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4).scale(1e-5));
    }
  }
}

TEST_CASE("predictions and ties") {
  nn::Tensor<float> p(1, 11, 1, 3, 0.0f);
  p.at(0, 7, 0, 0) = 1.0f;
  for (int k = 0; k < 11; ++k) p.at(0, k, 0, 1) = 1.0f / 11;
  p.at(0, 0, 0, 2) = 0.1f;
  p.at(0, 1, 0, 2) = 0.6f;
  p.at(0, 2, 0, 2) = 0.3f;
  const DepthEstimate e = predict(probability_map(p, 0));
  CHECK(e.depth(0, 0) == 7);
  CHECK(e.confidence(0, 0) == 1.0f);
  CHECK(e.depth(0, 1) == 0);
  CHECK(e.confidence(0, 1) == doctest::Approx(1.0 / 11));
  CHECK(e.depth(0, 2) == 1);
  CHECK(e.confidence(0, 2) == doctest::Approx(0.6));
}

TEST_CASE("zeroed classifier gives a uniform output") {
  Network net(tiny(), 3);
  net.zero_classifier();
  const auto p = net.infer(random_input<float>(2, 1, 16, 16));
  for (float v : p.values()) CHECK(v == doctest::Approx(1.0 / 11));
}

TEST_CASE("median filter helper") {
  nn::Tensor<float> m(1, 2, 6, 6, 0.0f);
  m.at(0, 1, 3, 3) = 5.0f;
  const auto f = median_filter(m, 4);
  for (float v : f.values()) CHECK(v == 0.0f);
}

TEST_CASE("checkpoint round trip") {
  testutil::TempDir dir("ckpt");
  Network net(tiny(), 5);
  net.forward(random_input<float>(1, 4, 16, 16), nn::Mode::Train);
  save_checkpoint(dir / "a", net);
  const Network back = load_checkpoint(dir / "a");
  CHECK(back.config() == net.config());
  const auto x = random_input<float>(2, 1, 16, 16);
  CHECK(back.infer(x).values() == net.infer(x).values());

  Denoiser<float> den(tiny(), 6);
  save_denoiser(dir / "d", den);
  CHECK(load_denoiser(dir / "d").infer(x).values() == den.infer(x).values());
  CHECK_THROWS_AS(load_checkpoint(dir / "d"), std::runtime_error);
}

TEST_CASE("tampered checkpoints are rejected") {
  testutil::TempDir dir("ckpt");
  const Network net(tiny(), 5);
  save_checkpoint(dir / "a", net);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), std::runtime_error);

  std::filesystem::path victim;
  for (const auto& e : std::filesystem::directory_iterator(dir / "a" / "params")) {
    victim = e.path();
    break;
  }
  REQUIRE(!victim.empty());
  TensorFile t = read_tensor(victim);
  t.data[0] += 1.0f;
  write_tensor(victim, t.shape, t.data);
  CHECK_THROWS_AS(load_checkpoint(dir / "a"), std::runtime_error);

  save_checkpoint(dir / "b", net);
  Json cfg = read_json(dir / "b" / "config.json");
  cfg["base_channels"] = 8;
  write_json(dir / "b" / "config.json", cfg);
  CHECK_THROWS_AS(load_checkpoint(dir / "b"), std::runtime_error);
}

TEST_CASE("model config json") {
  ModelConfig c;
  c.base_channels = 32;
  c.upsample = UpsampleMode::Transposed;
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  CHECK(c.hash() == ModelConfig::from_json(c.to_json()).hash());
  CHECK(c.hash() != ModelConfig{}.hash());
  c.base_channels = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("transposed upsampling variant runs") {
  ModelConfig c = tiny();
  c.upsample = UpsampleMode::Transposed;
  const Network net(c, 1);
  CHECK(net.infer(random_input<float>(1, 1, 16, 16)).shape() == std::array<int, 4>{1, 11, 4, 4});
}

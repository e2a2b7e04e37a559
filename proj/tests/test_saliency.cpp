#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "segdepth/saliency.hpp"
#include "segdepth/tensor_io.hpp"
#include "util.hpp"

using namespace segdepth;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.base_channels = 4;
  c.scales = 2;
  return c;
}

Grid<double> random_image(std::uint64_t seed, Shape2 shape) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  Grid<double> g(shape);
  for (double& v : g) v = u(rng);
  return g;
}

SaliencyMap impulses(Shape2 shape, std::initializer_list<std::pair<int, int>> at, int row, int col) {
  SaliencyMap m{Grid<float>(shape, 0.0f), row, col, 0, 1.0};
  for (auto [r, c] : at) m.magnitude(r, c) = 1.0f;
  return m;
}

}  // namespace

TEST_CASE("input gradient matches central differences") {
  SegDepthNet<double> net(tiny(), 3);
  net.forward(image_batch(Grid<float>({16, 16}, 1.0f)).cast<double>(), nn::Mode::Train);
  Grid<double> y = random_image(5, {16, 16});
  for (auto [row, col, depth] : {std::tuple{1, 2, 0}, {3, 3, 4}, {0, 0, 10}}) {
    const Grid<double> g = input_gradient_signed(net, y, row, col, depth);
    CHECK(g.shape() == y.shape());
    auto f = [&] {
      nn::Tensor<double> x(1, 1, 16, 16);
      for (std::size_t i = 0; i < y.size(); ++i) x[i] = y[i];
      return net.infer(x).at(0, depth, row, col);
    };
    const double h = 1e-4;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double keep = y[i];
      y[i] = keep + h;
      const double up = f();
      y[i] = keep - h;
      const double down = f();
      y[i] = keep;
      CHECK(g[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-3).scale(1e-6));
    }
  }
}

TEST_CASE("saliency map shape and magnitude") {
  const Network net(tiny(), 1);
  NoisyImage y{Grid<float>({16, 16}, 1.0f), 2.5, 0};
  y.pixels(5, 7) = 2.0f;
  const SaliencyMap m = input_gradient(net, y, 1, 1, 3);
  CHECK(m.magnitude.shape() == Shape2{16, 16});
  CHECK(m.lambda == 2.5);
  CHECK(m.depth == 3);
  const Grid<float> s = input_gradient_signed(net, y.pixels, 1, 1, 3);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(m.magnitude[i] == std::abs(s[i]));
  CHECK_THROWS_AS(input_gradient(net, y, 4, 0, 0), std::out_of_range);
  CHECK_THROWS_AS(input_gradient(net, y, 0, 0, 11), std::out_of_range);
  CHECK_THROWS_AS(input_gradient(net, y, -1, 0, 0), std::out_of_range);
}

TEST_CASE("constant network has zero saliency") {
  Network net(tiny(), 2);
  net.zero_classifier();
  const NoisyImage y{Grid<float>({16, 16}, 1.5f), 1.0, 0};
  const SaliencyMap m = input_gradient(net, y, 2, 2, 0);
  for (float v : m.magnitude) CHECK(v == 0.0f);
  CHECK_THROWS_AS(gradient_spread(m), std::invalid_argument);
}

TEST_CASE("gradient spread") {
  CHECK(gradient_spread(impulses({32, 32}, {{12, 8}}, 3, 2)) == 0.0);
  CHECK(gradient_spread(impulses({32, 32}, {{12, 5}, {12, 11}}, 3, 2)) == doctest::Approx(3.0));
  CHECK(gradient_spread(impulses({32, 32}, {{7, 8}, {17, 8}}, 3, 2)) == doctest::Approx(5.0));
  // Weighted RMS: weights 1 and 3 at distances 2 and 2.
  SaliencyMap m = impulses({32, 32}, {{14, 8}, {10, 8}}, 3, 2);
  m.magnitude(10, 8) = 3.0f;
  CHECK(gradient_spread(m) == doctest::Approx(2.0));
  CHECK(gradient_spread(impulses({32, 32}, {{6, 1}, {6, 7}}, 3, 2), 2) == doctest::Approx(3.0));
}

TEST_CASE("saliency serialisation") {
  testutil::TempDir dir("sal");
  SaliencyMap m = impulses({8, 8}, {{1, 2}}, 0, 1);
  m.lambda = 0.1;
  m.depth = 4;
  write_saliency(dir / "s.tns", m);
  CHECK(read_grid(dir / "s.tns") == m.magnitude);
  const Json side = read_json(dir / "s.tns.json");
  CHECK(side["row"] == 0);
  CHECK(side["col"] == 1);
  CHECK(side["depth"] == 4);
  CHECK(side["lambda"].get<double>() == 0.1);
}

#include "segdepth/saliency.hpp"

#include <cmath>
#include <stdexcept>

#include "segdepth/tensor_io.hpp"

namespace segdepth {

template <typename T>
Grid<T> input_gradient_signed(const SegDepthNet<T>& net, const Grid<T>& y, int row, int col, int depth) {
  SegDepthNet<T> work = net;
  nn::Tensor<T> x(1, 1, y.rows(), y.cols());
  std::copy(y.begin(), y.end(), x.data());
  const nn::Tensor<T> probs = work.forward(x, nn::Mode::Eval);
  if (row < 0 || row >= probs.h() || col < 0 || col >= probs.w())
    throw std::out_of_range("input_gradient: pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                            ") outside the output map");
  if (depth < 0 || depth >= probs.c()) throw std::out_of_range("input_gradient: depth outside [0, classes)");
  nn::Tensor<T> seed(1, probs.c(), probs.h(), probs.w());
  seed.at(0, depth, row, col) = T(1);
  const nn::Tensor<T> dx = work.backward(seed);
  Grid<T> out(y.shape());
  std::copy(dx.data(), dx.data() + dx.size(), out.begin());
  return out;
}

template Grid<float> input_gradient_signed<float>(const SegDepthNet<float>&, const Grid<float>&, int, int, int);
template Grid<double> input_gradient_signed<double>(const SegDepthNet<double>&, const Grid<double>&, int, int, int);

SaliencyMap input_gradient(const Network& net, const NoisyImage& y, int row, int col, int depth) {
  SaliencyMap m;
  m.magnitude = input_gradient_signed(net, y.pixels, row, col, depth);
  for (float& v : m.magnitude) v = std::abs(v);
  m.row = row;
  m.col = col;
  m.depth = depth;
  m.lambda = y.lambda;
  return m;
}

double gradient_spread(const SaliencyMap& map, int downsample) {
  const double r0 = static_cast<double>(map.row) * downsample;
  const double c0 = static_cast<double>(map.col) * downsample;
  double wsum = 0.0, acc = 0.0;
  for (int r = 0; r < map.magnitude.rows(); ++r)
    for (int c = 0; c < map.magnitude.cols(); ++c) {
      const double w = map.magnitude(r, c);
      wsum += w;
      acc += w * ((r - r0) * (r - r0) + (c - c0) * (c - c0));
    }
  if (!(wsum > 0.0)) throw std::invalid_argument("gradient_spread: all-zero saliency map");
  return std::sqrt(acc / wsum);
}

void write_saliency(const std::filesystem::path& path, const SaliencyMap& map) {
  write_grid(path, map.magnitude);
  write_json(path.string() + ".json", {{"row", map.row}, {"col", map.col}, {"depth", map.depth}, {"lambda", map.lambda}});
}

}  // namespace segdepth

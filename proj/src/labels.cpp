#include "segdepth/labels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segdepth {

int label_index(double position, double scale, int extent) {
  return std::min(extent - 1, static_cast<int>(std::floor(position * scale + 0.5)));
}

namespace {

double downsample_scale(Shape2 image, Shape2 out) {
  if (out.rows <= 0 || out.cols <= 0 || image.rows % out.rows != 0 || image.cols % out.cols != 0 ||
      image.rows / out.rows != image.cols / out.cols)
    throw std::invalid_argument("project_depth: out_shape must divide the image shape by one integer factor");
  return 1.0 / static_cast<double>(image.rows / out.rows);
}

struct Center {
  int row;
  int col;
  int depth;
};

std::vector<Center> centers_of(const DepthMap& depth) {
  std::vector<Center> out;
  for (int r = 0; r < depth.rows(); ++r)
    for (int c = 0; c < depth.cols(); ++c)
      if (depth(r, c) > 0) out.push_back({r, c, depth(r, c)});
  return out;
}

}  // namespace

DepthMap project_depth(const AtomicModel& model, Shape2 out_shape, int max_depth) {
  const double scale = downsample_scale(model.image_shape, out_shape);
  DepthMap map(out_shape, 0);
  for (const auto& col : model.columns) {
    const auto& p = col.position;
    if (!(p.row >= 0.0 && p.col >= 0.0 && p.row <= model.image_shape.rows - 1.0 && p.col <= model.image_shape.cols - 1.0))
      throw std::invalid_argument("project_depth: column outside image bounds");
    int& cell = map(label_index(p.row, scale, out_shape.rows), label_index(p.col, scale, out_shape.cols));
    cell = std::min(max_depth, cell + col.depth);
  }
  return map;
}

SmoothedLabelMap smooth_labels(const DepthMap& depth, int ring_px) {
  if (ring_px < 1) throw std::invalid_argument("smooth_labels: ring_px must be >= 1");
  const auto centers = centers_of(depth);
  SmoothedLabelMap s(depth.shape(), 0);
  for (const auto& k : centers) {
    const int reach = k.depth * ring_px;
    for (int r = std::max(0, k.row - reach); r <= std::min(depth.rows() - 1, k.row + reach); ++r) {
      for (int c = std::max(0, k.col - reach); c <= std::min(depth.cols() - 1, k.col + reach); ++c) {
        const double dist = std::hypot(r - k.row, c - k.col);
        const int v = k.depth - static_cast<int>(std::floor(dist / ring_px));
        if (v > s(r, c)) s(r, c) = v;
      }
    }
  }
  return s;
}

WeightMap build_weights(const DepthMap& depth, double sigma_px, double w_floor) {
  if (!(sigma_px > 0.0)) throw std::invalid_argument("build_weights: sigma_px must be > 0");
  if (!(w_floor > 0.0 && w_floor < 1.0)) throw std::invalid_argument("build_weights: w_floor must lie in (0, 1)");
  const auto centers = centers_of(depth);
  WeightMap w(depth.shape(), static_cast<float>(w_floor));
  const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
  // Beyond this radius the Gaussian is below the floor.
  const int reach = static_cast<int>(std::ceil(sigma_px * std::sqrt(-2.0 * std::log(w_floor))));
  for (const auto& k : centers) {
    for (int r = std::max(0, k.row - reach); r <= std::min(depth.rows() - 1, k.row + reach); ++r) {
      for (int c = std::max(0, k.col - reach); c <= std::min(depth.cols() - 1, k.col + reach); ++c) {
        const double d2 = static_cast<double>((r - k.row) * (r - k.row) + (c - k.col) * (c - k.col));
        const float v = static_cast<float>(std::exp(-d2 * inv2s2));
        if (v > w(r, c)) w(r, c) = v;
      }
    }
  }
  return w;
}

LabelBundle make_label_bundle(const AtomicModel& model, const LabelOptions& options) {
  if (options.downsample < 1) throw std::invalid_argument("make_label_bundle: downsample must be >= 1");
  const Shape2 out{model.image_shape.rows / options.downsample, model.image_shape.cols / options.downsample};
  LabelBundle b;
  b.depth = project_depth(model, out, options.max_depth);
  b.smoothed = smooth_labels(b.depth, options.ring_px);
  b.weights = build_weights(b.depth, options.sigma_px, options.w_floor);
  return b;
}

std::vector<LabelCenter> label_centers(const AtomicModel& model, Shape2 out_shape) {
  const double scale = downsample_scale(model.image_shape, out_shape);
  std::vector<LabelCenter> out;
  out.reserve(model.columns.size());
  for (const auto& col : model.columns) {
    if (col.depth == 0) continue;
    out.push_back({label_index(col.position.row, scale, out_shape.rows),
                   label_index(col.position.col, scale, out_shape.cols), col.species});
  }
  return out;
}

}  // namespace segdepth

#pragma once

#include <vector>

#include "segdepth/grid.hpp"
#include "segdepth/lattice.hpp"

namespace segdepth {

// Raw projected depth: per-pixel atom count, 0 in the background, capped at D_max.
using DepthMap = Grid<int>;
// Concentric-ring smoothed labels s (the training target).
using SmoothedLabelMap = Grid<int>;
// Per-pixel loss weights in [w_floor, 1].
using WeightMap = Grid<float>;

// Pixel index along one axis for a continuous position when rasterising onto a
// grid `scale` times finer/coarser than the image: floor(pos * scale + 0.5),
// clamped to the last pixel. At scale 1 this is round-half-up.
int label_index(double position, double scale, int extent);

// Each atom increments the pixel its column rounds into. out_shape must divide
// the image shape by the same integer factor on both axes. Throws
// std::invalid_argument for a column outside the image or a bad factor.
DepthMap project_depth(const AtomicModel& model, Shape2 out_shape, int max_depth = kDefaultMaxDepth);

// s(p) = max_k max(0, depth_k - floor(|p - center_k| / ring_px)), where the
// centres are the non-zero pixels of the depth map.
SmoothedLabelMap smooth_labels(const DepthMap& depth, int ring_px);

// w(p) = max(w_floor, max_k exp(-|p - center_k|^2 / (2 sigma^2))).
WeightMap build_weights(const DepthMap& depth, double sigma_px, double w_floor);

struct LabelOptions {
  int downsample = 4;
  int ring_px = 2;
  double sigma_px = 4.0;
  double w_floor = 0.05;
  int max_depth = kDefaultMaxDepth;
};

struct LabelBundle {
  DepthMap depth;
  SmoothedLabelMap smoothed;
  WeightMap weights;
};

LabelBundle make_label_bundle(const AtomicModel& model, const LabelOptions& options = {});

// Column centre at label resolution, used for the centre-accuracy disks.
struct LabelCenter {
  int row = 0;
  int col = 0;
  Species species = Species::Heavy;
};

std::vector<LabelCenter> label_centers(const AtomicModel& model, Shape2 out_shape);

}  // namespace segdepth

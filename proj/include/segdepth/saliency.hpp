#pragma once

#include <filesystem>

#include "segdepth/grid.hpp"
#include "segdepth/network.hpp"

namespace segdepth {

// |d F(y)_pixel[depth] / d y| at input resolution.
struct SaliencyMap {
  Grid<float> magnitude;
  int row = 0;  // target pixel at output resolution
  int col = 0;
  int depth = 0;
  double lambda = 0.0;
};

// Exact input gradient of one output probability, taken through the head in
// inference mode (median ties use the selected element). Throws
// std::out_of_range for a pixel or depth outside the output.
template <typename T>
Grid<T> input_gradient_signed(const SegDepthNet<T>& net, const Grid<T>& y, int row, int col, int depth);

SaliencyMap input_gradient(const Network& net, const NoisyImage& y, int row, int col, int depth);

// Magnitude-weighted RMS distance from the target pixel's input location
// (downsample * row, downsample * col). Throws std::invalid_argument for an
// all-zero map.
double gradient_spread(const SaliencyMap& map, int downsample = 4);

// Raw magnitudes as a tensor container with a sidecar {row, col, depth, lambda}.
void write_saliency(const std::filesystem::path& path, const SaliencyMap& map);

}  // namespace segdepth

#pragma once

// Minimal SVG figures for the CLI. Plots are derived artifacts only.

#include <string>
#include <vector>

#include "segdepth/evaluation.hpp"
#include "segdepth/grid.hpp"

namespace segdepth::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  // Fixed y range when lo < hi, otherwise fitted to the data.
  double y_lo = 0.0, y_hi = 0.0;
};

std::string lines(const std::vector<Series>& series, const LineOptions& options);

// Row-normalised confusion matrix (truth rows, prediction columns).
std::string confusion_heatmap(const ConfusionMatrix& m, const std::string& title);

// Accuracy against mean confidence per occupied bin, with the diagonal.
std::string reliability_diagram(const CalibrationCurve& curve, const std::string& title);

// Greyscale raster scaled by its own maximum; optional marker at (row, col).
std::string image(const Grid<float>& pixels, const std::string& title, int mark_row = -1, int mark_col = -1);

}  // namespace segdepth::plot

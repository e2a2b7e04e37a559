#pragma once

#include <filesystem>
#include <vector>

#include "segdepth/grid.hpp"
#include "segdepth/lattice.hpp"

namespace segdepth {

enum class ImageSource { Proxy, External };

struct ImageMeta {
  double defocus_nm = 5.0;
  double pixel_size_pm = 5.3;
  ImageSource source = ImageSource::Proxy;
};

// Expected electron counts per unit dose. Non-negative and finite.
struct CleanImage {
  Grid<float> pixels;
  ImageMeta meta;
};

// Peak amplitude above background per species and depth (index = depth).
struct ContrastCurve {
  std::vector<double> heavy;
  std::vector<double> light;

  double amplitude(Species s, int depth) const;
  int max_depth() const { return static_cast<int>(heavy.size()) - 1; }
};

// Amplitude of the default curve for one species at the given depth.
//   HEAVY: scale * sin(pi * (d / 9.5)^1.5), peaks near d = 6 and reverses sign beyond 9.5.
//   LIGHT: 0.1 * scale * (1 - exp(-d / 3)), always bright and weaker than HEAVY.
double default_amplitude(Species s, int depth, double scale = 2.0);
std::vector<double> default_species_curve(Species s, int max_depth = kDefaultMaxDepth, double scale = 2.0);
ContrastCurve default_contrast_curve(int max_depth = kDefaultMaxDepth, double scale = 2.0);

// Multiplicative amplitude modulation standing in for defocus:
// cos(pi * (defocus - 5) / 24), i.e. 1 at 5 nm and ~0.87 at 1 or 9 nm.
double defocus_factor(double defocus_nm);

struct RenderParams {
  double defocus_nm = 5.0;
  double background = 1.0;
  double psf_sigma_px = 2.5;
};

// background + sum_k defocus_factor * curve[species_k][depth_k] * G_k, with G_k a
// unit-peak Gaussian centred on column k, clipped at 0. Throws
// std::invalid_argument for a non-positive background or sigma, and
// std::domain_error when more than 10% of the signal energy would be clipped.
CleanImage render(const AtomicModel& model, const ContrastCurve& curve, const RenderParams& params);

// Unclipped signal (image minus background); exposed for the linearity checks.
Grid<double> render_signal(const AtomicModel& model, const ContrastCurve& curve, const RenderParams& params);

// Reads a .tns raster (plus an optional "<path>.json" metadata sidecar).
// Throws std::runtime_error on malformed containers, non-2D shapes, negative
// or non-finite pixels.
CleanImage ingest_external(const std::filesystem::path& path);

void write_clean_image(const std::filesystem::path& path, const CleanImage& image);

}  // namespace segdepth

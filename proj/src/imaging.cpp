#include "segdepth/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "segdepth/tensor_io.hpp"

namespace segdepth {

double ContrastCurve::amplitude(Species s, int depth) const {
  const auto& c = s == Species::Heavy ? heavy : light;
  if (depth < 0 || depth >= static_cast<int>(c.size())) throw std::out_of_range("ContrastCurve: depth outside curve");
  return c[static_cast<std::size_t>(depth)];
}

double default_amplitude(Species s, int depth, double scale) {
  if (depth <= 0) return 0.0;
  const double d = depth;
  if (s == Species::Heavy) return scale * std::sin(std::numbers::pi * std::pow(d / 9.5, 1.5));
  return 0.1 * scale * (1.0 - std::exp(-d / 3.0));
}

std::vector<double> default_species_curve(Species s, int max_depth, double scale) {
  std::vector<double> c(static_cast<std::size_t>(max_depth) + 1);
  for (int d = 0; d <= max_depth; ++d) c[static_cast<std::size_t>(d)] = default_amplitude(s, d, scale);
  return c;
}

ContrastCurve default_contrast_curve(int max_depth, double scale) {
  return {default_species_curve(Species::Heavy, max_depth, scale), default_species_curve(Species::Light, max_depth, scale)};
}

double defocus_factor(double defocus_nm) { return std::cos(std::numbers::pi * (defocus_nm - 5.0) / 24.0); }

Grid<double> render_signal(const AtomicModel& model, const ContrastCurve& curve, const RenderParams& params) {
  if (!(params.psf_sigma_px > 0.0)) throw std::invalid_argument("render: psf_sigma_px must be > 0");
  const Shape2 shape = model.image_shape;
  Grid<double> signal(shape, 0.0);
  const double gain = defocus_factor(params.defocus_nm);
  const double inv2s2 = 1.0 / (2.0 * params.psf_sigma_px * params.psf_sigma_px);
  const int radius = static_cast<int>(std::ceil(6.0 * params.psf_sigma_px));

  for (const auto& col : model.columns) {
    const double amp = gain * curve.amplitude(col.species, col.depth);
    if (amp == 0.0) continue;
    const int r0 = static_cast<int>(std::floor(col.position.row));
    const int c0 = static_cast<int>(std::floor(col.position.col));
    for (int r = std::max(0, r0 - radius); r <= std::min(shape.rows - 1, r0 + radius + 1); ++r) {
      const double dr = r - col.position.row;
      for (int c = std::max(0, c0 - radius); c <= std::min(shape.cols - 1, c0 + radius + 1); ++c) {
        const double dc = c - col.position.col;
        signal(r, c) += amp * std::exp(-(dr * dr + dc * dc) * inv2s2);
      }
    }
  }
  return signal;
}

CleanImage render(const AtomicModel& model, const ContrastCurve& curve, const RenderParams& params) {
  if (!(params.background > 0.0)) throw std::invalid_argument("render: background must be > 0");
  const Grid<double> signal = render_signal(model, curve, params);

  double signal_energy = 0.0;
  double clipped_energy = 0.0;
  CleanImage img;
  img.pixels = Grid<float>(model.image_shape);
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const double v = params.background + signal[i];
    signal_energy += std::abs(signal[i]);
    if (v < 0.0) clipped_energy += -v;
    img.pixels[i] = static_cast<float>(std::max(0.0, v));
  }
  if (clipped_energy > 0.1 * signal_energy)
    throw std::domain_error("render: contrast curve and background clip more than 10% of the signal");
  img.meta = {params.defocus_nm, 5.3, ImageSource::Proxy};
  return img;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) { return path.string() + ".json"; }

}  // namespace

CleanImage ingest_external(const std::filesystem::path& path) {
  CleanImage img;
  img.pixels = read_grid(path);
  for (float v : img.pixels) {
    if (!std::isfinite(v)) throw std::runtime_error(path.string() + ": non-finite pixel");
    if (v < 0.0f) throw std::runtime_error(path.string() + ": negative pixel");
  }
  img.meta.source = ImageSource::External;
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const Json meta = read_json(side);
    img.meta.defocus_nm = meta.value("defocus_nm", img.meta.defocus_nm);
    img.meta.pixel_size_pm = meta.value("pixel_size_pm", img.meta.pixel_size_pm);
  }
  return img;
}

void write_clean_image(const std::filesystem::path& path, const CleanImage& image) {
  write_grid(path, image.pixels);
  write_json(sidecar_path(path), {{"defocus_nm", image.meta.defocus_nm},
                                  {"pixel_size_pm", image.meta.pixel_size_pm},
                                  {"source", image.meta.source == ImageSource::Proxy ? "PROXY" : "EXTERNAL"}});
}

}  // namespace segdepth

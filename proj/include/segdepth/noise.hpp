#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "segdepth/grid.hpp"
#include "segdepth/imaging.hpp"

namespace segdepth {

// Every pixel is k / lambda for a non-negative integer count k.
struct NoisyImage {
  Grid<float> pixels;
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

// x ~ Poisson(lambda * c) / lambda, drawn independently per pixel. The draw for
// pixel i depends only on (seed, i), so any pixel is reproducible in isolation.
NoisyImage corrupt(const Grid<float>& clean, double lambda, std::uint64_t seed);
inline NoisyImage corrupt(const CleanImage& clean, double lambda, std::uint64_t seed) {
  return corrupt(clean.pixels, lambda, seed);
}

// Seed of the noise realisation of one sample in one epoch.
std::uint64_t noise_seed(std::uint64_t run_seed, std::uint64_t sample_id, std::uint64_t epoch);

// Per-pixel sample mean / sample std (n - 1 normalisation) over the given
// realisations. Pixels with zero spread are missing and reported as NaN.
// Throws std::invalid_argument for fewer than two samples or mismatched
// shapes / lambdas.
Grid<double> empirical_snr(std::span<const NoisyImage> samples, const CleanImage& clean);

void write_noisy_image(const std::filesystem::path& path, const NoisyImage& image);
NoisyImage read_noisy_image(const std::filesystem::path& path);

}  // namespace segdepth

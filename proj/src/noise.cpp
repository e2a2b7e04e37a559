#include "segdepth/noise.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "segdepth/rng.hpp"
#include "segdepth/tensor_io.hpp"

namespace segdepth {

NoisyImage corrupt(const Grid<float>& clean, double lambda, std::uint64_t seed) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("corrupt: lambda must be a positive finite value");
  NoisyImage out{Grid<float>(clean.shape()), lambda, seed};
  const std::uint64_t key = derive_seed({seed, 0x9015e0ull});
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double c = clean[i];
    if (!(c >= 0.0)) throw std::invalid_argument("corrupt: clean pixels must be non-negative");
    if (c == 0.0) continue;
    CounterEngine eng(derive_seed({key, i}));
    std::poisson_distribution<std::int64_t> pois(lambda * c);
    out.pixels[i] = static_cast<float>(static_cast<double>(pois(eng)) / lambda);
  }
  return out;
}

std::uint64_t noise_seed(std::uint64_t run_seed, std::uint64_t sample_id, std::uint64_t epoch) {
  return derive_seed({run_seed, sample_id, epoch});
}

Grid<double> empirical_snr(std::span<const NoisyImage> samples, const CleanImage& clean) {
  if (samples.size() < 2) throw std::invalid_argument("empirical_snr: need at least two samples");
  for (const auto& s : samples) {
    if (s.pixels.shape() != clean.pixels.shape()) throw std::invalid_argument("empirical_snr: shape mismatch");
    if (s.lambda != samples.front().lambda) throw std::invalid_argument("empirical_snr: lambda mismatch");
  }
  const double n = static_cast<double>(samples.size());
  Grid<double> ratio(clean.pixels.shape(), 0.0);
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    // Welford keeps the variance exact for the integer-valued counts.
    double mean = 0.0, m2 = 0.0, k = 0.0;
    for (const auto& s : samples) {
      k += 1.0;
      const double x = s.pixels[i];
      const double delta = x - mean;
      mean += delta / k;
      m2 += delta * (x - mean);
    }
    const double sd = std::sqrt(m2 / (n - 1.0));
    ratio[i] = sd > 0.0 ? mean / sd : std::numeric_limits<double>::quiet_NaN();
  }
  return ratio;
}

void write_noisy_image(const std::filesystem::path& path, const NoisyImage& image) {
  write_grid(path, image.pixels);
  write_json(path.string() + ".json", {{"lambda", image.lambda}, {"seed", image.seed}});
}

NoisyImage read_noisy_image(const std::filesystem::path& path) {
  NoisyImage img;
  img.pixels = read_grid(path);
  const auto side = std::filesystem::path(path.string() + ".json");
  if (std::filesystem::exists(side)) {
    const Json meta = read_json(side);
    img.lambda = meta.value("lambda", img.lambda);
    img.seed = meta.value("seed", img.seed);
  }
  return img;
}

}  // namespace segdepth

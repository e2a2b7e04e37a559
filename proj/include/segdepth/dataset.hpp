#pragma once

// Proxy dataset: random surface models rendered to clean images, with their
// label bundles. On disk a dataset is a directory holding manifest.json and one
// sub-directory per sample (clean.tns, labels.tns, weights.tns, depth.tns,
// model.json).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdepth/imaging.hpp"
#include "segdepth/labels.hpp"
#include "segdepth/lattice.hpp"

namespace segdepth {

struct SimulationConfig {
  int count = 100;
  std::uint64_t seed = 0;
  // Offset of the first sample id, so that disjoint splits share one seed.
  int first_id = 0;
  Shape2 image_shape{128, 128};
  double pitch_px = 16.0;
  // Deepest column the generator may produce.
  int max_depth = 5;
  int base_depth_min = 3;
  int base_depth_max = 5;
  int wedge_rows_max = 2;
  int sawtooth_period_max = 3;
  double defocus_min_nm = 1.0;
  double defocus_max_nm = 9.0;
  double contrast_scale = 2.0;
  double psf_sigma_px = 2.5;
  double background = 1.0;
  // Label classes are 0..label_max_depth.
  LabelOptions labels{};
  GeneratorOptions generator{};

  void validate() const;
  nlohmann::json to_json() const;
  static SimulationConfig from_json(const nlohmann::json& j);
};

struct Sample {
  int id = 0;
  std::uint64_t seed = 0;
  SurfaceProfile profile;
  AtomicModel model;
  CleanImage clean;
  LabelBundle labels;
};

// Deterministic in the config: sample k depends only on (seed, first_id + k).
Sample simulate_sample(const SimulationConfig& config, int id);
std::vector<Sample> simulate(const SimulationConfig& config);

// Writes the samples in id order. Output is byte-identical for identical input.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                   const SimulationConfig& config);
std::vector<Sample> read_dataset(const std::filesystem::path& dir);
SimulationConfig read_dataset_config(const std::filesystem::path& dir);

}  // namespace segdepth

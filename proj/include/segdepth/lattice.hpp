#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdepth/grid.hpp"

namespace segdepth {

inline constexpr int kDefaultMaxDepth = 10;

enum class Species { Heavy, Light };

std::string to_string(Species s);
Species species_from_string(const std::string& s);

struct Point2 {
  double row = 0.0;
  double col = 0.0;

  bool operator==(const Point2&) const = default;
};

// An atomic column seen end-on. depth is the atom count; 0 marks a vacancy.
struct Column {
  Point2 position;
  Species species = Species::Heavy;
  int depth = 0;

  bool operator==(const Column&) const = default;
};

struct AtomicModel {
  std::vector<Column> columns;
  double lattice_pitch_px = 0.0;
  Shape2 image_shape;

  bool operator==(const AtomicModel&) const = default;
};

enum class ProfileKind { Flat, Sawtooth, Stepped };

std::string to_string(ProfileKind k);
ProfileKind profile_kind_from_string(const std::string& s);

struct SurfaceProfile {
  ProfileKind kind = ProfileKind::Flat;
  int base_depth = 5;
  // Near-surface rows over which the depth tapers linearly toward the surface.
  int wedge_rows = 0;
  // Number of consecutive columns sharing the same sawtooth offset.
  int sawtooth_period = 1;
};

struct GeneratorOptions {
  int max_depth = kDefaultMaxDepth;
  // LIGHT columns sit at +/- this fraction of the pitch from each HEAVY column.
  double light_offset_frac = 0.25;
  // Each LIGHT column keeps a fraction u ~ U[light_occupancy_min, 1] of its
  // HEAVY neighbour's depth (rounded, at least 1).
  double light_occupancy_min = 1.0;
  // Probability that a column is emptied (depth 0 vacancy marker).
  double vacancy_prob = 0.0;
  // The surface row sits at a fraction v ~ U[vacuum_min, vacuum_max] of the
  // image height; rows above it are vacuum.
  double vacuum_min = 0.25;
  double vacuum_max = 0.5;
};

// Throws std::invalid_argument when the pitch is below 4 px or the shape cannot
// hold a 2x2 block of HEAVY columns for every seed.
AtomicModel generate_model(const SurfaceProfile& profile, Shape2 image_shape, double pitch, std::uint64_t seed,
                           const GeneratorOptions& options = {});

// Throws std::invalid_argument if any AtomicModel invariant is violated.
void validate_model(const AtomicModel& model, int max_depth = kDefaultMaxDepth);

struct ModelStats {
  int heavy_columns = 0;
  int light_columns = 0;
  std::vector<int> depth_histogram;  // index = depth, size max_depth + 1
};

ModelStats model_stats(const AtomicModel& model, int max_depth = kDefaultMaxDepth);

nlohmann::json to_json(const AtomicModel& model);
AtomicModel model_from_json(const nlohmann::json& doc);

}  // namespace segdepth

#include "segdepth/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>

#include "segdepth/rng.hpp"

namespace segdepth {

std::string to_string(Species s) { return s == Species::Heavy ? "HEAVY" : "LIGHT"; }

Species species_from_string(const std::string& s) {
  if (s == "HEAVY") return Species::Heavy;
  if (s == "LIGHT") return Species::Light;
  throw std::invalid_argument("unknown species '" + s + "'");
}

std::string to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::Flat: return "FLAT";
    case ProfileKind::Sawtooth: return "SAWTOOTH";
    case ProfileKind::Stepped: return "STEPPED";
  }
  return "FLAT";
}

ProfileKind profile_kind_from_string(const std::string& s) {
  if (s == "FLAT") return ProfileKind::Flat;
  if (s == "SAWTOOTH") return ProfileKind::Sawtooth;
  if (s == "STEPPED") return ProfileKind::Stepped;
  throw std::invalid_argument("unknown surface profile '" + s + "'");
}

namespace {

int linear_taper(int bulk_depth, int row_from_surface, int wedge_rows) {
  if (row_from_surface >= wedge_rows) return bulk_depth;
  const double frac = static_cast<double>(row_from_surface + 1) / static_cast<double>(wedge_rows + 1);
  return std::max(1, static_cast<int>(std::lround(bulk_depth * frac)));
}

}  // namespace

AtomicModel generate_model(const SurfaceProfile& profile, Shape2 image_shape, double pitch, std::uint64_t seed,
                           const GeneratorOptions& options) {
  if (!(pitch >= 4.0)) throw std::invalid_argument("generate_model: pitch must be at least 4 px");
  if (profile.wedge_rows < 0) throw std::invalid_argument("generate_model: wedge_rows must be >= 0");
  if (profile.base_depth < 1 || profile.base_depth > options.max_depth)
    throw std::invalid_argument("generate_model: base_depth outside [1, max_depth]");
  if (profile.sawtooth_period < 1) throw std::invalid_argument("generate_model: sawtooth_period must be >= 1");
  if (options.vacuum_min < 0.0 || options.vacuum_max >= 1.0 || options.vacuum_min > options.vacuum_max)
    throw std::invalid_argument("generate_model: vacuum fraction range must lie in [0, 1)");

  const double light_dx = options.light_offset_frac * pitch;
  const double max_row = image_shape.rows - 1.0;
  const double max_col = image_shape.cols - 1.0;
  // Worst case over seeds: surface at vacuum_max, first HEAVY column at light_dx + pitch.
  if (max_row * (1.0 - options.vacuum_max) < pitch || max_col - (light_dx + pitch) < pitch)
    throw std::invalid_argument("generate_model: image_shape too small to hold 2x2 HEAVY columns");

  CounterEngine rng(derive_seed({seed, 0x1a77ull}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double vacuum = options.vacuum_min + (options.vacuum_max - options.vacuum_min) * unit(rng);
  const double surface_row = vacuum * max_row;
  const double first_col = light_dx + pitch * unit(rng);

  const int n_rows = static_cast<int>(std::floor((max_row - surface_row) / pitch)) + 1;
  const int n_cols = static_cast<int>(std::floor((max_col - first_col) / pitch)) + 1;
  const int step_col = 1 + static_cast<int>(unit(rng) * (n_cols - 1));

  auto bulk_depth = [&](int j) {
    int d = profile.base_depth;
    switch (profile.kind) {
      case ProfileKind::Flat: break;
      case ProfileKind::Sawtooth: d += ((j / profile.sawtooth_period) % 2 == 0) ? 1 : -1; break;
      case ProfileKind::Stepped: d -= (j >= step_col) ? 1 : 0; break;
    }
    return std::clamp(d, 1, options.max_depth);
  };

  AtomicModel model;
  model.lattice_pitch_px = pitch;
  model.image_shape = image_shape;

  for (int r = 0; r < n_rows; ++r) {
    const double row = surface_row + r * pitch;
    for (int j = 0; j < n_cols; ++j) {
      const double col = first_col + j * pitch;
      int depth = linear_taper(bulk_depth(j), r, profile.wedge_rows);
      if (options.vacancy_prob > 0.0 && unit(rng) < options.vacancy_prob) depth = 0;
      model.columns.push_back({{row, col}, Species::Heavy, depth});

      for (double dx : {-light_dx, light_dx}) {
        const double lc = col + dx;
        const double u = options.light_occupancy_min + (1.0 - options.light_occupancy_min) * unit(rng);
        if (lc < 0.0 || lc > max_col) continue;
        const int light_depth = depth == 0 ? 0 : std::max(1, static_cast<int>(std::lround(u * depth)));
        model.columns.push_back({{row, lc}, Species::Light, light_depth});
      }
    }
  }
  return model;
}

void validate_model(const AtomicModel& model, int max_depth) {
  std::set<std::pair<int, int>> pixels;
  for (const auto& c : model.columns) {
    if (!(c.position.row >= 0.0 && c.position.row <= model.image_shape.rows - 1.0 && c.position.col >= 0.0 &&
          c.position.col <= model.image_shape.cols - 1.0))
      throw std::invalid_argument("AtomicModel: column position outside image_shape");
    if (c.depth < 0 || c.depth > max_depth) throw std::invalid_argument("AtomicModel: column depth outside [0, D_max]");
    const auto px = std::make_pair(static_cast<int>(std::floor(c.position.row + 0.5)),
                                   static_cast<int>(std::floor(c.position.col + 0.5)));
    if (!pixels.insert(px).second) throw std::invalid_argument("AtomicModel: two columns share a pixel");
  }
  if (model.lattice_pitch_px <= 0.0) throw std::invalid_argument("AtomicModel: pitch must be positive");
}

ModelStats model_stats(const AtomicModel& model, int max_depth) {
  ModelStats s;
  s.depth_histogram.assign(static_cast<std::size_t>(max_depth) + 1, 0);
  for (const auto& c : model.columns) {
    (c.species == Species::Heavy ? s.heavy_columns : s.light_columns) += 1;
    if (c.depth < 0 || c.depth > max_depth) throw std::invalid_argument("model_stats: depth outside histogram range");
    s.depth_histogram[static_cast<std::size_t>(c.depth)] += 1;
  }
  return s;
}

nlohmann::json to_json(const AtomicModel& model) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : model.columns)
    cols.push_back({{"row", c.position.row}, {"col", c.position.col}, {"species", to_string(c.species)}, {"depth", c.depth}});
  return {{"image_shape", {model.image_shape.rows, model.image_shape.cols}},
          {"pitch", model.lattice_pitch_px},
          {"columns", std::move(cols)}};
}

AtomicModel model_from_json(const nlohmann::json& doc) {
  AtomicModel m;
  try {
    const auto& shape = doc.at("image_shape");
    if (!shape.is_array() || shape.size() != 2) throw std::invalid_argument("AtomicModel JSON: image_shape must be [h, w]");
    m.image_shape = {shape[0].get<int>(), shape[1].get<int>()};
    m.lattice_pitch_px = doc.at("pitch").get<double>();
    for (const auto& c : doc.at("columns"))
      m.columns.push_back({{c.at("row").get<double>(), c.at("col").get<double>()},
                           species_from_string(c.at("species").get<std::string>()),
                           c.at("depth").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("AtomicModel JSON: ") + e.what());
  }
  return m;
}

}  // namespace segdepth

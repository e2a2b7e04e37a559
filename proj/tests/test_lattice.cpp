#include <doctest.h>

#include <map>
#include <set>
#include <stdexcept>

#include "segdepth/lattice.hpp"

using namespace segdepth;

namespace {

// Heavy-column depths keyed by row position, top row first.
std::map<double, std::set<int>> heavy_depth_by_row(const AtomicModel& m) {
  std::map<double, std::set<int>> out;
  for (const Column& c : m.columns)
    if (c.species == Species::Heavy) out[c.position.row].insert(c.depth);
  return out;
}

}  // namespace

TEST_CASE("flat profile without taper is constant") {
  const SurfaceProfile p{ProfileKind::Flat, 5, 0, 1};
  const AtomicModel m = generate_model(p, {128, 128}, 16.0, 7);
  REQUIRE(!m.columns.empty());
  for (const Column& c : m.columns) CHECK(c.depth == 5);
  validate_model(m);
}

TEST_CASE("flat profile with a two-row taper") {
  const SurfaceProfile p{ProfileKind::Flat, 3, 2, 1};
  const AtomicModel m = generate_model(p, {128, 128}, 16.0, 11);
  const auto rows = heavy_depth_by_row(m);
  REQUIRE(rows.size() >= 3);
  auto it = rows.begin();
  CHECK(it->second == std::set<int>{1});
  ++it;
  CHECK(it->second == std::set<int>{2});
  for (++it; it != rows.end(); ++it) CHECK(it->second == std::set<int>{3});
}

TEST_CASE("generation is deterministic in the seed") {
  for (ProfileKind k : {ProfileKind::Flat, ProfileKind::Sawtooth, ProfileKind::Stepped}) {
    const SurfaceProfile p{k, 4, 1, 2};
    GeneratorOptions opt;
    opt.vacancy_prob = 0.1;
    opt.light_occupancy_min = 0.5;
    CHECK(generate_model(p, {128, 96}, 12.0, 99, opt) == generate_model(p, {128, 96}, 12.0, 99, opt));
  }
  const SurfaceProfile p{ProfileKind::Sawtooth, 4, 1, 2};
  CHECK_FALSE(generate_model(p, {128, 128}, 16.0, 1) == generate_model(p, {128, 128}, 16.0, 2));
}

TEST_CASE("generated models satisfy the invariants") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const SurfaceProfile p{static_cast<ProfileKind>(seed % 3), 1 + static_cast<int>(seed % 10),
                           static_cast<int>(seed % 4), 1 + static_cast<int>(seed % 3)};
    GeneratorOptions opt;
    opt.vacancy_prob = 0.05;
    const AtomicModel m = generate_model(p, {128, 128}, 16.0, seed, opt);
    CHECK_NOTHROW(validate_model(m));
    for (const Column& c : m.columns) {
      CHECK(c.depth >= 0);
      CHECK(c.depth <= kDefaultMaxDepth);
      CHECK(c.position.row >= 0.0);
      CHECK(c.position.row < 128.0);
      CHECK(c.position.col >= 0.0);
      CHECK(c.position.col < 128.0);
    }
  }
}

TEST_CASE("light columns sit a quarter pitch from a heavy column") {
  const double pitch = 16.0;
  const AtomicModel m = generate_model({ProfileKind::Flat, 4, 0, 1}, {128, 128}, pitch, 3);
  int light = 0;
  for (const Column& l : m.columns) {
    if (l.species != Species::Light) continue;
    ++light;
    bool found = false;
    for (const Column& h : m.columns)
      if (h.species == Species::Heavy && h.position.row == l.position.row &&
          std::abs(std::abs(h.position.col - l.position.col) - pitch / 4) < 1e-9)
        found = true;
    CHECK(found);
  }
  CHECK(light > 0);
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(generate_model({ProfileKind::Flat, 5, 0, 1}, {128, 128}, 3.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_model({ProfileKind::Flat, 5, 0, 1}, {16, 16}, 16.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_model({ProfileKind::Flat, 0, 0, 1}, {128, 128}, 16.0, 0), std::invalid_argument);

  AtomicModel bad{{{{200.0, 5.0}, Species::Heavy, 3}}, 16.0, {128, 128}};
  CHECK_THROWS_AS(validate_model(bad), std::invalid_argument);
  bad.columns[0].position = {5.0, 5.0};
  bad.columns[0].depth = 11;
  CHECK_THROWS_AS(validate_model(bad), std::invalid_argument);
}

TEST_CASE("model statistics") {
  AtomicModel m;
  m.image_shape = {64, 64};
  m.lattice_pitch_px = 8.0;
  ModelStats s = model_stats(m);
  CHECK(s.heavy_columns == 0);
  CHECK(s.depth_histogram == std::vector<int>(kDefaultMaxDepth + 1, 0));

  for (int k = 0; k < 10; ++k) m.columns.push_back({{4.0 + 5.0 * k, 8.0}, Species::Heavy, 5});
  s = model_stats(m);
  CHECK(s.heavy_columns == 10);
  CHECK(s.light_columns == 0);
  for (int d = 0; d <= kDefaultMaxDepth; ++d) CHECK(s.depth_histogram[d] == (d == 5 ? 10 : 0));

  const AtomicModel r = generate_model({ProfileKind::Stepped, 6, 2, 1}, {128, 128}, 16.0, 5, {10, 0.25, 0.3, 0.1});
  s = model_stats(r);
  std::vector<int> hist(kDefaultMaxDepth + 1, 0);
  int heavy = 0, light = 0;
  for (const Column& c : r.columns) {
    ++hist[c.depth];
    (c.species == Species::Heavy ? heavy : light)++;
  }
  CHECK(s.depth_histogram == hist);
  CHECK(s.heavy_columns == heavy);
  CHECK(s.light_columns == light);
}

TEST_CASE("json round trip of a model") {
  const AtomicModel m = generate_model({ProfileKind::Sawtooth, 5, 1, 2}, {128, 128}, 16.0, 8);
  CHECK(model_from_json(to_json(m)) == m);
  CHECK(species_from_string(to_string(Species::Light)) == Species::Light);
  CHECK(profile_kind_from_string(to_string(ProfileKind::Stepped)) == ProfileKind::Stepped);
  CHECK_THROWS(species_from_string("IRON"));
}

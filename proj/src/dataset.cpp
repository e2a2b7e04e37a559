#include "segdepth/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "segdepth/rng.hpp"
#include "segdepth/tensor_io.hpp"

namespace segdepth {

namespace {

constexpr const char* kManifestVersion = "segdepth-dataset-1";

Grid<float> to_float(const Grid<int>& g) {
  Grid<float> out(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<float>(g[i]);
  return out;
}

Grid<int> to_int(const Grid<float>& g, const std::filesystem::path& path) {
  Grid<int> out(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const float v = g[i];
    if (!(v >= 0.0f) || v != std::floor(v)) throw std::runtime_error(path.string() + ": expected non-negative integers");
    out[i] = static_cast<int>(v);
  }
  return out;
}

std::string sample_dir(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05d", id);
  return buf;
}

}  // namespace

void SimulationConfig::validate() const {
  if (count < 1) throw std::invalid_argument("simulate: count must be >= 1");
  if (first_id < 0) throw std::invalid_argument("simulate: first_id must be >= 0");
  if (max_depth < 1 || max_depth > labels.max_depth)
    throw std::invalid_argument("simulate: max_depth must lie in [1, label max_depth]");
  if (base_depth_min < 1 || base_depth_min > base_depth_max || base_depth_max > max_depth)
    throw std::invalid_argument("simulate: base depth range must lie in [1, max_depth]");
  if (wedge_rows_max < 0 || sawtooth_period_max < 1) throw std::invalid_argument("simulate: bad profile ranges");
  if (!(defocus_min_nm <= defocus_max_nm)) throw std::invalid_argument("simulate: bad defocus range");
  if (labels.downsample < 1 || image_shape.rows % labels.downsample || image_shape.cols % labels.downsample)
    throw std::invalid_argument("simulate: image shape must be a multiple of the label downsampling");
}

nlohmann::json SimulationConfig::to_json() const {
  return {{"count", count},
          {"seed", seed},
          {"first_id", first_id},
          {"image_shape", {image_shape.rows, image_shape.cols}},
          {"pitch_px", pitch_px},
          {"max_depth", max_depth},
          {"base_depth_min", base_depth_min},
          {"base_depth_max", base_depth_max},
          {"wedge_rows_max", wedge_rows_max},
          {"sawtooth_period_max", sawtooth_period_max},
          {"defocus_min_nm", defocus_min_nm},
          {"defocus_max_nm", defocus_max_nm},
          {"contrast_scale", contrast_scale},
          {"psf_sigma_px", psf_sigma_px},
          {"background", background},
          {"labels",
           {{"downsample", labels.downsample},
            {"ring_px", labels.ring_px},
            {"sigma_px", labels.sigma_px},
            {"w_floor", labels.w_floor},
            {"max_depth", labels.max_depth}}},
          {"generator",
           {{"light_offset_frac", generator.light_offset_frac},
            {"light_occupancy_min", generator.light_occupancy_min},
            {"vacancy_prob", generator.vacancy_prob},
            {"vacuum_min", generator.vacuum_min},
            {"vacuum_max", generator.vacuum_max}}}};
}

SimulationConfig SimulationConfig::from_json(const nlohmann::json& j) {
  SimulationConfig c;
  c.count = j.value("count", c.count);
  c.seed = j.value("seed", c.seed);
  c.first_id = j.value("first_id", c.first_id);
  if (j.contains("image_shape")) c.image_shape = {j["image_shape"].at(0).get<int>(), j["image_shape"].at(1).get<int>()};
  c.pitch_px = j.value("pitch_px", c.pitch_px);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.base_depth_min = j.value("base_depth_min", c.base_depth_min);
  c.base_depth_max = j.value("base_depth_max", c.base_depth_max);
  c.wedge_rows_max = j.value("wedge_rows_max", c.wedge_rows_max);
  c.sawtooth_period_max = j.value("sawtooth_period_max", c.sawtooth_period_max);
  c.defocus_min_nm = j.value("defocus_min_nm", c.defocus_min_nm);
  c.defocus_max_nm = j.value("defocus_max_nm", c.defocus_max_nm);
  c.contrast_scale = j.value("contrast_scale", c.contrast_scale);
  c.psf_sigma_px = j.value("psf_sigma_px", c.psf_sigma_px);
  c.background = j.value("background", c.background);
  if (j.contains("labels")) {
    const auto& l = j["labels"];
    c.labels.downsample = l.value("downsample", c.labels.downsample);
    c.labels.ring_px = l.value("ring_px", c.labels.ring_px);
    c.labels.sigma_px = l.value("sigma_px", c.labels.sigma_px);
    c.labels.w_floor = l.value("w_floor", c.labels.w_floor);
    c.labels.max_depth = l.value("max_depth", c.labels.max_depth);
  }
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    c.generator.light_offset_frac = g.value("light_offset_frac", c.generator.light_offset_frac);
    c.generator.light_occupancy_min = g.value("light_occupancy_min", c.generator.light_occupancy_min);
    c.generator.vacancy_prob = g.value("vacancy_prob", c.generator.vacancy_prob);
    c.generator.vacuum_min = g.value("vacuum_min", c.generator.vacuum_min);
    c.generator.vacuum_max = g.value("vacuum_max", c.generator.vacuum_max);
  }
  return c;
}

Sample simulate_sample(const SimulationConfig& config, int id) {
  Sample s;
  s.id = id;
  s.seed = derive_seed({config.seed, static_cast<std::uint64_t>(id), 0xda7aull});
  CounterEngine rng(s.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](int lo, int hi) { return lo + std::min(hi - lo, static_cast<int>(unit(rng) * (hi - lo + 1))); };

  s.profile.kind = static_cast<ProfileKind>(pick(0, 2));
  s.profile.base_depth = pick(config.base_depth_min, config.base_depth_max);
  s.profile.wedge_rows = pick(0, config.wedge_rows_max);
  s.profile.sawtooth_period = pick(1, config.sawtooth_period_max);
  const double defocus = config.defocus_min_nm + (config.defocus_max_nm - config.defocus_min_nm) * unit(rng);

  GeneratorOptions gen = config.generator;
  gen.max_depth = config.max_depth;
  s.model = generate_model(s.profile, config.image_shape, config.pitch_px, rng(), gen);

  RenderParams params;
  params.defocus_nm = defocus;
  params.background = config.background;
  params.psf_sigma_px = config.psf_sigma_px;
  s.clean = render(s.model, default_contrast_curve(config.labels.max_depth, config.contrast_scale), params);
  s.labels = make_label_bundle(s.model, config.labels);
  return s;
}

std::vector<Sample> simulate(const SimulationConfig& config) {
  config.validate();
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(config.count));
  for (int k = 0; k < config.count; ++k) out.push_back(simulate_sample(config, config.first_id + k));
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                   const SimulationConfig& config) {
  if (samples.empty()) throw std::invalid_argument("write_dataset: no samples");
  std::filesystem::create_directories(dir);
  nlohmann::json list = nlohmann::json::array();
  for (const Sample& s : samples) {
    const std::string sub = sample_dir(s.id);
    std::filesystem::create_directories(dir / sub);
    write_clean_image(dir / sub / "clean.tns", s.clean);
    write_grid(dir / sub / "labels.tns", to_float(s.labels.smoothed));
    write_grid(dir / sub / "weights.tns", s.labels.weights);
    write_grid(dir / sub / "depth.tns", to_float(s.labels.depth));
    nlohmann::json model = to_json(s.model);
    model["profile"] = {{"kind", to_string(s.profile.kind)},
                        {"base_depth", s.profile.base_depth},
                        {"wedge_rows", s.profile.wedge_rows},
                        {"sawtooth_period", s.profile.sawtooth_period}};
    write_json(dir / sub / "model.json", model);
    list.push_back({{"id", s.id},
                    {"clean", sub + "/clean.tns"},
                    {"labels", sub + "/labels.tns"},
                    {"weights", sub + "/weights.tns"},
                    {"depth", sub + "/depth.tns"},
                    {"model", sub + "/model.json"},
                    {"seed", s.seed}});
  }
  write_json(dir / "manifest.json", {{"version", kManifestVersion}, {"config", config.to_json()}, {"samples", list}});
}

SimulationConfig read_dataset_config(const std::filesystem::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  return SimulationConfig::from_json(manifest.value("config", nlohmann::json::object()));
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  if (manifest.value("version", "") != kManifestVersion)
    throw std::runtime_error((dir / "manifest.json").string() + ": unsupported dataset version");
  const SimulationConfig config = SimulationConfig::from_json(manifest.value("config", nlohmann::json::object()));
  std::vector<Sample> out;
  for (const auto& e : manifest.at("samples")) {
    Sample s;
    s.id = e.at("id").get<int>();
    s.seed = e.at("seed").get<std::uint64_t>();
    s.clean = ingest_external(dir / e.at("clean").get<std::string>());
    s.clean.meta.source = ImageSource::Proxy;
    const auto labels_path = dir / e.at("labels").get<std::string>();
    s.labels.smoothed = to_int(read_grid(labels_path), labels_path);
    s.labels.weights = read_grid(dir / e.at("weights").get<std::string>());
    if (e.contains("depth")) {
      const auto depth_path = dir / e.at("depth").get<std::string>();
      s.labels.depth = to_int(read_grid(depth_path), depth_path);
    }
    const auto model = read_json(dir / e.at("model").get<std::string>());
    s.model = model_from_json(model);
    if (model.contains("profile")) {
      const auto& p = model["profile"];
      s.profile.kind = profile_kind_from_string(p.at("kind").get<std::string>());
      s.profile.base_depth = p.at("base_depth").get<int>();
      s.profile.wedge_rows = p.at("wedge_rows").get<int>();
      s.profile.sawtooth_period = p.at("sawtooth_period").get<int>();
    }
    if (s.labels.smoothed.shape() != s.labels.weights.shape())
      throw std::runtime_error(labels_path.string() + ": label and weight shapes differ");
    if (s.labels.smoothed.rows() * config.labels.downsample != s.clean.pixels.rows() ||
        s.labels.smoothed.cols() * config.labels.downsample != s.clean.pixels.cols())
      throw std::runtime_error(labels_path.string() + ": label resolution does not match the image");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::runtime_error((dir / "manifest.json").string() + ": dataset has no samples");
  return out;
}

}  // namespace segdepth

#include "segdepth/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "segdepth/dataset.hpp"
#include "segdepth/evaluation.hpp"
#include "segdepth/network.hpp"
#include "segdepth/noise.hpp"
#include "segdepth/plot.hpp"
#include "segdepth/saliency.hpp"
#include "segdepth/tensor_io.hpp"
#include "segdepth/training.hpp"

namespace segdepth::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json command_defaults(const std::string& command) {
  json d = {{"command", command},
            {"out", "out"},
            {"plots", false},
            {"seed", 0},
            {"lambda", 2.5},
            {"simulation", SimulationConfig{}.to_json()},
            {"model", ModelConfig{}.to_json()},
            {"train", TrainConfig{}.to_json()}};
  if (command == "train") d["baseline"] = "none";
  if (command == "eval") {
    d["truth"] = "smoothed";
    d["n_bins"] = 10;
  }
  if (command == "sweep") {
    d["lambdas"] = {0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0};
    d["truth"] = "smoothed";
  }
  if (command == "saliency") {
    d["depth"] = -1;
    d["sample"] = 0;
  }
  if (command == "params") d["base_channels_list"] = {8, 16, 32, 64};
  return d;
}

const json& require(const json& run, const char* key) {
  if (!run.contains(key) || run[key].is_null())
    throw std::invalid_argument(std::string("missing required setting '") + key + "'");
  return run[key];
}

fs::path out_dir(const json& run) {
  const fs::path out = run.at("out").get<std::string>();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw std::runtime_error(out.string() + ": output directory is not writable");
  return out;
}

void echo(const json& run, const fs::path& out) { write_json(out / "run_config.json", run); }

bool plots(const json& run) { return run.value("plots", false); }

TruthKind truth_kind(const json& run) {
  const std::string t = run.value("truth", "smoothed");
  if (t == "smoothed") return TruthKind::Smoothed;
  if (t == "raw") return TruthKind::Raw;
  throw std::invalid_argument("truth must be 'smoothed' or 'raw'");
}

std::vector<std::pair<int, int>> pixel_list(const json& run) {
  std::vector<std::pair<int, int>> out;
  for (const auto& p : require(run, "pixels")) out.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  if (out.empty()) throw std::invalid_argument("no pixels given");
  return out;
}

void check_resolution(const Network& net, const Sample& s) {
  const int rows = s.clean.pixels.rows(), cols = s.clean.pixels.cols();
  if (rows < net.config().min_input_size() || cols < net.config().min_input_size())
    throw std::invalid_argument("image " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " is smaller than the network's minimum input size");
  const int out_r = (((rows + 1) / 2) + 1) / 2, out_c = (((cols + 1) / 2) + 1) / 2;
  if (s.labels.smoothed.rows() != out_r || s.labels.smoothed.cols() != out_c)
    throw std::invalid_argument("resolution mismatch: labels are " + std::to_string(s.labels.smoothed.rows()) + "x" +
                                std::to_string(s.labels.smoothed.cols()) + " but the network outputs " +
                                std::to_string(out_r) + "x" + std::to_string(out_c));
}

std::string model_id(const fs::path& checkpoint) {
  const fs::path p = checkpoint.filename().empty() ? checkpoint.parent_path() : checkpoint;
  return p.filename().string() == "checkpoint" ? p.parent_path().filename().string() : p.filename().string();
}

void write_loss_plot(const fs::path& path, const std::vector<std::pair<std::string, TrainRecord>>& records) {
  std::vector<plot::Series> series;
  for (const auto& [name, rec] : records) {
    plot::Series tr{name + " train", {}, {}}, va{name + " val", {0.0}, {rec.initial_val_loss}};
    for (const auto& e : rec.epochs) {
      tr.x.push_back(e.epoch);
      tr.y.push_back(e.train_loss);
      va.x.push_back(e.epoch);
      va.y.push_back(e.val_loss);
    }
    series.push_back(std::move(tr));
    series.push_back(std::move(va));
  }
  write_text(path, plot::lines(series, {"loss per image", "epoch", "loss", false, 0.0, 0.0}));
}

// Optional denoise-then-segment pipeline when "denoiser" is set.
struct LoadedModel {
  std::string id;
  Network net;
  std::optional<Denoiser<float>> denoiser;

  BatchPredictor predictor() const {
    if (denoiser) return [this](const nn::Tensor<float>& x) { return net.infer(denoiser->infer(x)); };
    return segdepth::predictor(net);
  }
};

}  // namespace

json resolve_config(const std::string& command, const json& file, const json& overrides) {
  json run = command_defaults(command);
  if (!file.is_null()) {
    if (!file.is_object()) throw std::invalid_argument("config file must hold a JSON object");
    run.merge_patch(file);
  }
  run.merge_patch(overrides);
  run["command"] = command;
  const bool seed_set = file.contains("seed") || overrides.contains("seed");
  const bool lambda_set = file.contains("lambda") || overrides.contains("lambda");
  if (seed_set) {
    run["simulation"]["seed"] = run["seed"];
    run["train"]["seed"] = run["seed"];
  }
  if (lambda_set) run["train"]["lambda"] = run["lambda"];
  if (run.contains("base_channels")) run["model"]["base_channels"] = run["base_channels"];
  // Normalise the sections through their typed forms so the echo is complete.
  run["model"] = ModelConfig::from_json(run["model"]).to_json();
  run["train"] = TrainConfig::from_json(run["train"]).to_json();
  run["simulation"] = SimulationConfig::from_json(run["simulation"]).to_json();
  if (!(run["lambda"].get<double>() > 0.0)) throw std::invalid_argument("lambda must be > 0");
  return run;
}

// ---------------------------------------------------------------- simulate

void cmd_simulate(const json& run) {
  const SimulationConfig config = SimulationConfig::from_json(run.at("simulation"));
  config.validate();
  const fs::path out = out_dir(run);
  echo(run, out);
  const std::vector<Sample> samples = simulate(config);
  write_dataset(out, samples, config);
  if (plots(run)) {
    fs::create_directories(out / "plots");
    const std::size_t n = std::min<std::size_t>(samples.size(), 4);
    for (std::size_t i = 0; i < n; ++i) {
      const Sample& s = samples[i];
      write_text(out / "plots" / ("clean_" + std::to_string(s.id) + ".svg"),
                 plot::image(s.clean.pixels, "clean image " + std::to_string(s.id)));
      Grid<float> labels(s.labels.smoothed.shape());
      for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = static_cast<float>(s.labels.smoothed[k]);
      write_text(out / "plots" / ("labels_" + std::to_string(s.id) + ".svg"),
                 plot::image(labels, "smoothed labels " + std::to_string(s.id)));
    }
  }
}

// ---------------------------------------------------------------- train

void cmd_train(const json& run) {
  const TrainConfig tc = TrainConfig::from_json(run.at("train"));
  const ModelConfig mc = ModelConfig::from_json(run.at("model"));
  const fs::path data_dir = require(run, "data").get<std::string>();
  const fs::path out = out_dir(run);
  std::vector<Sample> data = read_dataset(data_dir);
  std::vector<Sample> train_set, val_set;
  if (run.contains("val_data") && !run["val_data"].is_null()) {
    std::vector<Sample> val = read_dataset(run["val_data"].get<std::string>());
    if (data.size() < static_cast<std::size_t>(tc.train_size) || val.size() < static_cast<std::size_t>(tc.val_size))
      throw std::invalid_argument("datasets hold fewer samples than train_size / val_size");
    train_set.assign(data.begin(), data.begin() + tc.train_size);
    val_set.assign(val.begin(), val.begin() + tc.val_size);
  } else {
    if (data.size() < static_cast<std::size_t>(tc.train_size + tc.val_size))
      throw std::invalid_argument("dataset holds " + std::to_string(data.size()) + " samples; train_size + val_size = " +
                                  std::to_string(tc.train_size + tc.val_size));
    train_set.assign(data.begin(), data.begin() + tc.train_size);
    val_set.assign(data.begin() + tc.train_size, data.begin() + tc.train_size + tc.val_size);
  }
  {
    Network probe(mc, 0);
    check_resolution(probe, train_set.front());
  }
  echo(run, out);

  auto log_epoch = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " lr " << e.lr << " ("
              << e.seconds << " s)\n";
  };
  const std::string baseline = run.value("baseline", "none");
  std::vector<std::pair<std::string, TrainRecord>> records;
  if (baseline == "none") {
    TrainResult res = train(tc, mc, train_set, val_set, log_epoch);
    save_checkpoint(out / "checkpoint", res.net);
    records.emplace_back("segmentation", res.record);
  } else if (baseline == "sequential" || baseline == "joint") {
    PipelineResult res = baseline == "sequential" ? train_sequential_baseline(tc, mc, train_set, val_set, log_epoch)
                                                  : train_joint_baseline(tc, mc, train_set, val_set, log_epoch);
    save_checkpoint(out / "checkpoint", res.model.segmenter);
    save_denoiser(out / "denoiser", res.model.denoiser);
    if (baseline == "sequential") records.emplace_back("denoiser", res.denoiser_record);
    records.emplace_back(baseline == "sequential" ? "segmentation" : "joint", res.segmenter_record);
  } else {
    throw std::invalid_argument("baseline must be 'none', 'sequential' or 'joint'");
  }
  json rec_json = json::object();
  for (const auto& [name, rec] : records) {
    rec_json[name] = rec.to_json();
    write_text(out / ("train_record_" + name + ".csv"), rec.to_csv());
  }
  write_text(out / "train_record.csv", records.back().second.to_csv());
  write_json(out / "train_record.json", rec_json);
  if (plots(run)) {
    fs::create_directories(out / "plots");
    write_loss_plot(out / "plots" / "loss.svg", records);
  }
}

// ---------------------------------------------------------------- eval

namespace {

LoadedModel load_model(const json& run, const fs::path& checkpoint) {
  LoadedModel m{model_id(checkpoint), load_checkpoint(checkpoint), std::nullopt};
  if (run.contains("denoiser") && !run["denoiser"].is_null()) m.denoiser = load_denoiser(run["denoiser"].get<std::string>());
  return m;
}

std::vector<Sample> test_samples(const json& run, const Network& net) {
  std::vector<Sample> data = read_dataset(require(run, "data").get<std::string>());
  if (run.contains("test_size")) {
    const auto n = run["test_size"].get<std::size_t>();
    if (n < data.size()) data.resize(n);
  }
  check_resolution(net, data.front());
  return data;
}

}  // namespace

void cmd_eval(const json& run) {
  const LoadedModel model = load_model(run, require(run, "checkpoint").get<std::string>());
  const std::vector<Sample> data = test_samples(run, model.net);
  const fs::path out = out_dir(run);
  echo(run, out);
  const double lambda = run.at("lambda").get<double>();
  const Evaluation ev = evaluate(model.predictor(), data, lambda, run.at("seed").get<std::uint64_t>(),
                                 run.value("n_bins", 10), truth_kind(run));
  json report = ev.report.to_json();
  report["model_id"] = model.id;
  report["lambda"] = lambda;
  report["n_images"] = data.size();
  report["calibration"] = ev.calibration.to_json();
  write_json(out / "report.json", report);
  if (plots(run)) {
    fs::create_directories(out / "plots");
    write_text(out / "plots" / "confusion.svg", plot::confusion_heatmap(ev.report.confusion, "confusion matrix"));
    write_text(out / "plots" / "reliability.svg", plot::reliability_diagram(ev.calibration, "reliability"));
  }
}

// ---------------------------------------------------------------- sweep

void cmd_sweep(const json& run) {
  std::vector<fs::path> paths;
  if (run.contains("checkpoints"))
    for (const auto& p : run["checkpoints"]) paths.emplace_back(p.get<std::string>());
  else
    paths.emplace_back(require(run, "checkpoint").get<std::string>());
  if (paths.empty()) throw std::invalid_argument("no checkpoints given");
  std::vector<LoadedModel> models;
  for (const auto& p : paths) models.push_back(load_model(run, p));
  const std::vector<double> lambdas = run.at("lambdas").get<std::vector<double>>();
  if (lambdas.empty()) throw std::invalid_argument("no lambda values given");
  const std::vector<Sample> data = test_samples(run, models.front().net);
  const fs::path out = out_dir(run);
  echo(run, out);

  std::vector<NamedPredictor> named;
  for (std::size_t i = 0; i < models.size(); ++i) {
    std::string id = models[i].id;
    for (std::size_t j = 0; j < i; ++j)
      if (named[j].id == id) id += "#" + std::to_string(i);
    named.push_back({id, models[i].predictor()});
  }
  const std::vector<SweepRow> rows = noise_sweep(named, lambdas, data, run.at("seed").get<std::uint64_t>(), truth_kind(run));
  write_text(out / "sweep.csv", sweep_csv(rows));
  json rows_json = json::array();
  for (const auto& r : rows) {
    json j = r.report.to_json();
    j["model_id"] = r.model_id;
    j["lambda"] = r.lambda;
    rows_json.push_back(std::move(j));
  }
  write_json(out / "sweep.json", rows_json);
  if (plots(run)) {
    fs::create_directories(out / "plots");
    std::vector<plot::Series> center, pixel;
    for (const auto& m : named) {
      plot::Series c{m.id, {}, {}}, p{m.id, {}, {}};
      for (const auto& r : rows)
        if (r.model_id == m.id) {
          c.x.push_back(r.lambda);
          c.y.push_back(r.report.center_acc);
          p.x.push_back(r.lambda);
          p.y.push_back(r.report.pixelwise_acc);
        }
      center.push_back(std::move(c));
      pixel.push_back(std::move(p));
    }
    write_text(out / "plots" / "sweep_center_acc.svg",
               plot::lines(center, {"center accuracy vs dose", "lambda", "center accuracy", true, 0.0, 1.0}));
    write_text(out / "plots" / "sweep_pixelwise_acc.svg",
               plot::lines(pixel, {"pixelwise accuracy vs dose", "lambda", "pixelwise accuracy", true, 0.0, 1.0}));
  }
}

// ---------------------------------------------------------------- saliency

void cmd_saliency(const json& run) {
  const Network net = load_checkpoint(require(run, "checkpoint").get<std::string>());
  NoisyImage y;
  if (run.contains("image") && !run["image"].is_null()) {
    y = read_noisy_image(run["image"].get<std::string>());
  } else {
    const std::vector<Sample> data = read_dataset(require(run, "data").get<std::string>());
    const int id = run.value("sample", 0);
    const auto it = std::find_if(data.begin(), data.end(), [&](const Sample& s) { return s.id == id; });
    if (it == data.end()) throw std::invalid_argument("sample " + std::to_string(id) + " not in the dataset");
    y = corrupt(it->clean, run.at("lambda").get<double>(), noise_seed(run.at("seed").get<std::uint64_t>(),
                                                                       static_cast<std::uint64_t>(id), 0));
  }
  const auto pixels = pixel_list(run);
  const fs::path out = out_dir(run);
  echo(run, out);
  const DepthEstimate est = predict(forward(net, y));
  json summary = json::array();
  for (const auto& [r, c] : pixels) {
    if (!est.depth.contains(r, c))
      throw std::out_of_range("pixel (" + std::to_string(r) + ", " + std::to_string(c) + ") outside the output map");
    const int d = run.value("depth", -1) >= 0 ? run["depth"].get<int>() : est.depth(r, c);
    const SaliencyMap map = input_gradient(net, y, r, c, d);
    const std::string stem = "saliency_" + std::to_string(r) + "_" + std::to_string(c) + "_d" + std::to_string(d);
    write_saliency(out / (stem + ".tns"), map);
    double spread = std::nan("");
    try {
      spread = gradient_spread(map);
    } catch (const std::invalid_argument&) {
    }
    summary.push_back({{"row", r},
                       {"col", c},
                       {"depth", d},
                       {"lambda", y.lambda},
                       {"predicted_depth", est.depth(r, c)},
                       {"spread_px", std::isfinite(spread) ? json(spread) : json()},
                       {"file", stem + ".tns"}});
    if (plots(run)) {
      fs::create_directories(out / "plots");
      write_text(out / "plots" / (stem + ".svg"),
                 plot::image(map.magnitude, "|gradient| pixel (" + std::to_string(r) + "," + std::to_string(c) +
                                                ") depth " + std::to_string(d),
                             4 * r, 4 * c));
    }
  }
  write_json(out / "saliency.json", summary);
}

// ---------------------------------------------------------------- track

void cmd_track(const json& run) {
  const Network net = load_checkpoint(require(run, "checkpoint").get<std::string>());
  std::vector<NoisyImage> frames;
  for (const auto& f : require(run, "frames")) frames.push_back(read_noisy_image(f.get<std::string>()));
  if (frames.empty()) throw std::invalid_argument("no frames given");
  for (const auto& f : frames)
    if (f.pixels.shape() != frames.front().pixels.shape()) throw std::invalid_argument("inconsistent frame shapes");
  const auto pixels = pixel_list(run);
  const fs::path out = out_dir(run);
  echo(run, out);

  std::vector<ProbabilityMap> maps;
  for (const auto& f : frames) maps.push_back(forward(net, f));
  json summary = json::array();
  for (const auto& [r, c] : pixels) {
    if (r < 0 || c < 0 || r >= maps.front().rows || c >= maps.front().cols)
      throw std::out_of_range("pixel (" + std::to_string(r) + ", " + std::to_string(c) + ") outside the output map");
    const int classes = maps.front().classes;
    std::ostringstream csv;
    csv.precision(8);
    csv << "frame,d_hat";
    for (int k = 0; k < classes; ++k) csv << ",p" << k;
    csv << '\n';
    std::vector<plot::Series> series(static_cast<std::size_t>(classes));
    for (int k = 0; k < classes; ++k) series[static_cast<std::size_t>(k)].name = "depth " + std::to_string(k);
    json trace = json::array();
    for (std::size_t t = 0; t < maps.size(); ++t) {
      const float* p = maps[t].pixel(r, c);
      const int d = static_cast<int>(std::max_element(p, p + classes) - p);
      trace.push_back(d);
      csv << t << ',' << d;
      for (int k = 0; k < classes; ++k) {
        csv << ',' << p[k];
        series[static_cast<std::size_t>(k)].x.push_back(static_cast<double>(t));
        series[static_cast<std::size_t>(k)].y.push_back(p[k]);
      }
      csv << '\n';
    }
    const std::string stem = "track_" + std::to_string(r) + "_" + std::to_string(c);
    write_text(out / (stem + ".csv"), csv.str());
    summary.push_back({{"row", r}, {"col", c}, {"d_hat", trace}, {"file", stem + ".csv"}});
    if (plots(run)) {
      fs::create_directories(out / "plots");
      write_text(out / "plots" / (stem + ".svg"),
                 plot::lines(series, {"pixel (" + std::to_string(r) + "," + std::to_string(c) + ")", "frame",
                                      "probability", false, 0.0, 1.0}));
    }
  }
  write_json(out / "track.json", summary);
}

// ---------------------------------------------------------------- params

void cmd_params(const json& run) {
  const fs::path out = out_dir(run);
  echo(run, out);
  ModelConfig mc = ModelConfig::from_json(run.at("model"));
  json rows = json::array();
  for (const auto& b : run.at("base_channels_list")) {
    mc.base_channels = b.get<int>();
    const Network net(mc, 0);
    rows.push_back({{"base_channels", mc.base_channels}, {"parameters", net.parameter_count()}});
    std::cout << mc.base_channels << ' ' << net.parameter_count() << '\n';
  }
  write_json(out / "params.json", rows);
}

void dispatch(const json& run) {
  const std::string c = run.at("command").get<std::string>();
  if (c == "simulate") return cmd_simulate(run);
  if (c == "train") return cmd_train(run);
  if (c == "eval") return cmd_eval(run);
  if (c == "sweep") return cmd_sweep(run);
  if (c == "saliency") return cmd_saliency(run);
  if (c == "track") return cmd_track(run);
  if (c == "params") return cmd_params(run);
  throw std::invalid_argument("unknown command '" + c + "'");
}

std::string error_record(const std::string& command, const std::string& message) {
  return json{{"error", message}, {"command", command}}.dump();
}

}  // namespace segdepth::cli

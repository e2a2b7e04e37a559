// segdepth command-line entry point.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "segdepth/cli.hpp"
#include "segdepth/tensor_io.hpp"

namespace {

using nlohmann::json;

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  int base_channels = 0;
  std::string out;
  bool plots = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "Base seed");
  app->add_option("--lambda", f.lambda, "Dose (counts per unit intensity)");
  app->add_option("--base-channels", f.base_channels, "UNet width at full resolution");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--plots", f.plots, "Emit SVG plots (true/false)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth estimation of atomic columns from low-dose phase-contrast images"};
  app.require_subcommand(1);
  Flags flags;
  json extra = json::object();

  std::string data, val_data, checkpoint, denoiser, image, baseline, truth;
  std::vector<std::string> checkpoints, frames, pixels;
  std::vector<double> lambdas;
  std::vector<int> widths;
  int count = 0, depth = -1, sample = 0, n_bins = 0, max_epochs = 0, test_size = 0;

  auto* sim = app.add_subcommand("simulate", "Generate a proxy dataset");
  sim->add_option("--count", count, "Number of samples");
  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--data", data, "Dataset directory")->check(CLI::ExistingDirectory);
  tr->add_option("--val-data", val_data, "Separate validation dataset")->check(CLI::ExistingDirectory);
  tr->add_option("--baseline", baseline, "none | sequential | joint");
  tr->add_option("--max-epochs", max_epochs, "Epoch limit");
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a test dataset");
  auto* sw = app.add_subcommand("sweep", "Evaluate checkpoints across doses");
  auto* sal = app.add_subcommand("saliency", "Input-gradient maps for selected pixels");
  auto* trk = app.add_subcommand("track", "Per-frame probability traces over an image sequence");
  auto* par = app.add_subcommand("params", "Parameter counts for several widths");
  par->add_option("--widths", widths, "Base channel widths");

  for (auto* sub : {ev, sw, sal}) {
    sub->add_option("--data", data, "Dataset directory")->check(CLI::ExistingDirectory);
    sub->add_option("--test-size", test_size, "Use only the first N samples");
  }
  for (auto* sub : {ev, sal, trk}) sub->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  for (auto* sub : {ev, sw}) {
    sub->add_option("--denoiser", denoiser, "Denoiser checkpoint for the two-stage pipeline");
    sub->add_option("--truth", truth, "smoothed | raw");
  }
  ev->add_option("--bins", n_bins, "Calibration bins");
  sw->add_option("--checkpoints", checkpoints, "Checkpoint directories")->required();
  sw->add_option("--lambdas", lambdas, "Dose values");
  sal->add_option("--image", image, "Noisy image (.tns); otherwise --data/--sample");
  sal->add_option("--sample", sample, "Sample id");
  sal->add_option("--depth", depth, "Target depth (default: predicted)");
  for (auto* sub : {sal, trk}) sub->add_option("--pixel", pixels, "Output pixel as row,col (repeatable)")->required();
  trk->add_option("--frames", frames, "Noisy frames (.tns) in order")->required();
  for (auto* sub : {sim, tr, ev, sw, sal, trk, par}) add_common(sub, flags);

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();
  CLI::App* sub = app.get_subcommands().front();
  try {
    json overrides = json::object();
    auto given = [&](const char* name) { return sub->get_option_no_throw(name) && sub->count(name) > 0; };
    if (given("--seed")) overrides["seed"] = flags.seed;
    if (given("--lambda")) overrides["lambda"] = flags.lambda;
    if (given("--base-channels")) overrides["base_channels"] = flags.base_channels;
    if (given("--out")) overrides["out"] = flags.out;
    if (given("--plots")) overrides["plots"] = flags.plots;
    if (given("--count")) overrides["simulation"]["count"] = count;
    if (given("--data")) overrides["data"] = data;
    if (given("--val-data")) overrides["val_data"] = val_data;
    if (given("--baseline")) overrides["baseline"] = baseline;
    if (given("--max-epochs")) overrides["train"]["max_epochs"] = max_epochs;
    if (given("--checkpoint")) overrides["checkpoint"] = checkpoint;
    if (given("--checkpoints")) overrides["checkpoints"] = checkpoints;
    if (given("--denoiser")) overrides["denoiser"] = denoiser;
    if (given("--truth")) overrides["truth"] = truth;
    if (given("--bins")) overrides["n_bins"] = n_bins;
    if (given("--lambdas")) overrides["lambdas"] = lambdas;
    if (given("--test-size")) overrides["test_size"] = test_size;
    if (given("--image")) overrides["image"] = image;
    if (given("--sample")) overrides["sample"] = sample;
    if (given("--depth")) overrides["depth"] = depth;
    if (given("--frames")) overrides["frames"] = frames;
    if (given("--widths")) overrides["base_channels_list"] = widths;
    if (given("--pixel")) {
      json list = json::array();
      for (const auto& p : pixels) {
        const auto comma = p.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("--pixel expects row,col");
        list.push_back({std::stoi(p.substr(0, comma)), std::stoi(p.substr(comma + 1))});
      }
      overrides["pixels"] = list;
    }
    const json file = flags.config.empty() ? json() : segdepth::read_json(flags.config);
    const json run = segdepth::cli::resolve_config(command, file, overrides);
    std::cout << run.dump(2) << std::endl;
    segdepth::cli::dispatch(run);
  } catch (const std::exception& e) {
    std::cerr << segdepth::cli::error_record(command, e.what()) << std::endl;
    return 1;
  }
  return 0;
}

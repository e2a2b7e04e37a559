#pragma once

// Subcommands behind the segdepth executable. Each takes a fully resolved run
// config (see resolve_config), echoes it to <out>/run_config.json, then runs.
//
// Resolved config keys: command, out, plots, seed, lambda, simulation, model,
// train, plus per-command keys (data, val_data, checkpoint(s), lambdas,
// pixels, depth, sample, frames, baseline, truth, n_bins, base_channels_list).

#include <filesystem>
#include <string>

#include <json.hpp>

namespace segdepth::cli {

// Defaults for the command, merged with the config file document and then
// with the flag overrides. "seed" propagates to simulation.seed and
// train.seed, "lambda" to train.lambda, "base_channels" to model.base_channels.
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& file,
                              const nlohmann::json& overrides);

void cmd_simulate(const nlohmann::json& run);
void cmd_train(const nlohmann::json& run);
void cmd_eval(const nlohmann::json& run);
void cmd_sweep(const nlohmann::json& run);
void cmd_saliency(const nlohmann::json& run);
void cmd_track(const nlohmann::json& run);
// Parameter counts over a list of base channel widths.
void cmd_params(const nlohmann::json& run);

void dispatch(const nlohmann::json& run);

// JSON error record for stderr.
std::string error_record(const std::string& command, const std::string& message);

}  // namespace segdepth::cli

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdepth/dataset.hpp"
#include "segdepth/labels.hpp"
#include "segdepth/network.hpp"

namespace segdepth {

// L = -sum_j sum_i w_ij log p_j(i)[s_ij], with p clamped at 1e-12. No
// normalisation over batch or pixels. When grad is non-null it receives
// dL/dprobs (same shape as probs, zero off the true class). Throws
// std::invalid_argument for mismatched shapes, negative weights or labels
// outside [0, classes).
template <typename T>
double weighted_ce(const nn::Tensor<T>& probs, std::span<const SmoothedLabelMap* const> labels,
                   std::span<const WeightMap* const> weights, nn::Tensor<T>* grad = nullptr);

double weighted_ce(std::span<const ProbabilityMap> probs, std::span<const SmoothedLabelMap> labels,
                   std::span<const WeightMap> weights);

template <typename T>
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(nn::Registry<T>& params);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Multiplies the rate by `factor` after `plateau` epochs without a new best.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double factor, int plateau, double min_lr);
  // Returns the learning rate for the next epoch.
  double update(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_, factor_, min_lr_;
  int plateau_, stale_ = 0;
  double best_;
};

// Tracks the best validation loss; should_stop() after `patience` epochs
// without improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);
  // Returns true when the value is a new best.
  bool update(double val_loss);
  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  int best_index() const { return best_index_; }

 private:
  int patience_, stale_ = 0, seen_ = 0, best_index_ = -1;
  double best_;
};

struct TrainConfig {
  double lambda = 2.5;
  int batch_size = 8;
  int max_epochs = 200;
  double lr = 1e-3;
  double lr_factor = 0.5;
  int lr_plateau = 5;
  double min_lr = 1e-6;
  int patience = 10;
  std::uint64_t seed = 0;
  int train_size = 500;
  int val_size = 100;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;
  // Mean per-image loss over the epoch / over the validation set.
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainRecord {
  double initial_val_loss = 0.0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 when no epoch beat the initial parameters
  double best_val_loss = 0.0;
  double wall_seconds = 0.0;
  std::string stop_reason;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Noise seed epochs: training epochs are 1.., validation uses a fixed tag.
inline constexpr std::uint64_t kValidationEpoch = 0xffffffffull;

// Noisy realisations of the samples for one epoch, in sample order.
std::vector<NoisyImage> corrupt_samples(std::span<const Sample> samples, double lambda, std::uint64_t run_seed,
                                        std::uint64_t epoch);

// Epoch driver shared by all trainers. step() trains on one batch of sample
// indices and returns its summed loss; validate() returns the summed validation
// loss of the current parameters; snapshot() stores them as the best so far.
struct TrainingHooks {
  std::function<double(std::span<const std::size_t> batch, std::uint64_t epoch)> step;
  std::function<double()> validate;
  std::function<void()> snapshot;
  std::function<void(double lr)> set_lr;
};

// Validation runs once before the first epoch (recorded as epoch 0) and after
// every epoch. Batches are a seeded per-epoch permutation of the training set.
TrainRecord run_training_loop(const TrainConfig& config, std::size_t train_count, std::size_t val_count,
                              const TrainingHooks& hooks, const EpochCallback& on_epoch = {});

struct TrainResult {
  Network net;
  TrainRecord record;
};

// Adam on weighted_ce with fresh noise per sample and epoch; returns the
// best-validation parameters. Throws std::invalid_argument for empty splits and
// std::runtime_error on a non-finite loss.
TrainResult train(const TrainConfig& config, const ModelConfig& model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const EpochCallback& on_epoch = {});

struct DenoiserResult {
  Denoiser<float> net;
  TrainRecord record;
};

// Mean-squared error of denoised against clean images (per-image mean over pixels, summed over the batch).
DenoiserResult train_denoiser(const TrainConfig& config, const ModelConfig& model, std::span<const Sample> train_set,
                              std::span<const Sample> val_set, const EpochCallback& on_epoch = {});

// Two-stage pipeline: denoiser applied before the segmenter.
struct PipelineModel {
  Denoiser<float> denoiser;
  Network segmenter;
};

nn::Tensor<float> pipeline_infer(const PipelineModel& model, const nn::Tensor<float>& x);

struct PipelineResult {
  PipelineModel model;
  TrainRecord denoiser_record;
  TrainRecord segmenter_record;
};

// Denoiser trained alone, then frozen; the segmenter learns on its outputs.
PipelineResult train_sequential_baseline(const TrainConfig& config, const ModelConfig& model,
                                         std::span<const Sample> train_set, std::span<const Sample> val_set,
                                         const EpochCallback& on_epoch = {});

// Both networks updated every step on MSE + weighted_ce. The segmenter record
// tracks the combined validation loss.
PipelineResult train_joint_baseline(const TrainConfig& config, const ModelConfig& model,
                                    std::span<const Sample> train_set, std::span<const Sample> val_set,
                                    const EpochCallback& on_epoch = {});

}  // namespace segdepth

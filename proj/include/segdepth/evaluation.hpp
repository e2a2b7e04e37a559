#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdepth/dataset.hpp"
#include "segdepth/labels.hpp"
#include "segdepth/network.hpp"

namespace segdepth {

// (classes x classes) counts, row = truth, column = prediction.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;

  explicit ConfusionMatrix(int n = 0) : classes(n), counts(static_cast<std::size_t>(n) * n, 0) {}
  std::int64_t& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
  std::int64_t at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(int truth) const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

// Raw pixel counts behind the four rates, summable across images.
struct MetricCounts {
  std::int64_t pixels = 0, correct = 0;
  std::int64_t center_pixels = 0, center_correct = 0;
  std::int64_t truth_atoms = 0, detected = 0;
  std::int64_t predicted_atoms = 0, hallucinated = 0;
  MetricCounts& operator+=(const MetricCounts& o);
};

struct EvalReport {
  double pixelwise_acc = 0.0;
  double center_acc = 0.0;
  double real_atom_detection_rate = 0.0;
  double hallucinated_atom_rate = 0.0;
  ConfusionMatrix confusion;
  std::int64_t n_pixels = 0;
  MetricCounts counts;

  nlohmann::json to_json() const;
};

struct CenterRadii {
  double heavy = 4.0;
  double light = 3.0;
};

// Pixels within the union of Euclidean disks around the column centres.
Grid<std::uint8_t> center_mask(Shape2 shape, std::span<const LabelCenter> centers, const CenterRadii& radii = {});

ConfusionMatrix confusion_matrix(const Grid<int>& pred, const Grid<int>& truth, int classes);

MetricCounts metric_counts(const Grid<int>& pred, const Grid<int>& truth, std::span<const LabelCenter> centers,
                           const CenterRadii& radii = {});
// Rates from counts; empty denominators give 0.
EvalReport report_from(const MetricCounts& counts, ConfusionMatrix confusion);

// Throws std::invalid_argument for an empty truth map or mismatched shapes.
EvalReport metrics(const DepthEstimate& pred, const SmoothedLabelMap& truth, std::span<const LabelCenter> centers,
                   int classes = kDefaultMaxDepth + 1, const CenterRadii& radii = {});

struct CalibrationBin {
  double lo = 0.0, hi = 0.0;
  std::int64_t count = 0;
  // Undefined (nullopt) for empty bins.
  std::optional<double> mean_confidence;
  std::optional<double> accuracy;
};

struct CalibrationCurve {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  std::int64_t total = 0;

  nlohmann::json to_json() const;
};

// Accumulates (confidence, correct) pairs into bins [e_k, e_{k+1}); the last
// bin also holds confidence == 1.
class CalibrationAccumulator {
 public:
  explicit CalibrationAccumulator(std::vector<double> edges);
  static CalibrationAccumulator equal_width(int n_bins);

  void add(double confidence, bool correct);
  void add(const DepthEstimate& pred, const Grid<int>& truth);
  CalibrationCurve curve() const;

 private:
  std::vector<double> edges_;
  std::vector<std::int64_t> count_, correct_;
  std::vector<double> conf_sum_;
};

// Throws std::invalid_argument for n_bins < 2.
CalibrationCurve calibration(std::span<const DepthEstimate> preds, std::span<const SmoothedLabelMap> truths,
                             int n_bins = 10);

// Which label map the metrics compare against.
enum class TruthKind { Smoothed, Raw };

// Any model that maps an input batch to probabilities.
using BatchPredictor = std::function<nn::Tensor<float>(const nn::Tensor<float>&)>;
BatchPredictor predictor(const Network& net);

struct Evaluation {
  EvalReport report;
  CalibrationCurve calibration;
  std::vector<DepthEstimate> predictions;
};

// Corrupts every test sample at `lambda` (seeded per sample) and evaluates the
// aggregated metrics over the set.
Evaluation evaluate(const BatchPredictor& model, std::span<const Sample> test_set, double lambda, std::uint64_t seed,
                    int n_bins = 10, TruthKind truth = TruthKind::Smoothed, int batch_size = 8,
                    bool keep_predictions = false);

struct SweepRow {
  std::string model_id;
  double lambda = 0.0;
  EvalReport report;
};

struct NamedPredictor {
  std::string id;
  BatchPredictor model;
};

// One row per (model, lambda), models outermost. Throws for a non-positive lambda.
std::vector<SweepRow> noise_sweep(std::span<const NamedPredictor> models, std::span<const double> lambdas,
                                  std::span<const Sample> test_set, std::uint64_t seed,
                                  TruthKind truth = TruthKind::Smoothed);

std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace segdepth

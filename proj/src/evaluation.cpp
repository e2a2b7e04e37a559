#include "segdepth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "segdepth/noise.hpp"

namespace segdepth {

namespace {

constexpr std::uint64_t kEvalEpoch = 0xfffffffeull;

double ratio(std::int64_t num, std::int64_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

void require_same(Shape2 a, Shape2 b, const char* who) {
  if (a != b) throw std::invalid_argument(std::string(who) + ": prediction and truth shapes differ");
}

}  // namespace

// ---------------------------------------------------------------- confusion

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int k = 0; k < classes; ++k) t += at(k, k);
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
  std::int64_t t = 0;
  for (int k = 0; k < classes; ++k) t += at(truth, k);
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  if (o.classes != classes) throw std::invalid_argument("ConfusionMatrix: class counts differ");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  return *this;
}

ConfusionMatrix confusion_matrix(const Grid<int>& pred, const Grid<int>& truth, int classes) {
  require_same(pred.shape(), truth.shape(), "confusion_matrix");
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || pred[i] < 0 || pred[i] >= classes)
      throw std::invalid_argument("confusion_matrix: class index out of range");
    ++m.at(truth[i], pred[i]);
  }
  return m;
}

// ---------------------------------------------------------------- metrics

MetricCounts& MetricCounts::operator+=(const MetricCounts& o) {
  pixels += o.pixels;
  correct += o.correct;
  center_pixels += o.center_pixels;
  center_correct += o.center_correct;
  truth_atoms += o.truth_atoms;
  detected += o.detected;
  predicted_atoms += o.predicted_atoms;
  hallucinated += o.hallucinated;
  return *this;
}

Grid<std::uint8_t> center_mask(Shape2 shape, std::span<const LabelCenter> centers, const CenterRadii& radii) {
  Grid<std::uint8_t> mask(shape, 0);
  for (const LabelCenter& c : centers) {
    const double r = c.species == Species::Heavy ? radii.heavy : radii.light;
    const int reach = static_cast<int>(std::floor(r));
    for (int y = std::max(0, c.row - reach); y <= std::min(shape.rows - 1, c.row + reach); ++y)
      for (int x = std::max(0, c.col - reach); x <= std::min(shape.cols - 1, c.col + reach); ++x) {
        const double dy = y - c.row, dx = x - c.col;
        if (dy * dy + dx * dx <= r * r) mask(y, x) = 1;
      }
  }
  return mask;
}

MetricCounts metric_counts(const Grid<int>& pred, const Grid<int>& truth, std::span<const LabelCenter> centers,
                           const CenterRadii& radii) {
  require_same(pred.shape(), truth.shape(), "metrics");
  if (truth.empty()) throw std::invalid_argument("metrics: empty truth map");
  const Grid<std::uint8_t> mask = center_mask(truth.shape(), centers, radii);
  MetricCounts m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool ok = pred[i] == truth[i];
    ++m.pixels;
    m.correct += ok;
    if (mask[i]) {
      ++m.center_pixels;
      m.center_correct += ok;
    }
    if (truth[i] > 0) {
      ++m.truth_atoms;
      m.detected += pred[i] > 0;
    }
    if (pred[i] > 0) {
      ++m.predicted_atoms;
      m.hallucinated += truth[i] == 0;
    }
  }
  return m;
}

EvalReport report_from(const MetricCounts& counts, ConfusionMatrix confusion) {
  EvalReport r;
  r.pixelwise_acc = ratio(counts.correct, counts.pixels);
  r.center_acc = ratio(counts.center_correct, counts.center_pixels);
  r.real_atom_detection_rate = ratio(counts.detected, counts.truth_atoms);
  r.hallucinated_atom_rate = ratio(counts.hallucinated, counts.predicted_atoms);
  r.confusion = std::move(confusion);
  r.n_pixels = counts.pixels;
  r.counts = counts;
  return r;
}

EvalReport metrics(const DepthEstimate& pred, const SmoothedLabelMap& truth, std::span<const LabelCenter> centers,
                   int classes, const CenterRadii& radii) {
  const MetricCounts counts = metric_counts(pred.depth, truth, centers, radii);
  return report_from(counts, confusion_matrix(pred.depth, truth, classes));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int a = 0; a < confusion.classes; ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (int b = 0; b < confusion.classes; ++b) row.push_back(confusion.at(a, b));
    rows.push_back(std::move(row));
  }
  return {{"pixelwise_acc", pixelwise_acc},
          {"center_acc", center_acc},
          {"real_atom_detection_rate", real_atom_detection_rate},
          {"hallucinated_atom_rate", hallucinated_atom_rate},
          {"n_pixels", n_pixels},
          {"counts",
           {{"pixels", counts.pixels},
            {"correct", counts.correct},
            {"center_pixels", counts.center_pixels},
            {"center_correct", counts.center_correct},
            {"truth_atoms", counts.truth_atoms},
            {"detected", counts.detected},
            {"predicted_atoms", counts.predicted_atoms},
            {"hallucinated", counts.hallucinated}}},
          {"confusion", std::move(rows)}};
}

// ---------------------------------------------------------------- calibration

CalibrationAccumulator::CalibrationAccumulator(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 3) throw std::invalid_argument("calibration: need at least 2 bins");
  for (std::size_t i = 1; i < edges_.size(); ++i)
    if (!(edges_[i] > edges_[i - 1])) throw std::invalid_argument("calibration: bin edges must increase");
  const std::size_t n = edges_.size() - 1;
  count_.assign(n, 0);
  correct_.assign(n, 0);
  conf_sum_.assign(n, 0.0);
}

CalibrationAccumulator CalibrationAccumulator::equal_width(int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("calibration: n_bins must be >= 2");
  std::vector<double> edges(static_cast<std::size_t>(n_bins) + 1);
  for (int k = 0; k <= n_bins; ++k) edges[static_cast<std::size_t>(k)] = static_cast<double>(k) / n_bins;
  return CalibrationAccumulator(std::move(edges));
}

void CalibrationAccumulator::add(double confidence, bool correct) {
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), confidence);
  std::size_t bin = it == edges_.begin() ? 0 : static_cast<std::size_t>(it - edges_.begin()) - 1;
  bin = std::min(bin, count_.size() - 1);
  ++count_[bin];
  correct_[bin] += correct;
  conf_sum_[bin] += confidence;
}

void CalibrationAccumulator::add(const DepthEstimate& pred, const Grid<int>& truth) {
  require_same(pred.depth.shape(), truth.shape(), "calibration");
  for (std::size_t i = 0; i < truth.size(); ++i) add(pred.confidence[i], pred.depth[i] == truth[i]);
}

CalibrationCurve CalibrationAccumulator::curve() const {
  CalibrationCurve c;
  for (std::size_t k = 0; k < count_.size(); ++k) c.total += count_[k];
  for (std::size_t k = 0; k < count_.size(); ++k) {
    CalibrationBin b;
    b.lo = edges_[k];
    b.hi = edges_[k + 1];
    b.count = count_[k];
    if (b.count > 0) {
      b.mean_confidence = conf_sum_[k] / static_cast<double>(b.count);
      b.accuracy = static_cast<double>(correct_[k]) / static_cast<double>(b.count);
      c.ece += static_cast<double>(b.count) / static_cast<double>(c.total) * std::abs(*b.accuracy - *b.mean_confidence);
    }
    c.bins.push_back(b);
  }
  return c;
}

CalibrationCurve calibration(std::span<const DepthEstimate> preds, std::span<const SmoothedLabelMap> truths,
                             int n_bins) {
  if (preds.size() != truths.size()) throw std::invalid_argument("calibration: prediction and truth counts differ");
  auto acc = CalibrationAccumulator::equal_width(n_bins);
  for (std::size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], truths[i]);
  return acc.curve();
}

nlohmann::json CalibrationCurve::to_json() const {
  nlohmann::json bins_json = nlohmann::json::array();
  for (const auto& b : bins)
    bins_json.push_back({{"lo", b.lo},
                         {"hi", b.hi},
                         {"count", b.count},
                         {"mean_confidence", b.mean_confidence ? nlohmann::json(*b.mean_confidence) : nlohmann::json()},
                         {"accuracy", b.accuracy ? nlohmann::json(*b.accuracy) : nlohmann::json()}});
  return {{"ece", ece}, {"total", total}, {"bins", std::move(bins_json)}};
}

// ---------------------------------------------------------------- evaluation

BatchPredictor predictor(const Network& net) {
  return [&net](const nn::Tensor<float>& x) { return net.infer(x); };
}

Evaluation evaluate(const BatchPredictor& model, std::span<const Sample> test_set, double lambda, std::uint64_t seed,
                    int n_bins, TruthKind truth, int batch_size, bool keep_predictions) {
  if (!(lambda > 0.0)) throw std::invalid_argument("evaluate: lambda must be > 0");
  if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  Evaluation out;
  MetricCounts counts;
  std::optional<ConfusionMatrix> confusion;
  auto calib = CalibrationAccumulator::equal_width(n_bins);

  for (std::size_t i0 = 0; i0 < test_set.size(); i0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(batch_size), test_set.size() - i0);
    std::vector<NoisyImage> noisy;
    std::vector<const Grid<float>*> images;
    for (std::size_t j = 0; j < n; ++j) {
      const Sample& s = test_set[i0 + j];
      noisy.push_back(corrupt(s.clean, lambda, noise_seed(seed, static_cast<std::uint64_t>(s.id), kEvalEpoch)));
    }
    for (const auto& y : noisy) images.push_back(&y.pixels);
    const nn::Tensor<float> probs = model(image_batch(images));
    if (!confusion) confusion.emplace(probs.c());
    for (std::size_t j = 0; j < n; ++j) {
      const Sample& s = test_set[i0 + j];
      const Grid<int>& t = truth == TruthKind::Smoothed ? s.labels.smoothed : s.labels.depth;
      if (t.empty()) throw std::invalid_argument("evaluate: sample " + std::to_string(s.id) + " has no raw depth map");
      DepthEstimate est = predict(probability_map(probs, static_cast<int>(j)));
      if (est.depth.shape() != t.shape())
        throw std::invalid_argument("evaluate: model output resolution does not match the labels");
      const auto centers = label_centers(s.model, t.shape());
      counts += metric_counts(est.depth, t, centers);
      *confusion += confusion_matrix(est.depth, t, probs.c());
      calib.add(est, t);
      if (keep_predictions) out.predictions.push_back(std::move(est));
    }
  }
  out.report = report_from(counts, std::move(*confusion));
  out.calibration = calib.curve();
  return out;
}

std::vector<SweepRow> noise_sweep(std::span<const NamedPredictor> models, std::span<const double> lambdas,
                                  std::span<const Sample> test_set, std::uint64_t seed, TruthKind truth) {
  for (double l : lambdas)
    if (!(l > 0.0)) throw std::invalid_argument("noise_sweep: lambda values must be > 0");
  std::vector<SweepRow> rows;
  for (const NamedPredictor& m : models)
    for (double l : lambdas) rows.push_back({m.id, l, evaluate(m.model, test_set, l, seed, 10, truth).report});
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os.precision(10);
  os << "model_id,lambda,pixelwise_acc,center_acc,real_atom_detection_rate,hallucinated_atom_rate,n_pixels\n";
  for (const auto& r : rows)
    os << r.model_id << ',' << r.lambda << ',' << r.report.pixelwise_acc << ',' << r.report.center_acc << ','
       << r.report.real_atom_detection_rate << ',' << r.report.hallucinated_atom_rate << ',' << r.report.n_pixels
       << '\n';
  return os.str();
}

}  // namespace segdepth

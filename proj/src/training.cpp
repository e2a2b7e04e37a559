#include "segdepth/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "segdepth/rng.hpp"

namespace segdepth {

namespace {

constexpr double kProbFloor = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void require_finite(double loss, const char* who, std::uint64_t epoch) {
  if (!std::isfinite(loss))
    throw std::runtime_error(std::string(who) + ": non-finite loss in epoch " + std::to_string(epoch) +
                             "; lower the learning rate or check the inputs");
}

struct Batch {
  std::vector<NoisyImage> noisy;
  std::vector<const SmoothedLabelMap*> labels;
  std::vector<const WeightMap*> weights;
  std::vector<const Grid<float>*> clean;
  nn::Tensor<float> x;
};

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> idx, double lambda,
                 std::uint64_t seed, std::uint64_t epoch) {
  Batch b;
  std::vector<const Grid<float>*> images;
  for (std::size_t i : idx) {
    const Sample& s = samples[i];
    b.noisy.push_back(corrupt(s.clean, lambda, noise_seed(seed, static_cast<std::uint64_t>(s.id), epoch)));
    b.labels.push_back(&s.labels.smoothed);
    b.weights.push_back(&s.labels.weights);
    b.clean.push_back(&s.clean.pixels);
  }
  for (const NoisyImage& n : b.noisy) images.push_back(&n.pixels);
  b.x = image_batch(images);
  return b;
}

// Validation batches with fixed noise, built once per run.
std::vector<Batch> validation_batches(std::span<const Sample> val, const TrainConfig& config) {
  std::vector<Batch> out;
  for (std::size_t i0 = 0; i0 < val.size(); i0 += static_cast<std::size_t>(config.batch_size)) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), val.size() - i0);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), i0);
    out.push_back(make_batch(val, idx, config.lambda, config.seed, kValidationEpoch));
  }
  return out;
}

// Sum over the batch of per-image mean squared error; grad receives d/dy.
double mse(const nn::Tensor<float>& y, std::span<const Grid<float>* const> clean, nn::Tensor<float>* grad) {
  if (grad) *grad = nn::Tensor<float>(y.n(), y.c(), y.h(), y.w());
  const std::size_t pl = y.plane();
  double total = 0.0;
  for (int n = 0; n < y.n(); ++n) {
    const float* yp = y.plane_ptr(n, 0);
    const float* cp = clean[static_cast<std::size_t>(n)]->data().data();
    double acc = 0.0;
    for (std::size_t i = 0; i < pl; ++i) {
      const double d = static_cast<double>(yp[i]) - cp[i];
      acc += d * d;
      if (grad) grad->plane_ptr(n, 0)[i] = static_cast<float>(2.0 * d / static_cast<double>(pl));
    }
    total += acc / static_cast<double>(pl);
  }
  return total;
}

void check_splits(std::span<const Sample> train_set, std::span<const Sample> val_set) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation set");
  for (const Sample& a : val_set)
    for (const Sample& b : train_set)
      if (a.id == b.id) throw std::invalid_argument("train: validation sample " + std::to_string(a.id) + " is also in the training set");
}

}  // namespace

// ---------------------------------------------------------------- loss

template <typename T>
double weighted_ce(const nn::Tensor<T>& probs, std::span<const SmoothedLabelMap* const> labels,
                   std::span<const WeightMap* const> weights, nn::Tensor<T>* grad) {
  if (labels.size() != static_cast<std::size_t>(probs.n()) || weights.size() != labels.size())
    throw std::invalid_argument("weighted_ce: batch sizes differ");
  if (grad) *grad = nn::Tensor<T>(probs.n(), probs.c(), probs.h(), probs.w());
  const Shape2 shape{probs.h(), probs.w()};
  const int classes = probs.c();
  double loss = 0.0;
  for (int n = 0; n < probs.n(); ++n) {
    const auto& s = *labels[static_cast<std::size_t>(n)];
    const auto& w = *weights[static_cast<std::size_t>(n)];
    if (s.shape() != shape || w.shape() != shape) throw std::invalid_argument("weighted_ce: label shape mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      const int k = s[i];
      if (k < 0 || k >= classes)
        throw std::invalid_argument("weighted_ce: label " + std::to_string(k) + " outside [0, " + std::to_string(classes) + ")");
      const double wi = w[i];
      if (!(wi >= 0.0)) throw std::invalid_argument("weighted_ce: negative or non-finite weight");
      if (wi == 0.0) continue;
      const double p = std::max(static_cast<double>(probs.plane_ptr(n, k)[i]), kProbFloor);
      loss -= wi * std::log(p);
      if (grad) grad->plane_ptr(n, k)[i] = static_cast<T>(-wi / p);
    }
  }
  return loss;
}

template double weighted_ce<float>(const nn::Tensor<float>&, std::span<const SmoothedLabelMap* const>,
                                   std::span<const WeightMap* const>, nn::Tensor<float>*);
template double weighted_ce<double>(const nn::Tensor<double>&, std::span<const SmoothedLabelMap* const>,
                                    std::span<const WeightMap* const>, nn::Tensor<double>*);

double weighted_ce(std::span<const ProbabilityMap> probs, std::span<const SmoothedLabelMap> labels,
                   std::span<const WeightMap> weights) {
  if (probs.size() != labels.size() || probs.size() != weights.size())
    throw std::invalid_argument("weighted_ce: batch sizes differ");
  double loss = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const ProbabilityMap& p = probs[j];
    nn::Tensor<double> t(1, p.classes, p.rows, p.cols);
    for (int r = 0; r < p.rows; ++r)
      for (int c = 0; c < p.cols; ++c)
        for (int k = 0; k < p.classes; ++k) t.at(0, k, r, c) = p.at(r, c, k);
    const SmoothedLabelMap* s[] = {&labels[j]};
    const WeightMap* w[] = {&weights[j]};
    loss += weighted_ce<double>(t, s, w);
  }
  return loss;
}

// ---------------------------------------------------------------- optimiser

template <typename T>
void Adam<T>::step(nn::Registry<T>& reg) {
  if (m_.empty()) {
    for (const auto& [name, p] : reg.params) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
  if (m_.size() != reg.params.size()) throw std::logic_error("Adam: parameter set changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < reg.params.size(); ++k) {
    auto& p = *reg.params[k].second;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= static_cast<T>(lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

PlateauSchedule::PlateauSchedule(double lr, double factor, int plateau, double min_lr)
    : lr_(lr), factor_(factor), min_lr_(min_lr), plateau_(plateau), best_(std::numeric_limits<double>::infinity()) {}

double PlateauSchedule::update(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    stale_ = 0;
  } else if (++stale_ >= plateau_) {
    lr_ = std::max(min_lr_, lr_ * factor_);
    stale_ = 0;
  }
  return lr_;
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw std::invalid_argument("EarlyStopper: patience must be >= 1");
}

bool EarlyStopper::update(double val_loss) {
  const int index = seen_++;
  if (val_loss < best_) {
    best_ = val_loss;
    best_index_ = index;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

// ---------------------------------------------------------------- config / record

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("TrainConfig: lambda must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  if (!(lr > 0.0) || !(lr_factor > 0.0 && lr_factor <= 1.0) || lr_plateau < 1)
    throw std::invalid_argument("TrainConfig: invalid learning-rate schedule");
  if (train_size < 1 || val_size < 1) throw std::invalid_argument("TrainConfig: dataset sizes must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lambda", lambda},         {"batch_size", batch_size}, {"max_epochs", max_epochs},
          {"lr", lr},                 {"lr_factor", lr_factor},   {"lr_plateau", lr_plateau},
          {"min_lr", min_lr},         {"patience", patience},     {"seed", seed},
          {"train_size", train_size}, {"val_size", val_size}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.lr = j.value("lr", c.lr);
  c.lr_factor = j.value("lr_factor", c.lr_factor);
  c.lr_plateau = j.value("lr_plateau", c.lr_plateau);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.train_size = j.value("train_size", c.train_size);
  c.val_size = j.value("val_size", c.val_size);
  c.validate();
  return c;
}

nlohmann::json TrainRecord::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs)
    epochs_json.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_loss", e.val_loss},
                           {"lr", e.lr},
                           {"seconds", e.seconds}});
  return {{"initial_val_loss", initial_val_loss},
          {"best_epoch", best_epoch},
          {"best_val_loss", best_val_loss},
          {"wall_seconds", wall_seconds},
          {"stop_reason", stop_reason},
          {"epochs", std::move(epochs_json)}};
}

std::string TrainRecord::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,train_loss,val_loss\n";
  for (const auto& e : epochs) os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
  return os.str();
}

std::vector<NoisyImage> corrupt_samples(std::span<const Sample> samples, double lambda, std::uint64_t run_seed,
                                        std::uint64_t epoch) {
  std::vector<NoisyImage> out;
  out.reserve(samples.size());
  for (const Sample& s : samples)
    out.push_back(corrupt(s.clean, lambda, noise_seed(run_seed, static_cast<std::uint64_t>(s.id), epoch)));
  return out;
}

// ---------------------------------------------------------------- loop

TrainRecord run_training_loop(const TrainConfig& config, std::size_t train_count, std::size_t val_count,
                              const TrainingHooks& hooks, const EpochCallback& on_epoch) {
  config.validate();
  if (train_count == 0 || val_count == 0) throw std::invalid_argument("train: empty dataset");
  const auto t0 = Clock::now();
  TrainRecord rec;
  rec.initial_val_loss = hooks.validate() / static_cast<double>(val_count);
  require_finite(rec.initial_val_loss, "train", 0);

  EarlyStopper stopper(config.patience);
  PlateauSchedule schedule(config.lr, config.lr_factor, config.lr_plateau, config.min_lr);
  stopper.update(rec.initial_val_loss);
  schedule.update(rec.initial_val_loss);
  hooks.snapshot();
  rec.best_epoch = 0;
  rec.best_val_loss = rec.initial_val_loss;
  rec.stop_reason = "max_epochs";

  std::vector<std::size_t> order(train_count);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto te = Clock::now();
    const auto ep = static_cast<std::uint64_t>(epoch);
    hooks.set_lr(schedule.lr());
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterEngine shuffle(derive_seed({config.seed, ep, 0x5f0ff1eull}));
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[shuffle() % (i + 1)]);

    double train_sum = 0.0;
    for (std::size_t i0 = 0; i0 < order.size(); i0 += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - i0);
      const double loss = hooks.step(std::span<const std::size_t>(order.data() + i0, n), ep);
      require_finite(loss, "train", ep);
      train_sum += loss;
    }
    EpochRecord e;
    e.epoch = epoch;
    e.lr = schedule.lr();
    e.train_loss = train_sum / static_cast<double>(train_count);
    e.val_loss = hooks.validate() / static_cast<double>(val_count);
    require_finite(e.val_loss, "train", ep);
    e.seconds = seconds_since(te);
    rec.epochs.push_back(e);
    if (stopper.update(e.val_loss)) {
      hooks.snapshot();
      rec.best_epoch = epoch;
      rec.best_val_loss = e.val_loss;
    }
    schedule.update(e.val_loss);
    if (on_epoch) on_epoch(e);
    if (stopper.should_stop()) {
      rec.stop_reason = "patience";
      break;
    }
  }
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

// ---------------------------------------------------------------- trainers

namespace {

// Segmenter training; `pre` maps the noisy batch to the network input.
template <class Pre>
TrainResult train_segmenter(const TrainConfig& config, const ModelConfig& model, std::span<const Sample> train_set,
                            std::span<const Sample> val_set, const EpochCallback& on_epoch, Pre pre) {
  config.validate();
  check_splits(train_set, val_set);
  Network net(model, derive_seed({config.seed, 0x5e9ull}));
  Network best = net;
  Adam<float> adam(config.lr);
  const std::vector<Batch> val = validation_batches(val_set, config);

  TrainingHooks hooks;
  hooks.step = [&](std::span<const std::size_t> idx, std::uint64_t epoch) {
    Batch b = make_batch(train_set, idx, config.lambda, config.seed, epoch);
    net.zero_grad();
    const nn::Tensor<float> probs = net.forward(pre(b.x), nn::Mode::Train);
    nn::Tensor<float> grad;
    const double loss = weighted_ce<float>(probs, b.labels, b.weights, &grad);
    require_finite(loss, "train", epoch);
    net.backward(grad);
    auto reg = net.registry();
    adam.step(reg);
    return loss;
  };
  hooks.validate = [&] {
    double sum = 0.0;
    for (const Batch& b : val) sum += weighted_ce<float>(net.infer(pre(b.x)), b.labels, b.weights);
    return sum;
  };
  hooks.snapshot = [&] { best = net; };
  hooks.set_lr = [&](double lr) { adam.set_lr(lr); };
  TrainRecord rec = run_training_loop(config, train_set.size(), val_set.size(), hooks, on_epoch);
  return {std::move(best), std::move(rec)};
}

}  // namespace

TrainResult train(const TrainConfig& config, const ModelConfig& model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const EpochCallback& on_epoch) {
  return train_segmenter(config, model, train_set, val_set, on_epoch, [](const nn::Tensor<float>& x) -> const nn::Tensor<float>& { return x; });
}

DenoiserResult train_denoiser(const TrainConfig& config, const ModelConfig& model, std::span<const Sample> train_set,
                              std::span<const Sample> val_set, const EpochCallback& on_epoch) {
  config.validate();
  check_splits(train_set, val_set);
  Denoiser<float> net(model, derive_seed({config.seed, 0xde7015eull}));
  Denoiser<float> best = net;
  Adam<float> adam(config.lr);
  const std::vector<Batch> val = validation_batches(val_set, config);

  TrainingHooks hooks;
  hooks.step = [&](std::span<const std::size_t> idx, std::uint64_t epoch) {
    Batch b = make_batch(train_set, idx, config.lambda, config.seed, epoch);
    net.zero_grad();
    const nn::Tensor<float> y = net.forward(b.x, nn::Mode::Train);
    nn::Tensor<float> grad;
    const double loss = mse(y, b.clean, &grad);
    require_finite(loss, "train_denoiser", epoch);
    net.backward(grad);
    auto reg = net.registry();
    adam.step(reg);
    return loss;
  };
  hooks.validate = [&] {
    double sum = 0.0;
    for (const Batch& b : val) sum += mse(net.infer(b.x), b.clean, nullptr);
    return sum;
  };
  hooks.snapshot = [&] { best = net; };
  hooks.set_lr = [&](double lr) { adam.set_lr(lr); };
  TrainRecord rec = run_training_loop(config, train_set.size(), val_set.size(), hooks, on_epoch);
  return {std::move(best), std::move(rec)};
}

nn::Tensor<float> pipeline_infer(const PipelineModel& model, const nn::Tensor<float>& x) {
  return model.segmenter.infer(model.denoiser.infer(x));
}

PipelineResult train_sequential_baseline(const TrainConfig& config, const ModelConfig& model,
                                         std::span<const Sample> train_set, std::span<const Sample> val_set,
                                         const EpochCallback& on_epoch) {
  DenoiserResult den = train_denoiser(config, model, train_set, val_set, on_epoch);
  const Denoiser<float>& frozen = den.net;
  TrainResult seg = train_segmenter(config, model, train_set, val_set, on_epoch,
                                    [&](const nn::Tensor<float>& x) { return frozen.infer(x); });
  return {PipelineModel{std::move(den.net), std::move(seg.net)}, std::move(den.record), std::move(seg.record)};
}

PipelineResult train_joint_baseline(const TrainConfig& config, const ModelConfig& model,
                                    std::span<const Sample> train_set, std::span<const Sample> val_set,
                                    const EpochCallback& on_epoch) {
  config.validate();
  check_splits(train_set, val_set);
  Denoiser<float> den(model, derive_seed({config.seed, 0xde7015eull}));
  Network seg(model, derive_seed({config.seed, 0x5e9ull}));
  Denoiser<float> best_den = den;
  Network best_seg = seg;
  Adam<float> adam_den(config.lr), adam_seg(config.lr);
  const std::vector<Batch> val = validation_batches(val_set, config);

  TrainingHooks hooks;
  hooks.step = [&](std::span<const std::size_t> idx, std::uint64_t epoch) {
    Batch b = make_batch(train_set, idx, config.lambda, config.seed, epoch);
    den.zero_grad();
    seg.zero_grad();
    const nn::Tensor<float> y = den.forward(b.x, nn::Mode::Train);
    const nn::Tensor<float> probs = seg.forward(y, nn::Mode::Train);
    nn::Tensor<float> dmse, dprobs;
    const double loss = mse(y, b.clean, &dmse) + weighted_ce<float>(probs, b.labels, b.weights, &dprobs);
    require_finite(loss, "train_joint_baseline", epoch);
    nn::Tensor<float> dy = seg.backward(dprobs);
    nn::add_inplace(dy, dmse);
    den.backward(dy);
    auto reg_den = den.registry();
    auto reg_seg = seg.registry();
    adam_den.step(reg_den);
    adam_seg.step(reg_seg);
    return loss;
  };
  hooks.validate = [&] {
    double sum = 0.0;
    for (const Batch& b : val) {
      const nn::Tensor<float> y = den.infer(b.x);
      sum += mse(y, b.clean, nullptr) + weighted_ce<float>(seg.infer(y), b.labels, b.weights);
    }
    return sum;
  };
  hooks.snapshot = [&] {
    best_den = den;
    best_seg = seg;
  };
  hooks.set_lr = [&](double lr) {
    adam_den.set_lr(lr);
    adam_seg.set_lr(lr);
  };
  TrainRecord rec = run_training_loop(config, train_set.size(), val_set.size(), hooks, on_epoch);
  return {PipelineModel{std::move(best_den), std::move(best_seg)}, rec, rec};
}

}  // namespace segdepth

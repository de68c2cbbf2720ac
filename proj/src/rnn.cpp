#include "vulnhound/rnn.hpp"

#include <chrono>
#include <numeric>

namespace vulnhound::rnn {

void validate_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("threshold must lie strictly between 0 and 1");
}

void TrainConfig::validate() const {
  if (batch_size == 0 || hidden == 0) throw UsageError("batch_size and hidden must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw UsageError("dropout_rate must lie in [0, 1)");
  if (!(adam.learning_rate > 0) || !(adam.epsilon > 0)) throw UsageError("learning_rate and epsilon must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1))
    throw UsageError("Adam betas must lie in [0, 1)");
  validate_threshold(threshold);
}

TrainReport train(std::span<const Sample> train_set, std::span<const Sample> validation, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw DataError("training partition is empty");
  const auto started = std::chrono::steady_clock::now();
  const Index dim = train_set.front().x.rows();
  const Index H = static_cast<Index>(config.hidden);
  for (const auto& s : validation)
    if (s.x.rows() != dim) throw DataError("validation sample dim differs from training dim");

  Rng rng(config.seed);
  TrainReport report;
  report.params = LstmParams<double>::initial(dim, H, rng);
  Adam<double> adam(report.params, config.adam);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = std::min(config.batch_size, train_set.size());

  std::optional<double> best_loss;
  LstmParams<double> best_params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++batch_no) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(batch_size, order.size() - start));
      const auto batch = make_batch<double>(train_set, idx);
      Matrix<double> keep;
      if (config.dropout_rate > 0) keep = dropout_keep<double>(H, batch.size(), config.dropout_rate, rng);
      const auto pass = forward(report.params, batch, config.dropout_rate > 0 ? &keep : nullptr);
      const double loss = mean_loss(pass.y, batch.labels);
      if (!std::isfinite(loss)) throw TrainingDivergedError(epoch, batch_no, "non-finite loss");
      const auto grads = backward(report.params, batch, pass);
      if (!grads.all_finite()) throw TrainingDivergedError(epoch, batch_no, "non-finite gradient");
      adam.step(report.params, grads);
      if (!report.params.all_finite()) throw TrainingDivergedError(epoch, batch_no, "non-finite parameters");
      loss_sum += loss * static_cast<double>(idx.size());
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(train_set.size());
    if (!validation.empty()) {
      const auto ev = evaluate(report.params, validation, config.threshold);
      stats.validation_loss = ev.loss;
      stats.validation = evalkit::compute_metrics(ev.confusion);
    }
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (config.patience > 0 && stats.validation_loss) {
      if (!best_loss || *stats.validation_loss < *best_loss) {
        best_loss = stats.validation_loss;
        best_params = report.params;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        report.params = best_params;
        report.stopped_early = true;
        break;
      }
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::vector<double> predict_probabilities(const LstmParams<double>& params, std::span<const Sample> samples,
                                          std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(samples.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    const auto pass = forward(params, make_batch<double>(samples, idx));
    out.insert(out.end(), pass.y.data(), pass.y.data() + pass.y.size());
  }
  return out;
}

Evaluation evaluate(const LstmParams<double>& params, std::span<const Sample> samples, double threshold,
                    std::size_t batch_size) {
  validate_threshold(threshold);
  Evaluation ev;
  ev.probabilities = predict_probabilities(params, samples, batch_size);
  std::vector<std::uint8_t> predicted, labels;
  double loss = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    predicted.push_back(ev.probabilities[i] >= threshold);
    labels.push_back(samples[i].label);
    loss += bce(ev.probabilities[i], static_cast<double>(samples[i].label));
  }
  ev.confusion = evalkit::score_windows(predicted, labels);
  ev.loss = samples.empty() ? 0.0 : loss / static_cast<double>(samples.size());
  return ev;
}

Prediction predict(const LstmParams<double>& params, const Sample& sample, double threshold) {
  validate_threshold(threshold);
  const double p = predict_probabilities(params, std::span<const Sample>(&sample, 1)).front();
  return {p, p >= threshold};
}

}  // namespace vulnhound::rnn

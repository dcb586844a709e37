#include "todkat/classifier/training.hpp"

#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "todkat/numerics/adam.hpp"
#include "todkat/numerics/ops.hpp"
#include "todkat/topicvae/topic_model.hpp"

namespace todkat {

namespace {

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& ps) {
  std::vector<std::vector<double>> out;
  for (const auto& p : ps) out.emplace_back(p.values().begin(), p.values().end());
  return out;
}

void restore(std::vector<Tensor>& ps, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto dst = ps[i].mutable_values();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace

double evaluate_loss(const EmotionClassifier& model, const std::vector<DialogueFeatures>& data) {
  NoGradGuard guard;
  double total = 0, positions = 0;
  for (const auto& f : data) {
    const auto n = static_cast<double>(f.length());
    total += model.nll_loss(f, nullptr).item() * n;
    positions += n;
  }
  return positions == 0 ? 0.0 : total / positions;
}

std::vector<std::vector<std::size_t>> predict_all(const EmotionClassifier& model,
                                                  const std::vector<DialogueFeatures>& data) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(data.size());
  for (const auto& f : data) out.push_back(model.predict(f));
  return out;
}

F1Scores score_predictions(const std::vector<DialogueFeatures>& data,
                           const std::vector<std::vector<std::size_t>>& predicted, std::size_t n_labels,
                           const std::vector<std::size_t>& exclude) {
  if (data.size() != predicted.size()) throw ContractError("score_predictions: prediction count mismatch");
  ConfusionMatrix cm(n_labels);
  for (std::size_t d = 0; d < data.size(); ++d) {
    const auto& gold = data[d].labels;
    if (gold.size() != predicted[d].size()) {
      throw ContractError("score_predictions: dialogue " + data[d].id + " has " + std::to_string(gold.size()) +
                          " gold labels and " + std::to_string(predicted[d].size()) + " predictions");
    }
    for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predicted[d][i]);
  }
  return f1_scores(cm, exclude);
}

ClassifierTrainReport train_classifier(EmotionClassifier& model, const std::vector<DialogueFeatures>& train,
                                       const std::vector<DialogueFeatures>& dev, const std::vector<std::size_t>& exclude,
                                       const Rng& rng,
                                       const std::function<void(const ClassifierEpochLog&)>& on_epoch) {
  if (train.empty()) throw ContractError("train_classifier: empty training set");
  const auto& cfg = model.config();
  const auto& dev_set = dev.empty() ? train : dev;
  ClassifierTrainReport report;
  report.initial_dev_loss = evaluate_loss(model, dev_set);

  auto params = model.trainable();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  auto best = snapshot(params);
  double best_micro = -1;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng epoch_rng = rng.split("clf-epoch").split(epoch);
    Rng order_rng = epoch_rng.split("order");
    order_rng.shuffle(order);
    double epoch_loss = 0, epoch_positions = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      double positions = 0;
      for (auto i = start; i < end; ++i) positions += static_cast<double>(train[order[i]].length());
      for (auto& p : params) p.zero_grad();
      Tape tape;
      double batch_loss;
      {
        Tape::Scope scope(tape);
        std::vector<Tensor> terms;
        for (auto i = start; i < end; ++i) {
          const auto& f = train[order[i]];
          Rng gate_rng = epoch_rng.split("gate").split(order[i]);
          terms.push_back(scale(model.nll_loss(f, &gate_rng), static_cast<double>(f.length()) / positions));
        }
        Tensor loss = terms[0];
        for (std::size_t t = 1; t < terms.size(); ++t) loss = add(loss, terms[t]);
        batch_loss = loss.item();
        if (!std::isfinite(batch_loss)) {
          throw TrainingDiverged("classifier: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(start / cfg.batch_size));
        }
        tape.backward(loss);
      }
      clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, adam);
      epoch_loss += batch_loss * positions;
      epoch_positions += positions;
    }

    ClassifierEpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / epoch_positions;
    log.dev_loss = evaluate_loss(model, dev_set);
    log.dev = score_predictions(dev_set, predict_all(model, dev_set), model.n_labels(), exclude);
    report.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (!std::isfinite(log.dev_loss) || log.train_loss > 10.0 * std::max(report.initial_dev_loss, 1.0)) {
      throw TrainingDiverged("classifier diverged: epoch " + std::to_string(epoch) + " train loss " +
                             std::to_string(log.train_loss) + ", dev loss " + std::to_string(log.dev_loss) +
                             ", initial dev loss " + std::to_string(report.initial_dev_loss));
    }
    if (log.dev.micro > best_micro) {
      best_micro = log.dev.micro;
      report.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      spdlog::info("early stop after epoch {}: dev micro-F1 has not improved for {} epochs", epoch, cfg.patience);
      report.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  report.best_dev_micro = best_micro;
  return report;
}

}  // namespace todkat

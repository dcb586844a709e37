#pragma once

#include <functional>
#include <vector>

#include "todkat/classifier/model.hpp"
#include "todkat/eval/metrics.hpp"

namespace todkat {

struct ClassifierEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;  // mean NLL per position
  double dev_loss = 0;    // teacher forced, deterministic gate
  F1Scores dev;
};

struct ClassifierTrainReport {
  double initial_dev_loss = 0;
  std::vector<ClassifierEpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_dev_micro = 0;
  bool stopped_early = false;
};

/// Mean per-position NLL with gold history and the deterministic gate.
double evaluate_loss(const EmotionClassifier& model, const std::vector<DialogueFeatures>& data);

/// Greedy predictions for every dialogue.
std::vector<std::vector<std::size_t>> predict_all(const EmotionClassifier& model,
                                                  const std::vector<DialogueFeatures>& data);

/// F1 of predictions against the gold labels carried by `data`.
F1Scores score_predictions(const std::vector<DialogueFeatures>& data,
                           const std::vector<std::vector<std::size_t>>& predicted, std::size_t n_labels,
                           const std::vector<std::size_t>& exclude);

/// Adam on mini-batches of dialogues, early stopping on dev micro-F1. The
/// best-dev parameters are restored before returning.
ClassifierTrainReport train_classifier(EmotionClassifier& model, const std::vector<DialogueFeatures>& train,
                                       const std::vector<DialogueFeatures>& dev, const std::vector<std::size_t>& exclude,
                                       const Rng& rng,
                                       const std::function<void(const ClassifierEpochLog&)>& on_epoch = {});

}  // namespace todkat

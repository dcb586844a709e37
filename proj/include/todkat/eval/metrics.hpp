#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "todkat/numerics/rng.hpp"

namespace todkat {

/// Square count matrix indexed by (gold, predicted).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : n_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return n_; }
  void add(std::size_t gold, std::size_t predicted, std::uint64_t count = 1);
  std::uint64_t at(std::size_t gold, std::size_t predicted) const { return counts_.at(gold * n_ + predicted); }
  std::uint64_t total() const;

  static ConfusionMatrix from_labels(std::size_t classes, std::span<const std::size_t> gold,
                                     std::span<const std::size_t> predicted);

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

struct ClassScore {
  std::size_t label = 0;
  double precision = 0, recall = 0, f1 = 0;
  std::uint64_t support = 0;
};

struct F1Scores {
  double macro = 0, micro = 0, weighted = 0;
  std::vector<ClassScore> per_class;  // non-excluded classes, ascending id
};

/// Precision, recall and F1 per class with 0/0 taken as 0. Excluded classes are
/// dropped as both gold and predicted labels, i.e. the scores are those of the
/// sub-matrix over the remaining classes.
F1Scores f1_scores(const ConfusionMatrix& cm, const std::vector<std::size_t>& exclude = {});

/// Raised when a rank correlation is undefined (a constant input).
class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// 1-based ranks, tied values sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct SpearmanResult {
  double rho = 0;
  double p_value = 1;  // two-sided, from t = rho·sqrt((n−2)/(1−rho²)) with n−2 dof
  std::size_t n = 0;
};

SpearmanResult spearman(std::span<const double> a, std::span<const double> b);

struct TopicEmotionRecord {
  std::vector<double> topic;    // z
  std::vector<double> emotion;  // one-hot gold label, or a label embedding
};

/// Samples `n_pairs` distinct-index record pairs, compares topic cosine with
/// emotion cosine, and rank-correlates the two similarity lists.
SpearmanResult spearman_topic_emotion(const std::vector<TopicEmotionRecord>& records, std::size_t n_pairs,
                                      const Rng& rng);

}  // namespace todkat

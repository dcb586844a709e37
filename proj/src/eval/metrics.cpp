#include "todkat/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "todkat/numerics/tensor.hpp"

namespace todkat {

namespace {

double safe_div(double a, double b) { return b == 0 ? 0.0 : a / b; }

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return na == 0 || nb == 0 ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

void ConfusionMatrix::add(std::size_t gold, std::size_t predicted, std::uint64_t count) {
  if (gold >= n_ || predicted >= n_) {
    throw ContractError("confusion matrix: label (" + std::to_string(gold) + ", " + std::to_string(predicted) +
                        ") outside " + std::to_string(n_) + " classes");
  }
  counts_[gold * n_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

ConfusionMatrix ConfusionMatrix::from_labels(std::size_t classes, std::span<const std::size_t> gold,
                                             std::span<const std::size_t> predicted) {
  if (gold.size() != predicted.size()) throw ContractError("confusion matrix: gold and predicted lengths differ");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predicted[i]);
  return cm;
}

F1Scores f1_scores(const ConfusionMatrix& cm, const std::vector<std::size_t>& exclude) {
  const auto n = cm.classes();
  std::vector<bool> keep(n, true);
  for (auto e : exclude) {
    if (e >= n) throw ContractError("f1_scores: excluded label " + std::to_string(e) + " out of range");
    keep[e] = false;
  }
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < n; ++c)
    if (keep[c]) kept.push_back(c);
  if (kept.empty()) throw ContractError("f1_scores: every class is excluded");

  F1Scores out;
  double tp_sum = 0, all = 0, support_sum = 0, weighted = 0;
  for (auto c : kept) {
    double tp = static_cast<double>(cm.at(c, c)), row = 0, col = 0;
    for (auto j : kept) {
      row += static_cast<double>(cm.at(c, j));
      col += static_cast<double>(cm.at(j, c));
    }
    ClassScore s;
    s.label = c;
    s.precision = safe_div(tp, col);
    s.recall = safe_div(tp, row);
    s.f1 = safe_div(2 * s.precision * s.recall, s.precision + s.recall);
    s.support = static_cast<std::uint64_t>(row);
    out.macro += s.f1;
    weighted += s.f1 * row;
    support_sum += row;
    tp_sum += tp;
    all += row;
    out.per_class.push_back(s);
  }
  out.macro /= static_cast<double>(kept.size());
  out.weighted = safe_div(weighted, support_sum);
  // pooled precision and recall share the denominator on the sub-matrix, so
  // their harmonic mean is that common value
  out.micro = safe_div(tp_sum, all);
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("spearman: lists differ in length");
  if (a.size() < 3) throw ContractError("spearman: need at least 3 pairs");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1) / 2;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0 || vb == 0) throw UndefinedCorrelation("spearman: a similarity list is constant");
  SpearmanResult r;
  r.n = a.size();
  r.rho = std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
  if (std::abs(r.rho) == 1.0) {
    r.p_value = 0.0;
  } else {
    const double dof = n - 2;
    const double t = r.rho * std::sqrt(dof / (1 - r.rho * r.rho));
    boost::math::students_t dist(dof);
    r.p_value = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return r;
}

SpearmanResult spearman_topic_emotion(const std::vector<TopicEmotionRecord>& records, std::size_t n_pairs,
                                      const Rng& rng) {
  if (records.size() < 10) throw ContractError("spearman_topic_emotion: need at least 10 records");
  Rng r = rng.split("pairs");
  std::vector<double> topic_sim, emotion_sim;
  topic_sim.reserve(n_pairs);
  emotion_sim.reserve(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const auto i = static_cast<std::size_t>(r.below(records.size()));
    auto j = static_cast<std::size_t>(r.below(records.size() - 1));
    if (j >= i) ++j;
    topic_sim.push_back(cosine(records[i].topic, records[j].topic));
    emotion_sim.push_back(cosine(records[i].emotion, records[j].emotion));
  }
  return spearman(topic_sim, emotion_sim);
}

}  // namespace todkat

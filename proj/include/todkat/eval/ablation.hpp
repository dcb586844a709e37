#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "todkat/classifier/training.hpp"

namespace todkat {

enum class Variant { Full, MinusTopics, MinusKb, KatSbert, KatComet };

std::string_view variant_name(Variant v);  // full, minus_topics, minus_kb, kat_sbert, kat_comet
Variant parse_variant(std::string_view name);
ClassifierConfig apply_variant(ClassifierConfig config, Variant v);

struct AblationPlan {
  std::vector<Variant> variants{Variant::Full};
  std::vector<std::uint64_t> seeds{1};
  /// Relation sets to sweep; empty runs once with the extractor defaults.
  std::vector<std::vector<Relation>> relation_sets;

  void validate() const;
};

struct AblationInputs {
  const TopicModel* topic = nullptr;
  const Vocab* vocab = nullptr;
  const KnowledgeIndex* index = nullptr;  // may be null when no variant reads knowledge
  const EventGenerator* generator = nullptr;
  const std::vector<Dialogue>* train = nullptr;
  const std::vector<Dialogue>* dev = nullptr;
  const std::vector<Dialogue>* test = nullptr;
  EmotionLabelSet labels = EmotionLabelSet::ekman_with_neutral();
  std::vector<std::size_t> exclude;
  ClassifierConfig classifier;
  KnowledgeOptions knowledge;
};

struct AblationRow {
  std::string variant;  // with "/<n>rel" appended in a relation sweep
  std::string seed;     // seed number, or "mean" / "std" for summary rows
  std::string split;
  double macro_f1 = 0, micro_f1 = 0, weighted_f1 = 0, wall_clock_seconds = 0;
  bool failed = false;
  std::string error;
};

/// Trains every variant for every seed on the same features, data order and
/// initialization, scoring dev and test. A diverging run becomes a failed row.
std::vector<AblationRow> run_ablations(const AblationPlan& plan, const AblationInputs& inputs,
                                       const std::function<void(const AblationRow&)>& on_row = {});

/// Mean and sample standard deviation per (variant, split) over successful seeds;
/// standard deviation needs two seeds.
std::vector<AblationRow> summarize(const std::vector<AblationRow>& rows);

/// variant,seed,split,macro_f1,micro_f1,weighted_f1,wall_clock_seconds[,error]
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// Mean micro-F1 of a variant on a split from summary rows.
std::optional<double> mean_micro(const std::vector<AblationRow>& summary, const std::string& variant,
                                 const std::string& split);

struct AttentionItem {
  std::string phrase;
  std::string source;  // retrieved | generated
  double alpha = 0;
  std::size_t position = 0;  // index among the utterance's K items
};

struct AttentionReport {
  std::size_t utterance = 0;
  double selection = 0;        // hard indicator, 1 = retrieved
  double probability = 0;      // sigmoid of the gate score
  std::vector<Relation> relations;
  std::vector<std::vector<AttentionItem>> items;  // per relation, by descending alpha
};

/// Fusion weights of one utterance with the deterministic gate.
AttentionReport attention_report(const EmotionClassifier& model, const DialogueFeatures& features,
                                 std::size_t utterance, const std::vector<Relation>& relations);

}  // namespace todkat

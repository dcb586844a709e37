#pragma once

#include <map>
#include <string>
#include <vector>

#include "todkat/data/corpus.hpp"
#include "todkat/knowledge/generator.hpp"
#include "todkat/knowledge/retrieval.hpp"
#include "todkat/topicvae/topic_model.hpp"

namespace todkat {

struct KnowledgeOptions {
  std::size_t k = 5;
  std::vector<Relation> relations = default_relations();
};

/// Knowledge items of one source for one dialogue: per relation, K rows per
/// utterance of [item CLS, item topic] with the phrase each row came from.
struct SourceItems {
  std::vector<Tensor> rows;                     // per relation [N·K × (d_model + d_z)]
  std::vector<std::vector<std::string>> texts;  // per relation, N·K phrases
  Tensor mean_cls;                              // [N × d_model], mean over relations and K
};

/// Classifier inputs for one dialogue; everything here is a constant.
struct DialogueFeatures {
  std::string id;
  std::vector<TokenIds> tokens;  // per utterance, for an unfrozen LM
  Tensor u;                      // [N × d_model] pooled CLS
  Tensor z;                      // [N × d_z] posterior means
  bool has_knowledge = false;
  SourceItems retrieved, generated;
  std::vector<std::size_t> labels;  // gold label ids, may be empty

  std::size_t length() const { return u.shape().empty() ? 0 : u.dim(0); }
};

/// Builds per-utterance features from the frozen topic model and, optionally,
/// the knowledge sources. Item features are cached per phrase.
class FeatureExtractor {
 public:
  FeatureExtractor(const TopicModel& topic, const Vocab& vocab, const KnowledgeIndex* index,
                   const EventGenerator* generator, KnowledgeOptions options);

  const KnowledgeOptions& options() const { return options_; }

  /// Truncates to `max_length` utterances. Knowledge is attached when both
  /// sources were provided and `with_knowledge` is set.
  DialogueFeatures extract(const Dialogue& dialogue, const EmotionLabelSet& labels, std::size_t max_length,
                           bool with_knowledge);
  std::vector<DialogueFeatures> extract_all(const std::vector<Dialogue>& dialogues, const EmotionLabelSet& labels,
                                            std::size_t max_length, bool with_knowledge);

  /// [CLS of the phrase, its topic vector from the initial state].
  const std::vector<double>& item_features(const std::string& phrase);

  struct Stats {
    std::size_t retrievals = 0, generations = 0, cached_items = 0;
  };
  const Stats& stats() const { return stats_; }

 private:
  SourceItems assemble(const std::vector<std::vector<std::string>>& per_relation_texts, std::size_t n);

  const TopicModel& topic_;
  const Vocab& vocab_;
  const KnowledgeIndex* index_;
  const EventGenerator* generator_;
  KnowledgeOptions options_;
  std::map<std::string, std::vector<double>> item_cache_;
  std::map<std::pair<std::string, Relation>, std::vector<std::string>> generation_cache_;
  Stats stats_;
};

}  // namespace todkat

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "todkat/classifier/training.hpp"
#include "todkat/data/corpus.hpp"
#include "todkat/knowledge/generator.hpp"
#include "todkat/knowledge/retrieval.hpp"
#include "todkat/topicvae/topic_model.hpp"

namespace todkat {

/// Every module setting the pipeline needs, with desk-scale defaults.
struct PipelineConfig {
  LMConfig lm;
  TopicModelConfig topic;
  GeneratorConfig generator;
  ClassifierConfig classifier;
  KnowledgeOptions knowledge;
  std::uint64_t seed = 1;

  PipelineConfig();
};

/// Reserved tokens, relation markers, then words of the training utterances and
/// of every KB head and tail.
Vocab build_pipeline_vocab(const std::vector<Dialogue>& train, const KnowledgeBase& kb);

std::vector<DialogueTokens> tokenize_dialogues(const std::vector<Dialogue>& dialogues, const Vocab& vocab,
                                               std::size_t max_tokens);

/// Distinct words of the training utterances, sorted; used as generator noise.
std::vector<std::string> utterance_words(const std::vector<Dialogue>& dialogues);

/// Several parameter stores in one checkpoint file (names must not collide).
void save_stores(const std::filesystem::path& path, const std::vector<const ParameterStore*>& stores);
void load_stores(const std::filesystem::path& path, const std::vector<ParameterStore*>& stores);

/// Index whose head embeddings are the topic LM's pooled CLS, stamped with the
/// LM's parameter fingerprint.
std::unique_ptr<KnowledgeIndex> build_index(const KnowledgeBase& kb, const TopicModel& topic, const Vocab& vocab);

}  // namespace todkat

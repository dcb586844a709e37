#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "todkat/data/corpus.hpp"

namespace todkat {

/// The nine commonsense relation names, in file spelling.
const std::vector<std::string>& all_relation_names();

struct EventTriple {
  std::string head, relation, tail;
  bool operator==(const EventTriple&) const = default;
};

/// One event of the built-in knowledge table with its emotion and tails.
struct ToyEvent {
  std::string emotion;
  std::string head;
  std::map<std::string, std::string> tails;  // relation name → tail
};

/// Nine events for each of the seven labels.
const std::vector<ToyEvent>& toy_events();
/// Every (head, relation, tail) of toy_events(), events in order, relations in
/// all_relation_names() order.
std::vector<EventTriple> toy_kb_triples();
std::string serialize_kb(const std::vector<EventTriple>& triples);

struct TopicBlock {
  std::string name;
  std::string signature;  // emotion the topic leans to
  std::vector<std::string> words;
};
const std::vector<TopicBlock>& topic_blocks();
const std::vector<std::string>& function_words();

struct SynthConfig {
  std::size_t n_topics = 2;
  std::size_t n_dialogues = 1000;
  std::size_t min_utterances = 4;
  std::size_t max_utterances = 8;
  double rho = 0.9;                  // P(label is the topic's signature emotion)
  std::size_t topic_words = 2;       // content words per topical utterance
  double topic_free_fraction = 0.2;  // utterances carrying no topic words
  double dev_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<Dialogue> train, dev, test;
  std::map<std::string, std::size_t> topic_of;  // dialogue id → topic index
};

/// Each dialogue picks a topic; each utterance picks a label from the ρ-mixture
/// (signature with probability ρ, otherwise uniform over all labels), then an
/// event of that label, and wraps it with topic and function words.
SyntheticCorpus generate_synthetic(const SynthConfig& config);

/// Writes train/dev/test JSONL, topics.tsv and a split manifest into `dir`.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace todkat

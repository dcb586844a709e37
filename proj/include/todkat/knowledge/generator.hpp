#pragma once

#include <functional>
#include <string>
#include <vector>

#include "todkat/knowledge/kb.hpp"
#include "todkat/lm/layers.hpp"
#include "todkat/lm/vocab.hpp"

namespace todkat {

struct GeneratorConfig {
  std::size_t d_model = 32;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;  // per side
  std::size_t d_ff = 64;
  std::size_t max_source_tokens = 24;
  std::size_t max_tail_tokens = 8;
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  double learning_rate = 3e-3;
  // Fraction of training sources wrapped in random context words, so the model
  // learns to find the event inside a longer utterance.
  double distractor_rate = 0.75;
  std::size_t max_distractors = 8;

  void validate() const;
};

struct GeneratorEpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0;  // per target token
};

/// Relation-conditioned sequence-to-sequence model: [relation marker, text] → tail.
class EventGenerator {
 public:
  /// `vocab` must contain relation_token(r) for every relation.
  EventGenerator(const Vocab& vocab, const GeneratorConfig& config, const Rng& rng);

  static std::string relation_token(Relation r);
  /// The nine relation markers, for building a vocabulary.
  static std::vector<std::string> relation_tokens();

  const GeneratorConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  bool trained() const { return trained_; }
  /// For weights restored from a checkpoint.
  void mark_trained() { trained_ = true; }

  TokenIds source_ids(const std::string& text, Relation relation) const;
  /// Mean token cross-entropy of `tail` given the source.
  Tensor loss(const TokenIds& source, const std::string& tail) const;

  /// Adam with teacher forcing over shuffled records.
  std::vector<GeneratorEpochLog> train(const std::vector<KnowledgeRecord>& records,
                                       const std::vector<std::string>& distractor_words, const Rng& rng,
                                       const std::function<void(const GeneratorEpochLog&)>& on_epoch = {});

  std::string greedy(const std::string& text, Relation relation) const;
  /// Beam search of width k; returns exactly k distinct tails, best first.
  std::vector<std::string> beam(const std::string& text, Relation relation, std::size_t k) const;

 private:
  Tensor encode(const TokenIds& source) const;
  /// Log-probabilities of the next token after `prefix` (starting with BOS).
  std::vector<double> next_log_probs(const Tensor& memory, const TokenIds& prefix) const;
  Tensor decode(const Tensor& memory, const TokenIds& prefix, bool last_only) const;
  void require_trained(const char* what) const;

  GeneratorConfig config_;
  Vocab vocab_;
  ParameterStore params_;
  Tensor embedding_, positions_;
  std::vector<nn::TransformerBlock> encoder_, decoder_;
  nn::LayerNorm enc_norm_, dec_norm_;
  std::vector<std::uint8_t> never_emit_;  // per vocab id
  bool trained_ = false;
};

}  // namespace todkat

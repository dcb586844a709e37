#pragma once

#include <string_view>
#include <vector>

#include "todkat/classifier/features.hpp"
#include "todkat/knowledge/fusion.hpp"

namespace todkat {

enum class KnowledgeSource { Pointer, Retrieved, Generated };

std::string_view source_name(KnowledgeSource s);
KnowledgeSource parse_source(std::string_view name);  // retrieved | generated | pointer

struct ClassifierConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_encoder_layers = 1;
  std::size_t n_decoder_layers = 2;
  std::size_t d_ff = 128;
  std::size_t max_dialogue_length = 36;
  std::size_t max_epochs = 20;
  std::size_t batch_size = 8;
  std::size_t patience = 3;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  double temperature = 0.5;
  bool use_topics = true;     // false: z_n (and item topics) are zero
  bool use_knowledge = true;  // false: c_n is zero and no knowledge is read
  KnowledgeSource source = KnowledgeSource::Pointer;
  bool unfreeze_lm = false;

  void validate() const;
};

/// Intermediate values of one forward pass, for inspection.
struct StepTrace {
  SourceSelection selection;  // undefined unless the pointer gate ran
  KnowledgeFusion::Output fusion;
  std::vector<Tensor> mixed_items;  // per relation, the items fusion consumed
};

/// Causal Transformer encoder over per-utterance features and an autoregressive
/// label decoder with cross-attention limited to the current and past utterances.
class EmotionClassifier {
 public:
  EmotionClassifier(const ClassifierConfig& config, std::size_t n_labels, std::size_t d_u, std::size_t d_z,
                    const Rng& rng);

  const ClassifierConfig& config() const { return config_; }
  std::size_t n_labels() const { return n_labels_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const KnowledgeFusion& fusion() const { return fusion_; }
  /// [(labels + 1) × d_model]; the last row is the BOS label.
  const Tensor& label_embedding() const { return label_embedding_; }
  /// Trainable tensors, including the LM's when it is attached and unfrozen.
  std::vector<Tensor> trainable() const;

  /// With unfreeze_lm, u_n is recomputed through this LM (and trained).
  void attach_lm(LanguageModel* lm) { lm_ = lm; }

  /// [u_n, z_n, c_n] rows, [N × (2·d_u + d_z)]. `gate_rng` drives the Gumbel
  /// noise; null means the deterministic gate.
  Tensor step_features(const DialogueFeatures& f, Rng* gate_rng, StepTrace* trace = nullptr) const;
  /// Causal self-attention over feature rows; [N × d_model].
  Tensor encode(const Tensor& features) const;
  /// Logits [(m+1) × labels] for steps 1..m+1 given history y_1..y_m (gold or
  /// predicted); step i sees encoder states 1..i only.
  Tensor decode(const Tensor& encoder_states, const std::vector<std::size_t>& history) const;
  /// Logits for step history.size()+1 alone.
  Tensor decode_step(const Tensor& encoder_states, const std::vector<std::size_t>& history) const;

  /// Mean negative log-likelihood over the dialogue's positions, teacher forced.
  Tensor nll_loss(const DialogueFeatures& f, Rng* gate_rng) const;
  /// Greedy autoregressive decoding with the deterministic gate.
  std::vector<std::size_t> predict(const DialogueFeatures& f) const;

 private:
  Tensor utterance_states(const DialogueFeatures& f) const;
  Tensor knowledge_vector(const DialogueFeatures& f, const Tensor& u, Rng* gate_rng, StepTrace* trace) const;
  void check_labels(const std::vector<std::size_t>& labels) const;

  ClassifierConfig config_;
  std::size_t n_labels_, d_u_, d_z_;
  ParameterStore params_;
  nn::Linear input_;
  Tensor positions_;
  std::vector<nn::TransformerBlock> encoder_, decoder_;
  nn::LayerNorm enc_norm_, dec_norm_;
  Tensor label_embedding_;  // [(labels + 1) × d_model], last row is BOS
  nn::Linear head_;
  PointerGate gate_;
  KnowledgeFusion fusion_;
  LanguageModel* lm_ = nullptr;
};

}  // namespace todkat

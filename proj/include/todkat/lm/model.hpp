#pragma once

#include <cstdint>
#include <vector>

#include "todkat/lm/layers.hpp"
#include "todkat/lm/vocab.hpp"
#include "todkat/numerics/params.hpp"

namespace todkat {

struct LMConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_lower_layers = 2;
  std::size_t n_upper_layers = 2;
  std::size_t max_tokens = 128;
  std::size_t vocab_size = 0;
  std::size_t latent_dim = 16;  // width of z fed to the upper stack
  std::size_t d_ff = 128;

  void validate() const;
};

struct UtteranceEncoding {
  Tensor states;                      // [length × d_model]: the non-PAD prefix
  Tensor pooled;                      // [d_model]: state at the CLS position
  std::vector<std::uint8_t> pad_mask; // [max_tokens], 1 at PAD positions

  std::size_t length() const { return states.dim(0); }
  /// Full [max_tokens × d_model] matrix with zero rows at PAD positions.
  Tensor token_states() const;
};

struct Reconstruction {
  Tensor logits;  // [length × vocab]; row t predicts token t+1 (EOS after the last)
  Tensor loss;    // summed token cross-entropy over non-PAD targets
  std::vector<std::int64_t> targets;
};

/// Transformer LM split into a lower stack (token states and pooled CLS) and an
/// upper stack that reconstructs the utterance with z as an extra memory slot.
class LanguageModel {
 public:
  LanguageModel(const LMConfig& config, const Rng& rng);

  const LMConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Bidirectional lower stack over the non-PAD prefix.
  UtteranceEncoding encode_lower(const TokenIds& ids) const;
  /// Lower stack with a causal mask; input to decode_upper.
  Tensor encode_lower_causal(const TokenIds& ids) const;
  /// Upper stack over causal lower states, z prepended to every attention's keys.
  Reconstruction decode_upper(const Tensor& z, const Tensor& causal_states, const TokenIds& ids) const;
  Reconstruction reconstruct(const Tensor& z, const TokenIds& ids) const;

 private:
  Tensor embed(const TokenIds& ids, std::size_t length) const;
  Tensor run_lower(const TokenIds& ids, bool causal) const;

  LMConfig config_;
  ParameterStore params_;
  Tensor token_embedding_;  // [vocab × d_model], tied with the output layer
  Tensor positions_;
  std::vector<nn::TransformerBlock> lower_, upper_;
  nn::LayerNorm lower_norm_, upper_norm_;
  nn::Linear latent_proj_;
};

}  // namespace todkat

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "todkat/lm/model.hpp"

namespace todkat {

struct GaussianParams {
  Tensor mean;          // [d_z]
  Tensor log_variance;  // [d_z], clamped to [-8, 8]
};

struct TopicState {
  Tensor h;  // [d_model]
  Tensor z;  // [d_z]
};

struct TopicModelConfig {
  std::size_t d_z = 16;
  std::size_t mlp_hidden = 64;
  std::size_t kl_warmup_steps = 0;  // 0: one epoch worth of dialogues
  std::size_t epochs = 3;
  double learning_rate = 5e-5;
  std::size_t transition_heads = 4;
  double clip_norm = 5.0;
  bool freeze = false;  // evaluate only, never update

  void validate() const;
};

/// Closed-form KL(q || p) between diagonal Gaussians, summed over dimensions.
Tensor kl_gaussian(const GaussianParams& q, const GaussianParams& p);

/// Two-layer tanh perceptron producing one Gaussian parameter vector.
struct GaussianHead {
  nn::Linear hidden, out;
  static GaussianHead create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                             std::size_t out, const Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct ElboStep {
  Tensor loss;  // reconstruction + beta * kl
  Tensor reconstruction;
  Tensor kl;
  GaussianParams posterior, prior;
  Tensor z;
  Tensor h;  // state for the next utterance; undefined when not requested
};

/// Sequential VAE over the utterances of a dialogue, grafted onto a LanguageModel
/// whose lower stack feeds the posterior and whose upper stack reconstructs.
class TopicModel {
 public:
  TopicModel(const LMConfig& lm_config, const TopicModelConfig& config, const Rng& rng);

  const TopicModelConfig& config() const { return config_; }
  LanguageModel& lm() { return lm_; }
  const LanguageModel& lm() const { return lm_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  /// LM parameters followed by the VAE parameters.
  std::vector<Tensor> all_parameters() const;
  std::vector<const ParameterStore*> stores() const { return {&lm_.params(), &params_}; }

  Tensor initial_state() const;  // h_0 = 0

  GaussianParams posterior_params(const UtteranceEncoding& x, const Tensor& h_prev) const;
  GaussianParams prior_params(const Tensor& h_prev) const;
  /// Attention with z_prev as the single query over the previous utterance's
  /// token states. Per-head weights go to `weights` when given.
  Tensor transition(const Tensor& z_prev, const UtteranceEncoding& x_prev,
                    std::vector<Tensor>* weights = nullptr) const;
  /// Same, over an explicit key matrix with blocked rows.
  Tensor transition(const Tensor& z_prev, const Tensor& keys, const std::vector<std::uint8_t>& key_blocked,
                    std::vector<Tensor>* weights = nullptr) const;

  /// One utterance of the ELBO. `noise` is the reparameterization draw; nullopt
  /// means zero noise (z = posterior mean).
  ElboStep elbo_step(const TokenIds& ids, const Tensor& h_prev, const std::optional<std::vector<double>>& noise,
                     double beta, bool need_next_state) const;
  /// Negative ELBO of a dialogue: the sum of elbo_step losses.
  Tensor dialogue_loss(const std::vector<TokenIds>& utterances, Rng* rng, double beta,
                       double* reconstruction = nullptr, double* kl = nullptr) const;

  /// Posterior mean with no sampling.
  Tensor extract_topic(const UtteranceEncoding& x, const Tensor& h_prev) const;
  /// Topic vectors for every utterance of a dialogue, state carried by posterior means.
  std::vector<std::vector<double>> extract_dialogue_topics(const std::vector<TokenIds>& utterances) const;

 private:
  TopicModelConfig config_;
  LanguageModel lm_;
  ParameterStore params_;
  GaussianHead post_mean_, post_logvar_, prior_mean_, prior_logvar_;
  nn::MultiHeadAttention transition_attn_;
};

struct TopicEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;         // mean negative ELBO per dialogue (sampled)
  double heldout_loss = 0;       // mean negative ELBO per dialogue, zero noise, beta = 1
  double heldout_reconstruction = 0;
  double heldout_kl = 0;
};

struct TopicTrainReport {
  double initial_heldout_loss = 0;
  double initial_heldout_reconstruction = 0;
  std::vector<TopicEpochLog> epochs;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using DialogueTokens = std::vector<TokenIds>;

/// Adam on the negative ELBO, one update per dialogue.
TopicTrainReport train_topic_model(TopicModel& model, const std::vector<DialogueTokens>& train,
                                   const std::vector<DialogueTokens>& heldout, const Rng& rng,
                                   const std::function<void(const TopicEpochLog&)>& on_epoch = {});

struct HeldoutScore {
  double loss = 0, reconstruction = 0, kl = 0;
};
HeldoutScore evaluate_topic_model(const TopicModel& model, const std::vector<DialogueTokens>& dialogues);

}  // namespace todkat

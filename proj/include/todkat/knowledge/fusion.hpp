#pragma once

#include <string>
#include <vector>

#include "todkat/lm/layers.hpp"

namespace todkat {

struct SourceSelection {
  Tensor indicator;    // [N], exactly 0 or 1; gradient flows through `soft`
  Tensor soft;         // [N], relaxed sample in (0, 1)
  Tensor probability;  // [N], sigmoid of the gate score
};

/// Hard binary Gumbel-Softmax over scores [N]: I = 1 when s + g1 - g0 >= 0 with
/// g0, g1 standard Gumbel. With `rng` null the noise is zero (deterministic gate).
SourceSelection select_source(const Tensor& scores, double temperature, Rng* rng);

/// Scores sources from [u, mean retrieved item, mean generated item].
struct PointerGate {
  Tensor weight;  // [3·d_model]

  static PointerGate create(ParameterStore& store, const std::string& name, std::size_t d_model, const Rng& rng);
  /// All inputs [N × d_model]; returns scores [N].
  Tensor scores(const Tensor& u, const Tensor& retrieved_mean, const Tensor& generated_mean) const;
};

/// Mixes two item sets with a per-utterance indicator: I·retrieved + (1−I)·generated.
/// Item rows are grouped K per utterance.
Tensor mix_sources(const Tensor& indicator, const Tensor& retrieved, const Tensor& generated, std::size_t k);

/// Attention over K knowledge items per relation, scored against [z_n, u_n],
/// followed by single-head self-attention across relations and a mean.
class KnowledgeFusion {
 public:
  struct Output {
    Tensor fused;                     // [N × d_model]
    std::vector<Tensor> per_relation; // R × [N × d_model]
    // alpha[r][n][k]: weight of item k (input order) for utterance n.
    std::vector<std::vector<std::vector<double>>> alpha;
  };

  static KnowledgeFusion create(ParameterStore& store, const std::string& name, std::size_t d_model,
                                std::size_t d_z, const Rng& rng);

  std::size_t d_model() const { return d_model_; }
  std::size_t d_z() const { return d_z_; }
  Tensor& w_alpha() { return w_alpha_; }
  const Tensor& w_alpha() const { return w_alpha_; }

  /// z [N × d_z], u [N × d_model]; items[r] is [N·K × (d_model + d_z)] holding
  /// [item CLS, item topic] rows, K consecutive rows per utterance.
  Output operator()(const Tensor& z, const Tensor& u, const std::vector<Tensor>& items, std::size_t k) const;

 private:
  /// Row permutation that sorts each utterance's K items by their values.
  static std::vector<std::int64_t> canonical_order(const Tensor& items, std::size_t k);
  Tensor block_mask_scores(const Tensor& zu, const Tensor& sorted_items, std::size_t k) const;

  std::size_t d_model_ = 0, d_z_ = 0;
  Tensor w_alpha_;  // [(d_model + d_z) × (d_z + d_model)]
  nn::MultiHeadAttention relation_attn_;
};

}  // namespace todkat

#include "todkat/lm/model.hpp"

#include <cmath>

#include "todkat/numerics/ops.hpp"

namespace todkat {

void LMConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw DimensionError("LMConfig: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                         std::to_string(n_heads));
  }
  if (max_tokens < 2) throw ContractError("LMConfig: max_tokens must leave room for CLS");
  if (vocab_size == 0) throw ContractError("LMConfig: vocab_size unset");
  if (latent_dim == 0 || d_ff == 0) throw ContractError("LMConfig: latent_dim and d_ff must be positive");
}

Tensor UtteranceEncoding::token_states() const {
  const std::size_t pad = pad_mask.size() - length();
  if (pad == 0) return states;
  return concat({states, Tensor::zeros({pad, states.dim(1)})}, 0);
}

LanguageModel::LanguageModel(const LMConfig& config, const Rng& rng) : config_(config) {
  config_.validate();
  const auto d = config_.d_model;
  Rng r = rng.split("lm");
  token_embedding_ = params_.add_uniform("lm.embed", {config_.vocab_size, d}, d, r);
  positions_ = nn::sinusoidal_positions(config_.max_tokens, d);
  for (std::size_t l = 0; l < config_.n_lower_layers; ++l) {
    lower_.push_back(nn::TransformerBlock::create(params_, "lm.lower" + std::to_string(l), d, config_.n_heads,
                                                  config_.d_ff, false, r));
  }
  lower_norm_ = nn::LayerNorm::create(params_, "lm.lower_norm", d);
  latent_proj_ = nn::Linear::create(params_, "lm.latent", config_.latent_dim, d, r);
  for (std::size_t l = 0; l < config_.n_upper_layers; ++l) {
    upper_.push_back(nn::TransformerBlock::create(params_, "lm.upper" + std::to_string(l), d, config_.n_heads,
                                                  config_.d_ff, false, r));
  }
  upper_norm_ = nn::LayerNorm::create(params_, "lm.upper_norm", d);
}

Tensor LanguageModel::embed(const TokenIds& ids, std::size_t length) const {
  if (ids.size() != config_.max_tokens) {
    throw ContractError("lm: expected " + std::to_string(config_.max_tokens) + " ids, got " +
                        std::to_string(ids.size()));
  }
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw ContractError("lm: token id " + std::to_string(id) + " outside vocab of size " +
                          std::to_string(config_.vocab_size));
    }
  }
  TokenIds prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(length));
  auto x = scale(gather_rows(token_embedding_, prefix), std::sqrt(static_cast<double>(config_.d_model)));
  return add(x, slice(positions_, 0, length));
}

Tensor LanguageModel::run_lower(const TokenIds& ids, bool causal) const {
  // Only PAD follows the last real token, so attending over the prefix alone is
  // the same as masking every PAD key.
  const std::size_t length = std::max<std::size_t>(unpadded_length(ids), 1);
  auto x = embed(ids, length);
  const auto mask = causal ? nn::causal_mask(length) : nn::AttentionMask{};
  nn::TransformerBlock::Context ctx;
  ctx.self_mask = &mask;
  for (const auto& block : lower_) x = block(x, ctx);
  return lower_norm_(x);
}

UtteranceEncoding LanguageModel::encode_lower(const TokenIds& ids) const {
  UtteranceEncoding enc;
  enc.states = run_lower(ids, false);
  enc.pooled = row(enc.states, 0);
  enc.pad_mask.assign(ids.size(), 1);
  for (std::size_t i = 0; i < enc.length(); ++i) enc.pad_mask[i] = 0;
  return enc;
}

Tensor LanguageModel::encode_lower_causal(const TokenIds& ids) const { return run_lower(ids, true); }

Reconstruction LanguageModel::decode_upper(const Tensor& z, const Tensor& causal_states, const TokenIds& ids) const {
  if (z.rank() != 1 || z.dim(0) != config_.latent_dim) {
    throw DimensionError("decode_upper: z has shape " + shape_str(z.shape()) + ", expected [" +
                         std::to_string(config_.latent_dim) + "]");
  }
  const std::size_t length = causal_states.dim(0);
  if (causal_states.rank() != 2 || causal_states.dim(1) != config_.d_model || length > ids.size()) {
    throw DimensionError("decode_upper: token states " + shape_str(causal_states.shape()) + " for " +
                         std::to_string(ids.size()) + " ids");
  }
  auto memory = reshape(latent_proj_(z), {1, config_.d_model});
  const auto mask = nn::with_open_prefix(nn::causal_mask(length), length, 1);
  nn::TransformerBlock::Context ctx;
  ctx.self_mask = &mask;
  ctx.memory = &memory;
  auto h = causal_states;
  for (const auto& block : upper_) h = block(h, ctx);
  Reconstruction rec;
  rec.logits = matmul(upper_norm_(h), transpose(token_embedding_));
  // PAD is never a prediction; dropping it keeps PAD's embedding out of the loss.
  std::vector<std::uint8_t> pad_column(length * config_.vocab_size, 0);
  for (std::size_t t = 0; t < length; ++t) pad_column[t * config_.vocab_size + Vocab::kPad] = 1;
  rec.logits = masked_fill(rec.logits, pad_column, kMaskedScore);
  rec.targets.resize(length);
  for (std::size_t t = 0; t < length; ++t) {
    const auto next = t + 1 < ids.size() ? ids[t + 1] : Vocab::kPad;
    rec.targets[t] = next == Vocab::kPad ? Vocab::kEos : next;
  }
  rec.loss = cross_entropy_sum(rec.logits, rec.targets);
  return rec;
}

Reconstruction LanguageModel::reconstruct(const Tensor& z, const TokenIds& ids) const {
  return decode_upper(z, encode_lower_causal(ids), ids);
}

}  // namespace todkat

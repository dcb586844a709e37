#include "todkat/classifier/model.hpp"

#include <cmath>

#include "todkat/numerics/ops.hpp"

namespace todkat {

std::string_view source_name(KnowledgeSource s) {
  switch (s) {
    case KnowledgeSource::Pointer: return "pointer";
    case KnowledgeSource::Retrieved: return "retrieved";
    case KnowledgeSource::Generated: return "generated";
  }
  return "pointer";
}

KnowledgeSource parse_source(std::string_view name) {
  if (name == "pointer") return KnowledgeSource::Pointer;
  if (name == "retrieved") return KnowledgeSource::Retrieved;
  if (name == "generated") return KnowledgeSource::Generated;
  throw std::invalid_argument("unknown knowledge source '" + std::string(name) + "'");
}

void ClassifierConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) throw DimensionError("ClassifierConfig: d_model not divisible by n_heads");
  if (n_encoder_layers == 0 || n_decoder_layers == 0 || d_ff == 0 || max_dialogue_length == 0 || max_epochs == 0 ||
      batch_size == 0) {
    throw ContractError("ClassifierConfig: layer counts, d_ff, max_dialogue_length, max_epochs and batch_size must be positive");
  }
  if (!(learning_rate > 0)) throw ContractError("ClassifierConfig: learning_rate must be positive");
  if (!(temperature > 0)) throw ContractError("ClassifierConfig: temperature must be positive");
}

EmotionClassifier::EmotionClassifier(const ClassifierConfig& config, std::size_t n_labels, std::size_t d_u,
                                     std::size_t d_z, const Rng& rng)
    : config_(config), n_labels_(n_labels), d_u_(d_u), d_z_(d_z) {
  config_.validate();
  if (n_labels == 0) throw ContractError("EmotionClassifier: no labels");
  const auto d = config_.d_model;
  Rng r = rng.split("classifier");
  input_ = nn::Linear::create(params_, "clf.input", 2 * d_u + d_z, d, r.split("input"));
  positions_ = nn::sinusoidal_positions(config_.max_dialogue_length + 1, d);
  for (std::size_t l = 0; l < config_.n_encoder_layers; ++l) {
    encoder_.push_back(nn::TransformerBlock::create(params_, "clf.enc" + std::to_string(l), d, config_.n_heads,
                                                    config_.d_ff, false, r.split("enc").split(l)));
  }
  enc_norm_ = nn::LayerNorm::create(params_, "clf.enc_norm", d);
  label_embedding_ = params_.add_uniform("clf.labels", {n_labels + 1, d}, d, r.split("labels"));
  for (std::size_t l = 0; l < config_.n_decoder_layers; ++l) {
    decoder_.push_back(nn::TransformerBlock::create(params_, "clf.dec" + std::to_string(l), d, config_.n_heads,
                                                    config_.d_ff, true, r.split("dec").split(l)));
  }
  dec_norm_ = nn::LayerNorm::create(params_, "clf.dec_norm", d);
  head_ = nn::Linear::create(params_, "clf.head", d, n_labels, r.split("head"));
  gate_ = PointerGate::create(params_, "clf.gate", d_u, r.split("gate"));
  fusion_ = KnowledgeFusion::create(params_, "clf.fusion", d_u, d_z, r.split("fusion"));
}

std::vector<Tensor> EmotionClassifier::trainable() const {
  auto ps = params_.tensors();
  if (config_.unfreeze_lm && lm_) {
    auto more = lm_->params().tensors();
    ps.insert(ps.end(), more.begin(), more.end());
  }
  return ps;
}

Tensor EmotionClassifier::utterance_states(const DialogueFeatures& f) const {
  if (!config_.unfreeze_lm) return f.u;
  if (!lm_) throw ContractError("EmotionClassifier: unfreeze_lm set but no language model attached");
  std::vector<Tensor> rows;
  for (const auto& ids : f.tokens) rows.push_back(reshape(lm_->encode_lower(ids).pooled, {1, d_u_}));
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

namespace {

/// Copy of item rows with the topic columns zeroed.
Tensor without_topics(const Tensor& items, std::size_t d_u) {
  auto v = std::vector<double>(items.values().begin(), items.values().end());
  const auto cols = items.dim(1);
  for (std::size_t r = 0; r < items.dim(0); ++r)
    for (std::size_t c = d_u; c < cols; ++c) v[r * cols + c] = 0.0;
  return Tensor::from(items.shape(), std::move(v));
}

}  // namespace

Tensor EmotionClassifier::knowledge_vector(const DialogueFeatures& f, const Tensor& u, Rng* gate_rng,
                                           StepTrace* trace) const {
  const auto n = f.length();
  if (!config_.use_knowledge) return Tensor::zeros({n, d_u_});
  if (!f.has_knowledge) throw ContractError("classifier: knowledge enabled but dialogue " + f.id + " has none");
  const auto k = f.retrieved.rows.empty() ? 0 : f.retrieved.rows[0].dim(0) / n;
  auto prep = [&](const Tensor& t) { return config_.use_topics ? t : without_topics(t, d_u_); };
  std::vector<Tensor> items;
  SourceSelection sel;
  if (config_.source == KnowledgeSource::Pointer) {
    sel = select_source(gate_.scores(u, f.retrieved.mean_cls, f.generated.mean_cls), config_.temperature, gate_rng);
    for (std::size_t r = 0; r < f.retrieved.rows.size(); ++r) {
      items.push_back(mix_sources(sel.indicator, prep(f.retrieved.rows[r]), prep(f.generated.rows[r]), k));
    }
  } else {
    const auto& src = config_.source == KnowledgeSource::Retrieved ? f.retrieved : f.generated;
    for (const auto& rows : src.rows) items.push_back(prep(rows));
  }
  auto z = config_.use_topics ? f.z : Tensor::zeros({n, d_z_});
  auto out = fusion_(z, u, items, k);
  auto c = out.fused;
  if (trace) {
    trace->selection = sel;
    trace->fusion = std::move(out);
    trace->mixed_items = std::move(items);
  }
  return c;
}

Tensor EmotionClassifier::step_features(const DialogueFeatures& f, Rng* gate_rng, StepTrace* trace) const {
  const auto n = f.length();
  if (n == 0) throw ContractError("classifier: empty dialogue");
  auto u = utterance_states(f);
  auto z = config_.use_topics ? f.z : Tensor::zeros({n, d_z_});
  auto c = knowledge_vector(f, u, gate_rng, trace);
  return concat({u, z, c}, 1);
}

Tensor EmotionClassifier::encode(const Tensor& features) const {
  const auto n = features.dim(0);
  if (n > config_.max_dialogue_length) {
    throw ContractError("classifier: " + std::to_string(n) + " steps exceed max_dialogue_length " +
                        std::to_string(config_.max_dialogue_length));
  }
  auto x = add(input_(features), slice(positions_, 0, n));
  const auto mask = nn::causal_mask(n);
  nn::TransformerBlock::Context ctx;
  ctx.self_mask = &mask;
  for (const auto& b : encoder_) x = b(x, ctx);
  return enc_norm_(x);
}

void EmotionClassifier::check_labels(const std::vector<std::size_t>& labels) const {
  for (auto y : labels) {
    if (y >= n_labels_) {
      throw ContractError("classifier: label id " + std::to_string(y) + " outside " + std::to_string(n_labels_) +
                          " labels");
    }
  }
}

Tensor EmotionClassifier::decode(const Tensor& encoder_states, const std::vector<std::size_t>& history) const {
  check_labels(history);
  const auto steps = history.size() + 1;
  if (encoder_states.dim(0) < steps) {
    throw ContractError("classifier: " + std::to_string(history.size()) + " history labels need " +
                        std::to_string(steps) + " encoder states, got " + std::to_string(encoder_states.dim(0)));
  }
  std::vector<std::int64_t> ids{static_cast<std::int64_t>(n_labels_)};  // BOS
  for (auto y : history) ids.push_back(static_cast<std::int64_t>(y));
  auto x = add(gather_rows(label_embedding_, ids), slice(positions_, 0, steps));
  auto memory = encoder_states.dim(0) == steps ? encoder_states : slice(encoder_states, 0, steps);
  // step i may read encoder states 1..i, the same window as the causal self mask
  const auto mask = nn::causal_mask(steps);
  nn::TransformerBlock::Context ctx;
  ctx.self_mask = &mask;
  ctx.cross = &memory;
  ctx.cross_mask = &mask;
  for (const auto& b : decoder_) x = b(x, ctx);
  return head_(dec_norm_(x));
}

Tensor EmotionClassifier::decode_step(const Tensor& encoder_states, const std::vector<std::size_t>& history) const {
  auto logits = decode(encoder_states, history);
  return row(logits, history.size());
}

Tensor EmotionClassifier::nll_loss(const DialogueFeatures& f, Rng* gate_rng) const {
  const auto n = f.length();
  if (n == 0) throw ContractError("nll_loss: dialogue has no real positions");
  if (f.labels.size() != n) {
    throw ContractError("nll_loss: " + std::to_string(f.labels.size()) + " labels for " + std::to_string(n) +
                        " utterances");
  }
  check_labels(f.labels);
  auto enc = encode(step_features(f, gate_rng));
  std::vector<std::size_t> history(f.labels.begin(), f.labels.end() - 1);
  std::vector<std::int64_t> targets(f.labels.begin(), f.labels.end());
  return cross_entropy(decode(enc, history), targets);
}

std::vector<std::size_t> EmotionClassifier::predict(const DialogueFeatures& f) const {
  NoGradGuard guard;
  auto enc = encode(step_features(f, nullptr));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < f.length(); ++i) {
    auto logits = decode_step(enc, out);
    const auto v = logits.values();
    out.push_back(static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()));
  }
  return out;
}

}  // namespace todkat

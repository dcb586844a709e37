#include "todkat/topicvae/topic_model.hpp"

#include <cmath>

#include "todkat/numerics/adam.hpp"
#include "todkat/numerics/ops.hpp"

namespace todkat {

namespace {

constexpr double kLogVarBound = 8.0;

LMConfig with_latent(LMConfig c, std::size_t d_z) {
  c.latent_dim = d_z;
  return c;
}

}  // namespace

void TopicModelConfig::validate() const {
  if (d_z == 0 || mlp_hidden == 0 || epochs == 0 || transition_heads == 0) {
    throw ContractError("TopicModelConfig: d_z, mlp_hidden, epochs and transition_heads must be positive");
  }
  if (!(learning_rate > 0)) throw ContractError("TopicModelConfig: learning_rate must be positive");
}

Tensor kl_gaussian(const GaussianParams& q, const GaussianParams& p) {
  if (q.mean.shape() != p.mean.shape() || q.log_variance.shape() != p.log_variance.shape() ||
      q.mean.shape() != q.log_variance.shape()) {
    throw DimensionError("kl_gaussian: q " + shape_str(q.mean.shape()) + " vs p " + shape_str(p.mean.shape()));
  }
  auto diff = sub(q.mean, p.mean);
  auto ratio = div(add(exp(q.log_variance), mul(diff, diff)), exp(p.log_variance));
  auto terms = add_scalar(add(sub(p.log_variance, q.log_variance), ratio), -1.0);
  return scale(sum(terms), 0.5);
}

GaussianHead GaussianHead::create(ParameterStore& store, const std::string& name, std::size_t in,
                                  std::size_t hidden, std::size_t out, const Rng& rng) {
  return {nn::Linear::create(store, name + ".hidden", in, hidden, rng),
          nn::Linear::create(store, name + ".out", hidden, out, rng)};
}

Tensor GaussianHead::operator()(const Tensor& x) const { return out(tanh(hidden(x))); }

TopicModel::TopicModel(const LMConfig& lm_config, const TopicModelConfig& config, const Rng& rng)
    : config_(config), lm_(with_latent(lm_config, config.d_z), rng) {
  config_.validate();
  const auto d = lm_.config().d_model, dz = config_.d_z, hid = config_.mlp_hidden;
  Rng r = rng.split("topic");
  post_mean_ = GaussianHead::create(params_, "topic.post_mean", 2 * d, hid, dz, r);
  post_logvar_ = GaussianHead::create(params_, "topic.post_logvar", 2 * d, hid, dz, r);
  prior_mean_ = GaussianHead::create(params_, "topic.prior_mean", d, hid, dz, r);
  prior_logvar_ = GaussianHead::create(params_, "topic.prior_logvar", d, hid, dz, r);
  transition_attn_ = nn::MultiHeadAttention::create(params_, "topic.transition", dz, d, config_.transition_heads, r);
}

std::vector<Tensor> TopicModel::all_parameters() const {
  auto ps = lm_.params().tensors();
  auto own = params_.tensors();
  ps.insert(ps.end(), own.begin(), own.end());
  return ps;
}

Tensor TopicModel::initial_state() const { return Tensor::zeros({lm_.config().d_model}); }

GaussianParams TopicModel::posterior_params(const UtteranceEncoding& x, const Tensor& h_prev) const {
  const auto d = lm_.config().d_model;
  if (x.pooled.shape() != Shape{d} || h_prev.shape() != Shape{d}) {
    throw DimensionError("posterior_params: pooled " + shape_str(x.pooled.shape()) + ", h_prev " +
                         shape_str(h_prev.shape()) + ", expected [" + std::to_string(d) + "]");
  }
  auto in = concat({x.pooled, h_prev}, 0);
  return {post_mean_(in), clamp(post_logvar_(in), -kLogVarBound, kLogVarBound)};
}

GaussianParams TopicModel::prior_params(const Tensor& h_prev) const {
  const auto d = lm_.config().d_model;
  if (h_prev.shape() != Shape{d}) {
    throw DimensionError("prior_params: h_prev " + shape_str(h_prev.shape()) + ", expected [" +
                         std::to_string(d) + "]");
  }
  return {prior_mean_(h_prev), clamp(prior_logvar_(h_prev), -kLogVarBound, kLogVarBound)};
}

Tensor TopicModel::transition(const Tensor& z_prev, const Tensor& keys, const std::vector<std::uint8_t>& key_blocked,
                              std::vector<Tensor>* weights) const {
  if (z_prev.shape() != Shape{config_.d_z}) {
    throw DimensionError("transition: z_prev " + shape_str(z_prev.shape()) + ", expected [" +
                         std::to_string(config_.d_z) + "]");
  }
  if (keys.rank() != 2 || keys.dim(0) != key_blocked.size()) {
    throw DimensionError("transition: keys " + shape_str(keys.shape()) + " with " +
                         std::to_string(key_blocked.size()) + " mask entries");
  }
  bool any_open = false;
  for (auto b : key_blocked) any_open |= b == 0;
  if (!any_open) throw ContractError("transition: every key position is padding");
  auto q = reshape(z_prev, {1, config_.d_z});
  auto h = transition_attn_(q, keys, nn::key_mask(1, key_blocked), weights);
  return reshape(h, {h.dim(1)});
}

Tensor TopicModel::transition(const Tensor& z_prev, const UtteranceEncoding& x_prev,
                              std::vector<Tensor>* weights) const {
  return transition(z_prev, x_prev.states, std::vector<std::uint8_t>(x_prev.length(), 0), weights);
}

ElboStep TopicModel::elbo_step(const TokenIds& ids, const Tensor& h_prev,
                               const std::optional<std::vector<double>>& noise, double beta,
                               bool need_next_state) const {
  ElboStep s;
  auto x = lm_.encode_lower(ids);
  s.posterior = posterior_params(x, h_prev);
  s.prior = prior_params(h_prev);
  const auto eps = noise ? Tensor::vector(*noise) : Tensor::zeros({config_.d_z});
  s.z = gaussian_sample(s.posterior.mean, s.posterior.log_variance, eps);
  s.reconstruction = lm_.reconstruct(s.z, ids).loss;
  s.kl = kl_gaussian(s.posterior, s.prior);
  s.loss = beta == 0.0 ? s.reconstruction : add(s.reconstruction, scale(s.kl, beta));
  if (need_next_state) s.h = transition(s.z, x);
  return s;
}

Tensor TopicModel::dialogue_loss(const std::vector<TokenIds>& utterances, Rng* rng, double beta,
                                 double* reconstruction, double* kl) const {
  if (utterances.empty()) throw ContractError("dialogue_loss: empty dialogue");
  Tensor h = initial_state();
  Tensor total;
  double rec_sum = 0, kl_sum = 0;
  for (std::size_t n = 0; n < utterances.size(); ++n) {
    std::optional<std::vector<double>> noise;
    if (rng) noise = rng->normal_vector(config_.d_z);
    auto step = elbo_step(utterances[n], h, noise, beta, n + 1 < utterances.size());
    total = n == 0 ? step.loss : add(total, step.loss);
    rec_sum += step.reconstruction.item();
    kl_sum += step.kl.item();
    h = step.h;
  }
  if (reconstruction) *reconstruction = rec_sum;
  if (kl) *kl = kl_sum;
  return total;
}

Tensor TopicModel::extract_topic(const UtteranceEncoding& x, const Tensor& h_prev) const {
  return posterior_params(x, h_prev).mean;
}

std::vector<std::vector<double>> TopicModel::extract_dialogue_topics(const std::vector<TokenIds>& utterances) const {
  NoGradGuard guard;
  std::vector<std::vector<double>> out;
  Tensor h = initial_state();
  for (std::size_t n = 0; n < utterances.size(); ++n) {
    auto x = lm_.encode_lower(utterances[n]);
    auto z = extract_topic(x, h);
    out.emplace_back(z.values().begin(), z.values().end());
    if (n + 1 < utterances.size()) h = transition(z, x);
  }
  return out;
}

HeldoutScore evaluate_topic_model(const TopicModel& model, const std::vector<DialogueTokens>& dialogues) {
  NoGradGuard guard;
  HeldoutScore s;
  if (dialogues.empty()) return s;
  for (const auto& d : dialogues) {
    double rec = 0, kl = 0;
    s.loss += model.dialogue_loss(d, nullptr, 1.0, &rec, &kl).item();
    s.reconstruction += rec;
    s.kl += kl;
  }
  const double n = static_cast<double>(dialogues.size());
  s.loss /= n;
  s.reconstruction /= n;
  s.kl /= n;
  return s;
}

TopicTrainReport train_topic_model(TopicModel& model, const std::vector<DialogueTokens>& train,
                                   const std::vector<DialogueTokens>& heldout, const Rng& rng,
                                   const std::function<void(const TopicEpochLog&)>& on_epoch) {
  if (train.empty()) throw ContractError("train_topic_model: empty training corpus");
  const auto& cfg = model.config();
  TopicTrainReport report;
  const auto initial = evaluate_topic_model(model, heldout.empty() ? train : heldout);
  report.initial_heldout_loss = initial.loss;
  report.initial_heldout_reconstruction = initial.reconstruction;

  auto params = model.all_parameters();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  const double warmup = static_cast<double>(cfg.kl_warmup_steps ? cfg.kl_warmup_steps : train.size());
  std::size_t step = 0;
  double first_loss = 0;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = rng.split("topic-epoch").split(epoch);
    Rng order_rng = epoch_rng.split("order");
    order_rng.shuffle(order);
    double epoch_loss = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const double beta = std::min(1.0, static_cast<double>(step) / warmup);
      Rng noise_rng = epoch_rng.split(i);
      for (auto& p : params) p.zero_grad();
      Tape tape;
      double loss_value;
      {
        Tape::Scope scope(tape);
        auto loss = model.dialogue_loss(train[order[i]], &noise_rng, beta);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw NumericError("topic model: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + " (dialogue " + std::to_string(order[i]) + ")");
        }
        if (!cfg.freeze) tape.backward(loss);
      }
      if (!cfg.freeze) {
        clip_grad_norm(params, cfg.clip_norm);
        adam_step(params, adam);
      }
      if (step == 0) first_loss = loss_value;
      epoch_loss += loss_value;
      ++step;
    }
    TopicEpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(train.size());
    const auto held = evaluate_topic_model(model, heldout.empty() ? train : heldout);
    log.heldout_loss = held.loss;
    log.heldout_reconstruction = held.reconstruction;
    log.heldout_kl = held.kl;
    report.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.train_loss > 10.0 * std::max(first_loss, initial.loss)) {
      throw TrainingDiverged("topic model diverged: epoch " + std::to_string(epoch) + " mean loss " +
                             std::to_string(log.train_loss) + " vs initial " + std::to_string(first_loss));
    }
  }
  return report;
}

}  // namespace todkat

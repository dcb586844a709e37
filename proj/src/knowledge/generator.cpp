#include "todkat/knowledge/generator.hpp"

#include <algorithm>
#include <cmath>

#include "todkat/numerics/adam.hpp"
#include "todkat/numerics/ops.hpp"

namespace todkat {

void GeneratorConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) throw DimensionError("GeneratorConfig: d_model not divisible by n_heads");
  if (n_layers == 0 || d_ff == 0 || epochs == 0 || batch_size == 0) {
    throw ContractError("GeneratorConfig: layers, d_ff, epochs and batch_size must be positive");
  }
  if (max_source_tokens < 2 || max_tail_tokens < 1) throw ContractError("GeneratorConfig: token limits too small");
  if (!(learning_rate > 0)) throw ContractError("GeneratorConfig: learning_rate must be positive");
}

std::string EventGenerator::relation_token(Relation r) { return "<" + std::string(relation_name(r)) + ">"; }

std::vector<std::string> EventGenerator::relation_tokens() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < kRelationCount; ++i) out.push_back(relation_token(static_cast<Relation>(i)));
  return out;
}

EventGenerator::EventGenerator(const Vocab& vocab, const GeneratorConfig& config, const Rng& rng)
    : config_(config), vocab_(vocab) {
  config_.validate();
  for (const auto& t : relation_tokens()) {
    if (!vocab_.contains(t)) throw ContractError("EventGenerator: vocabulary lacks relation marker " + t);
  }
  const auto d = config_.d_model;
  Rng r = rng.split("generator");
  embedding_ = params_.add_uniform("gen.embed", {vocab_.size(), d}, d, r);
  positions_ = nn::sinusoidal_positions(std::max(config_.max_source_tokens, config_.max_tail_tokens + 2), d);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    encoder_.push_back(nn::TransformerBlock::create(params_, "gen.enc" + std::to_string(l), d, config_.n_heads,
                                                    config_.d_ff, false, r));
  }
  enc_norm_ = nn::LayerNorm::create(params_, "gen.enc_norm", d);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    decoder_.push_back(nn::TransformerBlock::create(params_, "gen.dec" + std::to_string(l), d, config_.n_heads,
                                                    config_.d_ff, true, r));
  }
  dec_norm_ = nn::LayerNorm::create(params_, "gen.dec_norm", d);
  never_emit_.assign(vocab_.size(), 0);
  for (auto id : {Vocab::kPad, Vocab::kCls, Vocab::kUnk, Vocab::kBos, Vocab::kNull}) never_emit_[id] = 1;
  for (const auto& t : relation_tokens()) never_emit_[vocab_.id(t)] = 1;
}

TokenIds EventGenerator::source_ids(const std::string& text, Relation relation) const {
  TokenIds ids{vocab_.id(relation_token(relation))};
  for (auto id : vocab_.encode_words(text)) {
    if (ids.size() == config_.max_source_tokens) break;
    ids.push_back(id);
  }
  return ids;
}

Tensor EventGenerator::encode(const TokenIds& source) const {
  const auto n = source.size();
  auto x = add(scale(gather_rows(embedding_, source), std::sqrt(static_cast<double>(config_.d_model))),
               slice(positions_, 0, n));
  nn::TransformerBlock::Context ctx;
  for (const auto& b : encoder_) x = b(x, ctx);
  return enc_norm_(x);
}

Tensor EventGenerator::decode(const Tensor& memory, const TokenIds& prefix, bool last_only) const {
  const auto n = prefix.size();
  auto x = add(scale(gather_rows(embedding_, prefix), std::sqrt(static_cast<double>(config_.d_model))),
               slice(positions_, 0, n));
  const auto mask = nn::causal_mask(n);
  nn::TransformerBlock::Context ctx;
  ctx.self_mask = &mask;
  ctx.cross = &memory;
  for (const auto& b : decoder_) x = b(x, ctx);
  if (last_only) x = slice(x, n - 1, n);
  auto logits = matmul(dec_norm_(x), transpose(embedding_));
  std::vector<std::uint8_t> blocked;
  blocked.reserve(logits.size());
  for (std::size_t r = 0; r < logits.dim(0); ++r) blocked.insert(blocked.end(), never_emit_.begin(), never_emit_.end());
  return masked_fill(logits, blocked, kMaskedScore);
}

Tensor EventGenerator::loss(const TokenIds& source, const std::string& tail) const {
  auto words = vocab_.encode_words(tail);
  if (words.size() > config_.max_tail_tokens) words.resize(config_.max_tail_tokens);
  TokenIds input{Vocab::kBos};
  input.insert(input.end(), words.begin(), words.end());
  TokenIds target = words;
  target.push_back(Vocab::kEos);
  return cross_entropy(decode(encode(source), input, false), target);
}

std::vector<GeneratorEpochLog> EventGenerator::train(const std::vector<KnowledgeRecord>& records,
                                                     const std::vector<std::string>& distractor_words,
                                                     const Rng& rng,
                                                     const std::function<void(const GeneratorEpochLog&)>& on_epoch) {
  if (records.empty()) throw ContractError("EventGenerator::train: no records");
  auto params = params_.tensors();
  AdamState adam;
  adam.learning_rate = config_.learning_rate;
  std::vector<std::size_t> order(records.size());
  std::vector<GeneratorEpochLog> logs;
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    Rng er = rng.split("epoch").split(epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    er.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const auto end = std::min(order.size(), start + config_.batch_size);
      params_.zero_grad();
      Tape tape;
      {
        Tape::Scope scope(tape);
        Tensor batch_loss;
        for (std::size_t b = start; b < end; ++b) {
          const auto& rec = records[order[b]];
          std::string text = rec.head;
          if (!distractor_words.empty() && er.uniform() < config_.distractor_rate) {
            const auto before = er.below(std::min<std::size_t>(3, config_.max_distractors + 1));
            const auto after = er.below(config_.max_distractors - before + 1);
            std::string pre, post;
            for (std::uint64_t w = 0; w < before; ++w) pre += distractor_words[er.below(distractor_words.size())] + " ";
            for (std::uint64_t w = 0; w < after; ++w) post += " " + distractor_words[er.below(distractor_words.size())];
            text = pre + text + post;
          }
          auto l = loss(source_ids(text, rec.relation), rec.tail);
          total += l.item();
          batch_loss = batch_loss.defined() ? add(batch_loss, l) : l;
        }
        batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
        tape.backward(batch_loss);
      }
      clip_grad_norm(params, 5.0);
      adam_step(params, adam);
    }
    logs.push_back({epoch + 1, total / static_cast<double>(records.size())});
    if (on_epoch) on_epoch(logs.back());
  }
  trained_ = true;
  return logs;
}

void EventGenerator::require_trained(const char* what) const {
  if (!trained_) throw ContractError(std::string("EventGenerator::") + what + ": generator is untrained");
}

std::vector<double> EventGenerator::next_log_probs(const Tensor& memory, const TokenIds& prefix) const {
  const auto lp = log_softmax(decode(memory, prefix, true), 1);
  return {lp.values().begin(), lp.values().end()};
}

std::string EventGenerator::greedy(const std::string& text, Relation relation) const {
  require_trained("greedy");
  NoGradGuard guard;
  auto memory = encode(source_ids(text, relation));
  TokenIds prefix{Vocab::kBos};
  for (std::size_t step = 0; step < config_.max_tail_tokens; ++step) {
    auto lp = next_log_probs(memory, prefix);
    const auto best = static_cast<std::int64_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (best == Vocab::kEos) break;
    prefix.push_back(best);
  }
  return vocab_.detokenize(TokenIds(prefix.begin() + 1, prefix.end()));
}

std::vector<std::string> EventGenerator::beam(const std::string& text, Relation relation, std::size_t k) const {
  require_trained("beam");
  if (k == 0) throw ContractError("EventGenerator::beam: width must be positive");
  NoGradGuard guard;
  auto memory = encode(source_ids(text, relation));
  struct Hyp {
    TokenIds ids;
    double score;
  };
  // score descending, then token ids ascending, for a total deterministic order
  auto better = [](const Hyp& a, const Hyp& b) { return a.score != b.score ? a.score > b.score : a.ids < b.ids; };
  std::vector<Hyp> alive{{{Vocab::kBos}, 0.0}}, finished;
  for (std::size_t step = 0; step < config_.max_tail_tokens && finished.size() < k && !alive.empty(); ++step) {
    std::vector<Hyp> cand;
    for (const auto& h : alive) {
      auto lp = next_log_probs(memory, h.ids);
      std::vector<std::int64_t> ids(lp.size());
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
      const auto take = std::min(k, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(),
                        [&](auto a, auto b) { return lp[a] != lp[b] ? lp[a] > lp[b] : a < b; });
      for (std::size_t i = 0; i < take; ++i) {
        if (never_emit_[ids[i]]) continue;
        Hyp n = h;
        n.ids.push_back(ids[i]);
        n.score += lp[ids[i]];
        cand.push_back(std::move(n));
      }
    }
    std::sort(cand.begin(), cand.end(), better);
    alive.clear();
    for (auto& c : cand) {
      if (alive.size() >= k) break;
      if (c.ids.back() == Vocab::kEos) {
        if (c.ids.size() > 2) finished.push_back(std::move(c));
      } else if (alive.size() < k) {
        alive.push_back(std::move(c));
      }
    }
  }
  std::vector<Hyp> pool = finished;
  pool.insert(pool.end(), alive.begin(), alive.end());
  std::sort(pool.begin(), pool.end(), better);
  std::vector<std::string> out;
  for (const auto& h : pool) {
    TokenIds body(h.ids.begin() + 1, h.ids.end());
    if (!body.empty() && body.back() == Vocab::kEos) body.pop_back();
    auto s = vocab_.detokenize(body);
    if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    if (out.size() == k) break;
  }
  if (out.size() < k) {
    throw ContractError("EventGenerator::beam: found only " + std::to_string(out.size()) + " distinct tails for width " +
                        std::to_string(k));
  }
  return out;
}

}  // namespace todkat

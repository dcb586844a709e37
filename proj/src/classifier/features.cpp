#include "todkat/classifier/features.hpp"

#include <spdlog/spdlog.h>

#include "todkat/numerics/ops.hpp"

namespace todkat {

FeatureExtractor::FeatureExtractor(const TopicModel& topic, const Vocab& vocab, const KnowledgeIndex* index,
                                   const EventGenerator* generator, KnowledgeOptions options)
    : topic_(topic), vocab_(vocab), index_(index), generator_(generator), options_(std::move(options)) {
  if (options_.k == 0) throw ContractError("FeatureExtractor: K must be positive");
  if (options_.relations.empty()) throw ContractError("FeatureExtractor: no relations");
}

const std::vector<double>& FeatureExtractor::item_features(const std::string& phrase) {
  auto it = item_cache_.find(phrase);
  if (it != item_cache_.end()) return it->second;
  NoGradGuard guard;
  auto x = topic_.lm().encode_lower(vocab_.tokenize(phrase, topic_.lm().config().max_tokens));
  auto z = topic_.extract_topic(x, topic_.initial_state());
  std::vector<double> f(x.pooled.values().begin(), x.pooled.values().end());
  f.insert(f.end(), z.values().begin(), z.values().end());
  ++stats_.cached_items;
  return item_cache_.emplace(phrase, std::move(f)).first->second;
}

SourceItems FeatureExtractor::assemble(const std::vector<std::vector<std::string>>& per_relation_texts, std::size_t n) {
  const auto d = topic_.lm().config().d_model, dz = topic_.config().d_z, k = options_.k;
  SourceItems s;
  std::vector<double> mean(n * d, 0.0);
  const double share = 1.0 / static_cast<double>(per_relation_texts.size() * k);
  for (const auto& texts : per_relation_texts) {
    std::vector<double> rows;
    rows.reserve(n * k * (d + dz));
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto& f = item_features(texts[i]);
      rows.insert(rows.end(), f.begin(), f.end());
      for (std::size_t c = 0; c < d; ++c) mean[(i / k) * d + c] += share * f[c];
    }
    s.rows.push_back(Tensor::from({n * k, d + dz}, std::move(rows)));
    s.texts.push_back(texts);
  }
  s.mean_cls = Tensor::from({n, d}, std::move(mean));
  return s;
}

DialogueFeatures FeatureExtractor::extract(const Dialogue& dialogue, const EmotionLabelSet& labels,
                                           std::size_t max_length, bool with_knowledge) {
  if (dialogue.utterances.empty()) throw ContractError("extract: dialogue " + dialogue.id + " is empty");
  NoGradGuard guard;
  const auto& lm = topic_.lm();
  const auto d = lm.config().d_model, dz = topic_.config().d_z;
  std::size_t n = dialogue.utterances.size();
  if (n > max_length) {
    spdlog::warn("dialogue {} has {} utterances, truncated to {}", dialogue.id, n, max_length);
    n = max_length;
  }
  DialogueFeatures f;
  f.id = dialogue.id;
  std::vector<double> u, z;
  u.reserve(n * d);
  z.reserve(n * dz);
  Tensor h = topic_.initial_state();
  for (std::size_t i = 0; i < n; ++i) {
    f.tokens.push_back(vocab_.tokenize(dialogue.utterances[i], lm.config().max_tokens));
    auto x = lm.encode_lower(f.tokens.back());
    auto zi = topic_.extract_topic(x, h);
    u.insert(u.end(), x.pooled.values().begin(), x.pooled.values().end());
    z.insert(z.end(), zi.values().begin(), zi.values().end());
    if (i + 1 < n) h = topic_.transition(zi, x);
  }
  f.u = Tensor::from({n, d}, std::move(u));
  f.z = Tensor::from({n, dz}, std::move(z));
  for (std::size_t i = 0; i < n && i < dialogue.labels.size(); ++i) f.labels.push_back(labels.id(dialogue.labels[i]));

  if (with_knowledge) {
    if (!index_ || !generator_) throw ContractError("extract: knowledge requested without an index and a generator");
    const auto k = options_.k;
    std::vector<std::vector<std::string>> retrieved, generated;
    for (auto rel : options_.relations) {
      std::vector<std::string> r_texts, g_texts;
      for (std::size_t i = 0; i < n; ++i) {
        auto ur = f.u.values().subspan(i * d, d);
        for (const auto& item : index_->retrieve_topk(ur, rel, k).items) r_texts.push_back(item.tail);
        ++stats_.retrievals;
        const auto key = std::make_pair(dialogue.utterances[i], rel);
        auto it = generation_cache_.find(key);
        if (it == generation_cache_.end()) {
          it = generation_cache_.emplace(key, generator_->beam(dialogue.utterances[i], rel, k)).first;
          ++stats_.generations;
        }
        g_texts.insert(g_texts.end(), it->second.begin(), it->second.end());
      }
      retrieved.push_back(std::move(r_texts));
      generated.push_back(std::move(g_texts));
    }
    f.retrieved = assemble(retrieved, n);
    f.generated = assemble(generated, n);
    f.has_knowledge = true;
  }
  return f;
}

std::vector<DialogueFeatures> FeatureExtractor::extract_all(const std::vector<Dialogue>& dialogues,
                                                            const EmotionLabelSet& labels, std::size_t max_length,
                                                            bool with_knowledge) {
  std::vector<DialogueFeatures> out;
  out.reserve(dialogues.size());
  for (const auto& d : dialogues) out.push_back(extract(d, labels, max_length, with_knowledge));
  return out;
}

}  // namespace todkat

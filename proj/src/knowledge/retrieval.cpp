#include "todkat/knowledge/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

namespace todkat {

namespace {
std::atomic<std::size_t> g_retrieval_calls{0};
}

std::vector<double> embed_text(const LanguageModel& lm, const Vocab& vocab, const std::string& text) {
  NoGradGuard guard;
  auto enc = lm.encode_lower(vocab.tokenize(text, lm.config().max_tokens));
  auto v = enc.pooled.values();
  return {v.begin(), v.end()};
}

std::uint64_t parameter_fingerprint(const ParameterStore& store) {
  // FNV-1a over names and raw value bits
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (const auto& e : store.entries()) {
    for (char c : e.name) mix(static_cast<unsigned char>(c));
    for (double v : e.tensor.values()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

KnowledgeIndex::KnowledgeIndex(KnowledgeBase kb, TextEmbedder embedder, std::uint64_t encoder_version)
    : kb_(std::move(kb)), version_(encoder_version) {
  embed_all(embedder);
}

KnowledgeIndex::KnowledgeIndex(KnowledgeBase kb, std::vector<std::vector<double>> head_embeddings)
    : kb_(std::move(kb)), embeddings_(std::move(head_embeddings)) {
  if (embeddings_.size() != kb_.size()) {
    throw DimensionError("KnowledgeIndex: " + std::to_string(embeddings_.size()) + " embeddings for " +
                         std::to_string(kb_.size()) + " records");
  }
}

void KnowledgeIndex::embed_all(const TextEmbedder& embedder) {
  std::map<std::string, std::vector<double>> cache;
  embeddings_.clear();
  embeddings_.reserve(kb_.size());
  for (const auto& r : kb_.records()) {
    auto it = cache.find(r.head);
    if (it == cache.end()) it = cache.emplace(r.head, embedder(r.head)).first;
    embeddings_.push_back(it->second);
  }
}

bool KnowledgeIndex::refresh(const TextEmbedder& embedder, std::uint64_t encoder_version) {
  if (encoder_version == version_ && !embeddings_.empty()) return false;
  embed_all(embedder);
  version_ = encoder_version;
  return true;
}

Retrieval KnowledgeIndex::retrieve_topk(std::span<const double> query, Relation relation, std::size_t k) const {
  ++g_retrieval_calls;
  if (k == 0) throw ContractError("retrieve_topk: K must be positive");
  const auto candidates = kb_.with_relation(relation);
  if (candidates.empty()) {
    throw ContractError("retrieve_topk: no knowledge records carry relation " + std::string(relation_name(relation)));
  }
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (auto idx : candidates) scored.emplace_back(cosine_similarity(query, embeddings_[idx]), idx);
  const auto take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  Retrieval out;
  for (std::size_t i = 0; i < take; ++i) {
    const auto& rec = kb_.records()[scored[i].second];
    out.items.push_back({scored[i].second, scored[i].first, rec.head, rec.tail});
  }
  if (take < k) {
    out.padded = true;
    spdlog::warn("retrieve_topk: only {} candidates for {}, repeating the best to reach K={}", take,
                 relation_name(relation), k);
    while (out.items.size() < k) out.items.push_back(out.items.front());
  }
  return out;
}

std::size_t KnowledgeIndex::retrieval_calls() { return g_retrieval_calls.load(); }

}  // namespace todkat

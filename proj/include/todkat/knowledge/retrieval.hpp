#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "todkat/knowledge/kb.hpp"
#include "todkat/lm/model.hpp"

namespace todkat {

using TextEmbedder = std::function<std::vector<double>(const std::string&)>;

/// Pooled CLS state of the lower LM stack for `text`, without recording gradients.
std::vector<double> embed_text(const LanguageModel& lm, const Vocab& vocab, const std::string& text);

/// Hash of every parameter value in the store; changes whenever any weight does.
std::uint64_t parameter_fingerprint(const ParameterStore& store);

/// Cosine similarity; 0 when either vector is all zeros.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct RetrievedItem {
  std::size_t record = 0;
  double score = 0;
  std::string head, tail;
};

struct Retrieval {
  std::vector<RetrievedItem> items;
  bool padded = false;  // fewer than K candidates; best one repeated
};

/// Knowledge base with cached head embeddings. Heads are embedded once per
/// distinct text; the cache is tied to an encoder version stamp.
class KnowledgeIndex {
 public:
  KnowledgeIndex(KnowledgeBase kb, TextEmbedder embedder, std::uint64_t encoder_version);
  /// Index over caller-provided head embeddings (one row per record).
  KnowledgeIndex(KnowledgeBase kb, std::vector<std::vector<double>> head_embeddings);

  const KnowledgeBase& kb() const { return kb_; }
  std::uint64_t encoder_version() const { return version_; }
  /// Re-embeds the heads when `encoder_version` differs from the cached stamp.
  /// Returns whether the cache was rebuilt.
  bool refresh(const TextEmbedder& embedder, std::uint64_t encoder_version);
  const std::vector<double>& head_embedding(std::size_t record) const { return embeddings_.at(record); }

  /// Tails of the K heads most cosine-similar to `query` among records carrying
  /// `relation`, best first; equal scores keep ascending record order.
  Retrieval retrieve_topk(std::span<const double> query, Relation relation, std::size_t k) const;

  /// Number of retrieve_topk calls made by this process.
  static std::size_t retrieval_calls();

 private:
  void embed_all(const TextEmbedder& embedder);

  KnowledgeBase kb_;
  std::vector<std::vector<double>> embeddings_;
  std::uint64_t version_ = 0;
};

}  // namespace todkat

#include "todkat/eval/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "todkat/numerics/checkpoint.hpp"

namespace todkat {

PipelineConfig::PipelineConfig() {
  lm.max_tokens = 18;  // longest synthetic utterance is 15 words
  lm.latent_dim = topic.d_z;
  topic.learning_rate = 1e-3;
}

Vocab build_pipeline_vocab(const std::vector<Dialogue>& train, const KnowledgeBase& kb) {
  std::vector<std::string> texts;
  for (const auto& d : train) texts.insert(texts.end(), d.utterances.begin(), d.utterances.end());
  for (const auto& r : kb.records()) {
    texts.push_back(r.head);
    texts.push_back(r.tail);
  }
  return Vocab::build(texts, EventGenerator::relation_tokens());
}

std::vector<DialogueTokens> tokenize_dialogues(const std::vector<Dialogue>& dialogues, const Vocab& vocab,
                                               std::size_t max_tokens) {
  std::vector<DialogueTokens> out;
  out.reserve(dialogues.size());
  for (const auto& d : dialogues) {
    DialogueTokens t;
    for (const auto& u : d.utterances) t.push_back(vocab.tokenize(u, max_tokens));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> utterance_words(const std::vector<Dialogue>& dialogues) {
  std::set<std::string> words;
  for (const auto& d : dialogues) {
    for (const auto& u : d.utterances) {
      std::istringstream in(u);
      std::string w;
      while (in >> w) words.insert(w);
    }
  }
  return {words.begin(), words.end()};
}

void save_stores(const std::filesystem::path& path, const std::vector<const ParameterStore*>& stores) {
  std::vector<NamedArray> arrays;
  std::set<std::string> seen;
  for (const auto* s : stores) {
    for (auto& a : to_arrays(*s)) {
      if (!seen.insert(a.name).second) throw ContractError("save_stores: duplicate parameter " + a.name);
      arrays.push_back(std::move(a));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  const auto bytes = encode_checkpoint(arrays);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
}

void load_stores(const std::filesystem::path& path, const std::vector<ParameterStore*>& stores) {
  const auto arrays = read_checkpoint(path);
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  for (auto* s : stores) {
    for (auto& e : s->entries()) {
      auto it = by_name.find(e.name);
      if (it == by_name.end()) throw ContractError(path.string() + ": missing parameter " + e.name);
      if (it->second->shape != e.tensor.shape()) throw DimensionError(path.string() + ": shape mismatch for " + e.name);
      auto dst = e.tensor.mutable_values();
      std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
    }
  }
}

std::unique_ptr<KnowledgeIndex> build_index(const KnowledgeBase& kb, const TopicModel& topic, const Vocab& vocab) {
  const auto& lm = topic.lm();
  return std::make_unique<KnowledgeIndex>(
      kb, [&lm, &vocab](const std::string& text) { return embed_text(lm, vocab, text); },
      parameter_fingerprint(lm.params()));
}

}  // namespace todkat

#include "todkat/data/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace todkat {

using nlohmann::json;

EmotionLabelSet EmotionLabelSet::ekman_with_neutral() {
  return {{"neutral", "anger", "disgust", "fear", "happiness", "sadness", "surprise"}, 0};
}

std::optional<std::size_t> EmotionLabelSet::find(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

std::size_t EmotionLabelSet::id(const std::string& name) const {
  auto i = find(name);
  if (!i) throw std::out_of_range("unknown emotion label '" + name + "'");
  return *i;
}

void EmotionLabelSet::validate() const {
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != names.size()) throw std::invalid_argument("emotion label names are not unique");
  if (names.empty()) throw std::invalid_argument("emotion label set is empty");
  if (neutral_id && *neutral_id >= names.size()) throw std::invalid_argument("neutral_id out of range");
}

std::vector<std::size_t> DatasetSpec::excluded_ids() const {
  std::vector<std::size_t> ids;
  for (const auto& name : exclude_labels_from_eval) ids.push_back(labels.id(name));
  return ids;
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key, bool required) {
  if (!j.contains(key)) {
    if (required) throw std::invalid_argument(std::string("missing field '") + key + "'");
    return {};
  }
  return j.at(key).get<std::vector<std::string>>();
}

}  // namespace

std::vector<Dialogue> parse_corpus(const std::string& text, const EmotionLabelSet& labels, const std::string& source) {
  std::vector<Dialogue> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    Dialogue d;
    try {
      auto j = json::parse(line);
      d.id = j.at("id").get<std::string>();
      d.utterances = string_list(j, "utterances", true);
      d.labels = string_list(j, "labels", true);
      d.speakers = string_list(j, "speakers", false);
    } catch (const std::exception& e) {
      throw CorpusError(where + ": parse error: " + e.what());
    }
    if (d.utterances.empty()) throw CorpusError(where + ": dialogue '" + d.id + "' has no utterances");
    if (d.utterances.size() != d.labels.size()) {
      throw CorpusError(where + ": dialogue '" + d.id + "' has " + std::to_string(d.utterances.size()) +
                        " utterances but " + std::to_string(d.labels.size()) + " labels");
    }
    if (!d.speakers.empty() && d.speakers.size() != d.utterances.size()) {
      throw CorpusError(where + ": dialogue '" + d.id + "' speaker count does not match utterances");
    }
    for (const auto& l : d.labels) {
      if (!labels.find(l)) throw CorpusError(where + ": unknown label '" + l + "'");
    }
    out.push_back(std::move(d));
  }
  if (out.empty()) throw CorpusError(source + ": corpus is empty");
  return out;
}

std::vector<Dialogue> load_corpus(const std::filesystem::path& path, const EmotionLabelSet& labels) {
  std::ifstream f(path);
  if (!f) throw CorpusError("cannot read corpus " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_corpus(ss.str(), labels, path.string());
}

std::string serialize_corpus(const std::vector<Dialogue>& dialogues) {
  std::string out;
  for (const auto& d : dialogues) {
    json j;
    j["id"] = d.id;
    if (!d.speakers.empty()) j["speakers"] = d.speakers;
    j["utterances"] = d.utterances;
    j["labels"] = d.labels;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CorpusError("cannot write corpus " + path.string());
  f << serialize_corpus(dialogues);
}

std::map<std::string, std::filesystem::path> load_split_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw CorpusError("cannot read split manifest " + path.string());
  std::map<std::string, std::filesystem::path> splits;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": expected 'split<TAB>path'");
    }
    std::filesystem::path p = line.substr(tab + 1);
    if (p.is_relative()) p = path.parent_path() / p;
    splits[line.substr(0, tab)] = p;
  }
  return splits;
}

void save_split_manifest(const std::filesystem::path& path,
                         const std::map<std::string, std::filesystem::path>& splits) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  for (const auto& [name, p] : splits) f << name << '\t' << p.generic_string() << '\n';
}

std::vector<std::string> overlapping_ids(const std::vector<std::vector<Dialogue>>& splits) {
  std::map<std::string, std::size_t> owner;
  std::set<std::string> dup;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    for (const auto& d : splits[s]) {
      auto [it, fresh] = owner.emplace(d.id, s);
      if (!fresh && it->second != s) dup.insert(d.id);
    }
  }
  return {dup.begin(), dup.end()};
}

BatchPlan pad_and_batch(const std::vector<Dialogue>& dialogues, std::size_t max_dialogue_length,
                        std::size_t batch_size) {
  if (max_dialogue_length == 0 || batch_size == 0) {
    throw std::invalid_argument("pad_and_batch: max length and batch size must be positive");
  }
  BatchPlan plan;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    if (plan.batches.empty() || plan.batches.back().items.size() == batch_size) plan.batches.emplace_back();
    PaddedDialogue p;
    p.index = i;
    p.length = std::min(dialogues[i].utterances.size(), max_dialogue_length);
    if (dialogues[i].utterances.size() > max_dialogue_length) ++plan.truncated;
    p.pad_mask.assign(max_dialogue_length, 1);
    std::fill(p.pad_mask.begin(), p.pad_mask.begin() + static_cast<std::ptrdiff_t>(p.length), 0);
    plan.batches.back().items.push_back(std::move(p));
  }
  return plan;
}

}  // namespace todkat

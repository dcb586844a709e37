#include "todkat/knowledge/kb.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace todkat {

namespace {

constexpr std::array<std::string_view, kRelationCount> kNames = {
    "xIntent", "xReact", "oReact", "sNeed", "sWant", "oWant", "sEffect", "oEffect", "sAttr"};

std::atomic<std::size_t> g_files_loaded{0};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view relation_name(Relation r) { return kNames[static_cast<std::size_t>(r)]; }

std::optional<Relation> parse_relation(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Relation>(i);
  }
  if (name == "xNeed") return Relation::sNeed;
  if (name == "xWant") return Relation::sWant;
  if (name == "xEffect") return Relation::sEffect;
  if (name == "xAttr") return Relation::sAttr;
  return std::nullopt;
}

const std::vector<Relation>& default_relations() {
  static const std::vector<Relation> rels = {Relation::xIntent, Relation::xReact, Relation::oReact};
  return rels;
}

std::vector<Relation> relation_set(std::size_t count) {
  if (count != 3 && count != 5 && count != 9) {
    throw std::invalid_argument("relation set size must be 3, 5 or 9, got " + std::to_string(count));
  }
  std::vector<Relation> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<Relation>(i));
  return out;
}

std::vector<Relation> parse_relation_list(std::string_view text) {
  const auto t = trim(text);
  if (!t.empty() && std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return relation_set(std::stoul(t));
  }
  std::vector<Relation> out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto name = trim(item);
    auto r = parse_relation(name);
    if (!r) throw std::invalid_argument("unknown relation '" + name + "'");
    if (std::find(out.begin(), out.end(), *r) != out.end()) {
      throw std::invalid_argument("relation '" + name + "' listed twice");
    }
    out.push_back(*r);
  }
  if (out.empty()) throw std::invalid_argument("empty relation list");
  return out;
}

KnowledgeBase::KnowledgeBase(std::vector<KnowledgeRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].head.empty() || records_[i].tail.empty()) {
      throw KnowledgeError("knowledge record " + std::to_string(i) + ": empty head or tail");
    }
  }
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw KnowledgeError(path.string() + ": cannot open knowledge base");
  std::stringstream buf;
  buf << in.rdbuf();
  ++g_files_loaded;
  return parse(buf.str(), path.string());
}

KnowledgeBase KnowledgeBase::parse(const std::string& text, const std::string& source) {
  std::vector<KnowledgeRecord> records;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto where = source + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw KnowledgeError(where + ": invalid JSON (" + e.what() + ")");
    }
    for (const char* key : {"head", "relation", "tail"}) {
      if (!j.contains(key) || !j[key].is_string()) throw KnowledgeError(where + ": missing string field '" + key + "'");
    }
    const auto rel_name = j["relation"].get<std::string>();
    auto rel = parse_relation(rel_name);
    if (!rel) throw KnowledgeError(where + ": unknown relation '" + rel_name + "'");
    KnowledgeRecord r{trim(j["head"].get<std::string>()), *rel, trim(j["tail"].get<std::string>())};
    if (r.head.empty() || r.tail.empty()) throw KnowledgeError(where + ": empty head or tail");
    records.push_back(std::move(r));
  }
  if (records.empty()) throw KnowledgeError(source + ": knowledge base is empty");
  return KnowledgeBase(std::move(records));
}

std::vector<std::size_t> KnowledgeBase::with_relation(Relation relation) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].relation == relation) out.push_back(i);
  }
  return out;
}

std::vector<std::string> KnowledgeBase::heads() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records_) {
    if (seen.insert(r.head).second) out.push_back(r.head);
  }
  return out;
}

std::size_t KnowledgeBase::files_loaded() { return g_files_loaded.load(); }

}  // namespace todkat

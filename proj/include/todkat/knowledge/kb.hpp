#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace todkat {

enum class Relation { xIntent, xReact, oReact, sNeed, sWant, oWant, sEffect, oEffect, sAttr };

inline constexpr std::size_t kRelationCount = 9;

std::string_view relation_name(Relation r);
/// Accepts the nine canonical names and the x-prefixed aliases
/// (xNeed, xWant, xEffect, xAttr map to their s-prefixed forms).
std::optional<Relation> parse_relation(std::string_view name);
/// xIntent, xReact, oReact.
const std::vector<Relation>& default_relations();
/// First `count` relations in canonical order; count is 3, 5 or 9.
std::vector<Relation> relation_set(std::size_t count);
/// Parses a comma-separated list of names, or a bare count ("3", "5", "9").
std::vector<Relation> parse_relation_list(std::string_view text);

struct KnowledgeRecord {
  std::string head;
  Relation relation;
  std::string tail;
  bool operator==(const KnowledgeRecord&) const = default;
};

class KnowledgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable list of (head, relation, tail) triples in file order.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(std::vector<KnowledgeRecord> records);

  /// One JSON object per line: {"head", "relation", "tail"}.
  static KnowledgeBase load(const std::filesystem::path& path);
  static KnowledgeBase parse(const std::string& text, const std::string& source = "<memory>");

  const std::vector<KnowledgeRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  /// Record indices carrying `relation`, ascending.
  std::vector<std::size_t> with_relation(Relation relation) const;
  /// Distinct head texts in first-occurrence order.
  std::vector<std::string> heads() const;

  /// Number of KB files read by this process.
  static std::size_t files_loaded();

 private:
  std::vector<KnowledgeRecord> records_;
};

}  // namespace todkat

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace todkat {

struct Dialogue {
  std::string id;
  std::vector<std::string> utterances;
  std::vector<std::string> labels;
  std::vector<std::string> speakers;  // empty when absent

  bool operator==(const Dialogue&) const = default;
};

/// Raised for malformed corpus files; the message names the line.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EmotionLabelSet {
  std::vector<std::string> names;
  std::optional<std::size_t> neutral_id;

  /// neutral, anger, disgust, fear, happiness, sadness, surprise.
  static EmotionLabelSet ekman_with_neutral();
  std::size_t size() const { return names.size(); }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t id(const std::string& name) const;  // throws std::out_of_range
  void validate() const;
};

struct DatasetSpec {
  std::string name = "synthetic";
  EmotionLabelSet labels = EmotionLabelSet::ekman_with_neutral();
  std::size_t max_dialogue_length = 36;
  std::vector<std::string> exclude_labels_from_eval;
  std::map<std::string, std::filesystem::path> splits;

  std::vector<std::size_t> excluded_ids() const;
};

/// One JSON object per line: {"id", "speakers"?, "utterances", "labels"}.
std::vector<Dialogue> load_corpus(const std::filesystem::path& path, const EmotionLabelSet& labels);
std::vector<Dialogue> parse_corpus(const std::string& text, const EmotionLabelSet& labels,
                                   const std::string& source = "<memory>");
void save_corpus(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues);
std::string serialize_corpus(const std::vector<Dialogue>& dialogues);

/// Plain text, one "split<TAB>path" per line; relative paths resolve against the
/// manifest's directory.
std::map<std::string, std::filesystem::path> load_split_manifest(const std::filesystem::path& path);
void save_split_manifest(const std::filesystem::path& path,
                         const std::map<std::string, std::filesystem::path>& splits);

/// Dialogue ids occurring in more than one split; empty means the splits partition.
std::vector<std::string> overlapping_ids(const std::vector<std::vector<Dialogue>>& splits);

struct PaddedDialogue {
  std::size_t index = 0;               // position in the input list
  std::size_t length = 0;              // real utterances after truncation
  std::vector<std::uint8_t> pad_mask;  // [max_dialogue_length], 1 at NULL positions
};

struct Batch {
  std::vector<PaddedDialogue> items;
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::size_t truncated = 0;  // dialogues cut to max_dialogue_length
};

/// Groups dialogues in input order. Positions past a dialogue's end are NULL and
/// masked; dialogues longer than the maximum are truncated and counted.
BatchPlan pad_and_batch(const std::vector<Dialogue>& dialogues, std::size_t max_dialogue_length,
                        std::size_t batch_size);

}  // namespace todkat

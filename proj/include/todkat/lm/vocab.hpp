#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace todkat {

using TokenIds = std::vector<std::int64_t>;

/// Lowercased whitespace/punctuation split. Punctuation marks become their own
/// tokens; apostrophes stay inside words ("you're").
std::vector<std::string> split_words(std::string_view text);

class Vocab {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kCls = 1;
  static constexpr std::int64_t kUnk = 2;
  static constexpr std::int64_t kBos = 3;
  static constexpr std::int64_t kEos = 4;
  static constexpr std::int64_t kNull = 5;

  /// Only the reserved tokens.
  Vocab();
  /// Reserved tokens, then `extra` (e.g. relation markers) in order, then corpus
  /// words by descending frequency, ties alphabetical.
  static Vocab build(const std::vector<std::string>& texts, const std::vector<std::string>& extra = {});
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::int64_t id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(std::int64_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// [CLS, words...] truncated or PAD-filled to exactly `max_tokens`.
  TokenIds tokenize(std::string_view text, std::size_t max_tokens) const;
  /// Words without CLS or padding.
  TokenIds encode_words(std::string_view text) const;
  std::string detokenize(const TokenIds& ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void push(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> index_;
};

/// Number of leading non-PAD ids.
std::size_t unpadded_length(const TokenIds& ids);

}  // namespace todkat

#include "todkat/lm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include "todkat/numerics/tensor.hpp"

namespace todkat {

namespace {

const char* const kReserved[] = {"<pad>", "<cls>", "<unk>", "<bos>", "<eos>", "<null>"};

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && c != '\'') {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocab::Vocab() {
  for (const char* t : kReserved) push(t);
}

void Vocab::push(const std::string& token) {
  if (index_.count(token)) throw ContractError("vocab: duplicate token '" + token + "'");
  index_.emplace(token, static_cast<std::int64_t>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::string>& texts, const std::vector<std::string>& extra) {
  Vocab v;
  for (const auto& t : extra) v.push(t);
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& w : split_words(text)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [w, n] : ordered) {
    if (!v.contains(w)) v.push(w);
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read vocab " + path.string());
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  std::string line;
  while (std::getline(f, line)) v.push(line);
  for (std::size_t i = 0; i < std::size(kReserved); ++i) {
    if (i >= v.tokens_.size() || v.tokens_[i] != kReserved[i]) {
      throw std::runtime_error("vocab " + path.string() + ": reserved tokens missing or out of order");
    }
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write vocab " + path.string());
  for (const auto& t : tokens_) f << t << '\n';
}

std::int64_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocab::token(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("vocab: id " + std::to_string(id) + " out of range [0, " +
                        std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenIds Vocab::encode_words(std::string_view text) const {
  TokenIds ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

TokenIds Vocab::tokenize(std::string_view text, std::size_t max_tokens) const {
  if (max_tokens < 2) throw ContractError("tokenize: max_tokens must be >= 2");
  TokenIds ids{kCls};
  for (auto w : encode_words(text)) {
    if (ids.size() == max_tokens) break;
    ids.push_back(w);
  }
  ids.resize(max_tokens, kPad);
  return ids;
}

std::string Vocab::detokenize(const TokenIds& ids) const {
  std::string out;
  for (auto i : ids) {
    if (i == kPad || i == kCls || i == kBos) continue;
    if (i == kEos) break;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

std::size_t unpadded_length(const TokenIds& ids) {
  std::size_t n = ids.size();
  while (n > 0 && ids[n - 1] == Vocab::kPad) --n;
  return n;
}

}  // namespace todkat

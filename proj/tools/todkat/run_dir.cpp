#include "run_dir.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/sha.h>

namespace todkat::cli {

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  SHA_CTX ctx;
  SHA1_Init(&ctx);
  SHA1_Update(&ctx, header.data(), header.size());
  SHA1_Update(&ctx, content.data(), content.size());
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1_Final(digest, &ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (auto b : digest) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string git_blob_hash_file(const std::filesystem::path& path) { return git_blob_hash(read_file(path)); }

RunDir::RunDir(const std::filesystem::path& root, std::string command) : root_(root), command_(std::move(command)) {
  std::filesystem::create_directories(root_);
  const auto lock = root_ / ".lock";
  const int fd = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw RunDirLocked("run directory " + root_.string() + " is locked by another command (" + lock.string() + ")");
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
  locked_ = true;
}

RunDir::~RunDir() {
  if (locked_) {
    std::error_code ec;
    std::filesystem::remove(root_ / ".lock", ec);
  }
}

void RunDir::add_input(const std::filesystem::path& file) { inputs_[file.string()] = git_blob_hash_file(file); }

void RunDir::write(const std::string& relative, const std::string& content) {
  const auto p = root_ / relative;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.close();
  add_output(relative);
}

void RunDir::add_output(const std::string& relative) {
  if (std::find(outputs_.begin(), outputs_.end(), relative) == outputs_.end()) outputs_.push_back(relative);
}

void RunDir::finish(const std::string& config_echo, std::uint64_t seed) {
  write("config.echo", config_echo);
  nlohmann::ordered_json m;
  m["command"] = command_;
  m["seed"] = seed;
  m["config_hash"] = git_blob_hash(config_echo);
  auto& in = m["inputs"] = nlohmann::ordered_json::array();
  for (const auto& [path, hash] : inputs_) in.push_back({{"path", path}, {"hash", hash}});
  auto sorted = outputs_;
  std::sort(sorted.begin(), sorted.end());
  auto& out = m["outputs"] = nlohmann::ordered_json::array();
  for (const auto& rel : sorted) out.push_back({{"path", rel}, {"hash", git_blob_hash_file(root_ / rel)}});
  for (const auto& [k, v] : fields_) m[k] = v;
  std::ofstream f(root_ / "manifest.json", std::ios::trunc);
  f << m.dump(2) << "\n";
}

}  // namespace todkat::cli

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace todkat::cli {

/// SHA-1 of "blob <size>\0<content>", as git computes object ids.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::filesystem::path& path);

class RunDirLocked : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Output directory owned by one command: config.echo, manifest.json,
/// checkpoints/, metrics/, predictions/. Holds `.lock` while alive.
class RunDir {
 public:
  RunDir(const std::filesystem::path& root, std::string command);
  ~RunDir();
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(const std::string& relative) const { return root_ / relative; }

  void add_input(const std::filesystem::path& file);
  /// Writes a file under the run directory and records it as an output.
  void write(const std::string& relative, const std::string& content);
  /// Records a file some other code already wrote.
  void add_output(const std::string& relative);
  void set_field(const std::string& key, const std::string& value) { fields_[key] = value; }

  /// Writes config.echo and manifest.json.
  void finish(const std::string& config_echo, std::uint64_t seed);

 private:
  std::filesystem::path root_;
  std::string command_;
  std::map<std::string, std::string> inputs_;  // path → hash
  std::vector<std::string> outputs_;
  std::map<std::string, std::string> fields_;
  bool locked_ = false;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace todkat::cli

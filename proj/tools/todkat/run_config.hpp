#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "todkat/data/synthetic.hpp"
#include "todkat/eval/pipeline.hpp"

namespace todkat::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of a run. Resolved once, before any module runs.
struct RunConfig {
  SynthConfig synth;
  PipelineConfig pipeline;
  std::vector<std::string> exclude_labels;
  std::size_t spearman_pairs = 5000;

  /// key=value lines; '#' starts a comment.
  void apply_file(const std::filesystem::path& path);
  void apply_text(const std::string& text, const std::string& source);
  void set(const std::string& key, const std::string& value);
  /// Forces one seed into every seeded component.
  void set_seed(std::uint64_t seed);
  std::uint64_t seed() const { return pipeline.seed; }

  /// Sorted key=value lines covering every key.
  std::string echo() const;
  static std::vector<std::string> keys();

  void validate() const;
};

/// File, then TODKAT_SEED, then --set overrides, then explicit flags.
RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides);

}  // namespace todkat::cli

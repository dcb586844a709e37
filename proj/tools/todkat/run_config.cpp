#include "run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace todkat::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key " + key + ": cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": expected a boolean, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, ptr};
}

struct Binding {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

Binding size_key(std::function<std::size_t&(RunConfig&)> ref, const std::string& key) {
  return {[ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_number<std::size_t>(key, v); },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}
Binding double_key(std::function<double&(RunConfig&)> ref, const std::string& key) {
  return {[ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_number<double>(key, v); },
          [ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); }};
}
Binding bool_key(std::function<bool&(RunConfig&)> ref, const std::string& key) {
  return {[ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); },
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> t;
#define TK_SIZE(key, expr) t[key] = size_key([](RunConfig& c) -> std::size_t& { return expr; }, key)
#define TK_DOUBLE(key, expr) t[key] = double_key([](RunConfig& c) -> double& { return expr; }, key)
#define TK_BOOL(key, expr) t[key] = bool_key([](RunConfig& c) -> bool& { return expr; }, key)
    t["seed"] = {[](RunConfig& c, const std::string& v) { c.set_seed(parse_number<std::uint64_t>("seed", v)); },
                 [](const RunConfig& c) { return std::to_string(c.seed()); }};
    TK_SIZE("synth.n_topics", c.synth.n_topics);
    TK_SIZE("synth.n_dialogues", c.synth.n_dialogues);
    TK_SIZE("synth.min_utterances", c.synth.min_utterances);
    TK_SIZE("synth.max_utterances", c.synth.max_utterances);
    TK_DOUBLE("synth.rho", c.synth.rho);
    TK_SIZE("synth.topic_words", c.synth.topic_words);
    TK_DOUBLE("synth.topic_free_fraction", c.synth.topic_free_fraction);
    TK_DOUBLE("synth.dev_fraction", c.synth.dev_fraction);
    TK_DOUBLE("synth.test_fraction", c.synth.test_fraction);

    TK_SIZE("lm.d_model", c.pipeline.lm.d_model);
    TK_SIZE("lm.n_heads", c.pipeline.lm.n_heads);
    TK_SIZE("lm.n_lower_layers", c.pipeline.lm.n_lower_layers);
    TK_SIZE("lm.n_upper_layers", c.pipeline.lm.n_upper_layers);
    TK_SIZE("lm.max_tokens", c.pipeline.lm.max_tokens);
    TK_SIZE("lm.d_ff", c.pipeline.lm.d_ff);

    TK_SIZE("topic.d_z", c.pipeline.topic.d_z);
    TK_SIZE("topic.mlp_hidden", c.pipeline.topic.mlp_hidden);
    TK_SIZE("topic.kl_warmup_steps", c.pipeline.topic.kl_warmup_steps);
    TK_SIZE("topic.epochs", c.pipeline.topic.epochs);
    TK_DOUBLE("topic.learning_rate", c.pipeline.topic.learning_rate);
    TK_SIZE("topic.transition_heads", c.pipeline.topic.transition_heads);
    TK_DOUBLE("topic.clip_norm", c.pipeline.topic.clip_norm);

    TK_SIZE("generator.d_model", c.pipeline.generator.d_model);
    TK_SIZE("generator.n_heads", c.pipeline.generator.n_heads);
    TK_SIZE("generator.n_layers", c.pipeline.generator.n_layers);
    TK_SIZE("generator.d_ff", c.pipeline.generator.d_ff);
    TK_SIZE("generator.max_source_tokens", c.pipeline.generator.max_source_tokens);
    TK_SIZE("generator.max_tail_tokens", c.pipeline.generator.max_tail_tokens);
    TK_SIZE("generator.epochs", c.pipeline.generator.epochs);
    TK_SIZE("generator.batch_size", c.pipeline.generator.batch_size);
    TK_DOUBLE("generator.learning_rate", c.pipeline.generator.learning_rate);
    TK_DOUBLE("generator.distractor_rate", c.pipeline.generator.distractor_rate);
    TK_SIZE("generator.max_distractors", c.pipeline.generator.max_distractors);

    TK_SIZE("classifier.d_model", c.pipeline.classifier.d_model);
    TK_SIZE("classifier.n_heads", c.pipeline.classifier.n_heads);
    TK_SIZE("classifier.n_encoder_layers", c.pipeline.classifier.n_encoder_layers);
    TK_SIZE("classifier.n_decoder_layers", c.pipeline.classifier.n_decoder_layers);
    TK_SIZE("classifier.d_ff", c.pipeline.classifier.d_ff);
    TK_SIZE("classifier.max_dialogue_length", c.pipeline.classifier.max_dialogue_length);
    TK_SIZE("classifier.max_epochs", c.pipeline.classifier.max_epochs);
    TK_SIZE("classifier.batch_size", c.pipeline.classifier.batch_size);
    TK_SIZE("classifier.patience", c.pipeline.classifier.patience);
    TK_DOUBLE("classifier.learning_rate", c.pipeline.classifier.learning_rate);
    TK_DOUBLE("classifier.clip_norm", c.pipeline.classifier.clip_norm);
    TK_DOUBLE("classifier.temperature", c.pipeline.classifier.temperature);
    TK_BOOL("classifier.use_topics", c.pipeline.classifier.use_topics);
    TK_BOOL("classifier.use_knowledge", c.pipeline.classifier.use_knowledge);
    TK_BOOL("classifier.unfreeze_lm", c.pipeline.classifier.unfreeze_lm);
    t["classifier.source"] = {
        [](RunConfig& c, const std::string& v) { c.pipeline.classifier.source = parse_source(v); },
        [](const RunConfig& c) { return std::string(source_name(c.pipeline.classifier.source)); }};

    TK_SIZE("knowledge.k", c.pipeline.knowledge.k);
    t["knowledge.relations"] = {
        [](RunConfig& c, const std::string& v) { c.pipeline.knowledge.relations = parse_relation_list(v); },
        [](const RunConfig& c) {
          std::vector<std::string> names;
          for (auto r : c.pipeline.knowledge.relations) names.emplace_back(relation_name(r));
          return join(names);
        }};

    t["eval.exclude_labels"] = {[](RunConfig& c, const std::string& v) { c.exclude_labels = split_list(v); },
                                [](const RunConfig& c) { return join(c.exclude_labels); }};
    TK_SIZE("eval.spearman_pairs", c.spearman_pairs);
#undef TK_SIZE
#undef TK_DOUBLE
#undef TK_BOOL
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = bindings().find(key);
  if (it == bindings().end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second.set(*this, trim(value));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key " + key + ": " + e.what());
  }
}

void RunConfig::set_seed(std::uint64_t seed) {
  pipeline.seed = seed;
  synth.seed = seed;
}

void RunConfig::apply_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(no) + ": expected key=value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(no) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string());
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [key, b] : bindings()) out += key + "=" + b.get(*this) + "\n";
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [key, b] : bindings()) out.push_back(key);
  return out;
}

void RunConfig::validate() const {
  synth.validate();
  auto lm = pipeline.lm;
  lm.vocab_size = std::max<std::size_t>(lm.vocab_size, 8);
  lm.latent_dim = pipeline.topic.d_z;
  lm.validate();
  pipeline.topic.validate();
  pipeline.generator.validate();
  pipeline.classifier.validate();
  if (pipeline.knowledge.k == 0) throw ConfigError("knowledge.k must be positive");
  const auto labels = EmotionLabelSet::ekman_with_neutral();
  for (const auto& l : exclude_labels)
    if (!labels.find(l)) throw ConfigError("eval.exclude_labels: unknown label '" + l + "'");
}

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  RunConfig c;
  if (!config_path.empty()) c.apply_file(config_path);
  if (const char* env = std::getenv("TODKAT_SEED"); env && *env) c.set("seed", env);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    c.set(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  return c;
}

}  // namespace todkat::cli

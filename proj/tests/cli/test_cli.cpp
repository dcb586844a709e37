#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "run_config.hpp"
#include "run_dir.hpp"

namespace fs = std::filesystem;
using todkat::cli::git_blob_hash;
using todkat::cli::read_file;

namespace {

struct Result {
  int status = -1;
  std::string err;
};

/// Runs the CLI with stdout discarded and stderr captured.
Result run_cli(const std::string& args, const std::string& env = "") {
  const auto err_file = fs::temp_directory_path() / ("todkat_cli_err_" + std::to_string(::getpid()));
  const auto cmd = env + " " + TODKAT_CLI + " " + args + " >/dev/null 2>" + err_file.string();
  const int raw = std::system(cmd.c_str());
  Result r{WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_file(err_file)};
  fs::remove(err_file);
  return r;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("todkat_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

nlohmann::json manifest(const fs::path& run) { return nlohmann::json::parse(read_file(run / "manifest.json")); }

std::string output_hash(const fs::path& run, const std::string& rel) {
  const auto m = manifest(run);
  for (const auto& o : m.at("outputs"))
    if (o.at("path") == rel) return o.at("hash");
  return "";
}

std::string echo_value(const fs::path& run, const std::string& key) {
  std::istringstream in(read_file(run / "config.echo"));
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  return "";
}

const std::string kTinyLm =
    " --set lm.d_model=16 --set lm.n_heads=2 --set lm.d_ff=32 --set topic.d_z=4 --set topic.mlp_hidden=16"
    " --set topic.epochs=1 --set topic.transition_heads=2";
const std::string kTinyClf =
    " --set classifier.d_model=16 --set classifier.n_heads=2 --set classifier.d_ff=32 --set classifier.max_epochs=2"
    " --set generator.d_model=16 --set generator.n_heads=2 --set generator.d_ff=32 --set generator.epochs=1";

/// gen-data and train-topic on 40 dialogues, shared by the tests below.
const fs::path& tiny_runs() {
  static const fs::path root = [] {
    auto r = scratch("tiny");
    EXPECT_EQ(run_cli("gen-data --seed 3 --set synth.n_dialogues=40 --out-dir " + (r / "data").string()).status, 0);
    EXPECT_EQ(run_cli("train-topic --seed 3 --data " + (r / "data/data").string() + " --out-dir " + (r / "topic").string() +
                     kTinyLm)
                  .status,
              0);
    return r;
  }();
  return root;
}

struct RemoveScratch : ::testing::Environment {
  void TearDown() override { fs::remove_all(fs::temp_directory_path() / ("todkat_cli_test_" + std::to_string(::getpid()))); }
};
const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new RemoveScratch);

}  // namespace

TEST(GitBlobHash, MatchesGit) {
  // git hash-object on "hello\n" and on an empty file
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(RunConfig, EchoRoundTripsAndCoversEveryKey) {
  todkat::cli::RunConfig a;
  a.set("classifier.source", "generated");
  a.set("knowledge.relations", "xReact,oWant");
  a.set("topic.learning_rate", "0.00025");
  a.set_seed(17);
  todkat::cli::RunConfig b;
  b.apply_text(a.echo(), "echo");
  EXPECT_EQ(a.echo(), b.echo());
  const auto echo = a.echo();
  EXPECT_EQ(std::count(echo.begin(), echo.end(), '\n'),
            static_cast<std::ptrdiff_t>(todkat::cli::RunConfig::keys().size()));
}

TEST(RunConfig, ErrorsNameTheLine) {
  todkat::cli::RunConfig c;
  try {
    c.apply_text("seed=2\n# comment\nlm.d_model = x\n", "cfg");
    FAIL();
  } catch (const todkat::cli::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(c.apply_text("no equals sign", "cfg"), todkat::cli::ConfigError);
  EXPECT_THROW(c.set("classifier.use_topics", "maybe"), todkat::cli::ConfigError);
}

TEST(Cli, EvalOnPerfectPredictionsScoresOne) {
  const auto out = scratch("perfect");
  const auto fixture = std::string(TODKAT_DATA_DIR) + "/fixtures/perfect_predictions.jsonl";
  const auto before = git_blob_hash(read_file(fixture));
  ASSERT_EQ(run_cli("eval --predictions " + fixture + " --out-dir " + out.string()).status, 0);
  const auto csv = read_file(out / "metrics/metrics.csv");
  EXPECT_NE(csv.find(",1.000000,1.000000,1.000000"), std::string::npos) << csv;
  EXPECT_EQ(git_blob_hash(read_file(fixture)), before);
  EXPECT_EQ(manifest(out).at("inputs")[0].at("hash"), before);
  EXPECT_FALSE(fs::exists(out / ".lock"));
}

TEST(Cli, ErrorsAreOneMachineReadableLine) {
  const auto out = scratch("errors");
  auto r = run_cli("gen-data --set bogus=1 --out-dir " + out.string());
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err, "todkat: error kind=config msg=unknown config key 'bogus'\n");

  fs::create_directories(out);
  std::ofstream(out / "bad.cfg") << "seed = 4\nsynth.rho = 2x\n";
  r = run_cli("gen-data --config " + (out / "bad.cfg").string() + " --out-dir " + out.string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("bad.cfg:2:"), std::string::npos) << r.err;

  r = run_cli("train-clf --out-dir " + out.string() + " --data /nonexistent --topic /nonexistent");
  EXPECT_NE(r.status, 0);
  EXPECT_EQ(r.err.rfind("todkat: error kind=", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  EXPECT_EQ(run_cli("no-such-command").status, 2);
}

TEST(Cli, LockedRunDirectoryIsRefused) {
  const auto out = scratch("locked");
  fs::create_directories(out);
  std::ofstream(out / ".lock") << "12345\n";
  const auto r = run_cli("gen-data --set synth.n_dialogues=10 --out-dir " + out.string());
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.err.find("kind=locked"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / ".lock"));  // the owner's lock survives
  EXPECT_FALSE(fs::exists(out / "manifest.json"));
}

TEST(Cli, SeedPrecedence) {
  const auto out = scratch("seed");
  const std::string base = "gen-data --set synth.n_dialogues=10 --out-dir ";
  ASSERT_EQ(run_cli(base + (out / "env").string(), "TODKAT_SEED=9").status, 0);
  EXPECT_EQ(echo_value(out / "env", "seed"), "9");
  ASSERT_EQ(run_cli(base + (out / "set").string() + " --set seed=5", "TODKAT_SEED=9").status, 0);
  EXPECT_EQ(echo_value(out / "set", "seed"), "5");
  ASSERT_EQ(run_cli(base + (out / "flag").string() + " --set seed=5 --seed 6", "TODKAT_SEED=9").status, 0);
  EXPECT_EQ(echo_value(out / "flag", "seed"), "6");
  EXPECT_EQ(manifest(out / "flag").at("seed"), 6);
}

TEST(Cli, TrainTopicIsDeterministic) {
  const auto& r = tiny_runs();
  const auto data = (r / "data/data").string();
  const auto again = scratch("topic-again"), other = scratch("topic-other");
  ASSERT_EQ(run_cli("train-topic --seed 3 --data " + data + " --out-dir " + again.string() + kTinyLm).status, 0);
  ASSERT_EQ(run_cli("train-topic --seed 4 --data " + data + " --out-dir " + other.string() + kTinyLm).status, 0);
  const auto h = output_hash(r / "topic", "checkpoints/topic.ckpt");
  ASSERT_FALSE(h.empty());
  EXPECT_EQ(output_hash(again, "checkpoints/topic.ckpt"), h);
  EXPECT_EQ(output_hash(again, "metrics/topic_epochs.csv"), output_hash(r / "topic", "metrics/topic_epochs.csv"));
  EXPECT_NE(output_hash(other, "checkpoints/topic.ckpt"), h);
  EXPECT_EQ(git_blob_hash(read_file(r / "topic/checkpoints/topic.ckpt")), h);
}

TEST(Cli, NoKbNeverReadsTheKnowledgeBase) {
  const auto& r = tiny_runs();
  const auto out = scratch("nokb");
  const auto data = (r / "data/data").string();
  ASSERT_EQ(run_cli("train-clf --seed 3 --no-kb --kb /nonexistent/kb.jsonl --data " + data + " --topic " + (r / "topic").string() +
                   " --out-dir " + out.string() + kTinyClf)
                .status,
            0);
  const auto m = manifest(out);
  EXPECT_FALSE(m.contains("kb"));
  for (const auto& in : m.at("inputs")) EXPECT_EQ(in.at("path").get<std::string>().find("kb"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "checkpoints/generator.ckpt"));
  EXPECT_EQ(echo_value(out, "classifier.use_knowledge"), "false");
  // architecture comes from the topic run
  EXPECT_EQ(echo_value(out, "lm.d_model"), "16");

  const auto ev = scratch("nokb-eval");
  ASSERT_EQ(run_cli("eval --split test --data " + data + " --model " + out.string() + " --out-dir " + ev.string()).status, 0);
  const auto csv = read_file(ev / "metrics/metrics.csv");
  EXPECT_EQ(csv.rfind("variant,seed,split,macro_f1,micro_f1,weighted_f1\nminus_kb,3,test,", 0), 0u) << csv;
  EXPECT_TRUE(fs::exists(ev / "predictions/test.jsonl"));
}

TEST(Cli, InputsAreNotModified) {
  const auto& r = tiny_runs();
  const auto data = r / "data/data";
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(data)) before[e.path().string()] = git_blob_hash(read_file(e.path()));
  const auto out = scratch("analyze");
  ASSERT_EQ(run_cli("analyze-topics --split all --topic " + (r / "topic").string() + " --data " + data.string() +
                   " --out-dir " + out.string())
                .status,
            0);
  for (const auto& [p, h] : before) EXPECT_EQ(git_blob_hash(read_file(p)), h) << p;
  const auto report = nlohmann::json::parse(read_file(out / "metrics/spearman.json"));
  EXPECT_GE(report.at("rho").get<double>(), -1.0);
  EXPECT_LE(report.at("rho").get<double>(), 1.0);
}

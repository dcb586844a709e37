#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "todkat/data/corpus.hpp"
#include "todkat/data/synthetic.hpp"
#include "todkat/lm/vocab.hpp"

using namespace todkat;

namespace {

const auto kLabels = EmotionLabelSet::ekman_with_neutral();

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<Dialogue> all_dialogues(const SyntheticCorpus& c) {
  auto all = c.train;
  all.insert(all.end(), c.dev.begin(), c.dev.end());
  all.insert(all.end(), c.test.begin(), c.test.end());
  return all;
}

}  // namespace

TEST(LoadCorpus, Fixtures) {
  auto fx = load_corpus(std::filesystem::path(TODKAT_DATA_DIR) / "fixtures/dialogues.jsonl", kLabels);
  EXPECT_EQ(fx.size(), 6u);
  EXPECT_EQ(fx[0].utterances[0], "You're a freak!");
  const std::string three =
      R"({"id":"a","utterances":["hi"],"labels":["neutral"]})"
      "\n"
      R"({"id":"b","utterances":["ugh","gross"],"labels":["disgust","disgust"],"speakers":["x","y"]})"
      "\n"
      R"({"id":"c","utterances":["wow"],"labels":["surprise"]})"
      "\n";
  EXPECT_EQ(parse_corpus(three, kLabels).size(), 3u);
}

TEST(LoadCorpus, Errors) {
  EXPECT_THROW(parse_corpus("", kLabels), CorpusError);
  EXPECT_THROW(parse_corpus("\n\n", kLabels), CorpusError);
  try {
    parse_corpus(R"({"id":"a","utterances":["hi"],"labels":["neutral"]})"
                 "\n"
                 R"({"id":"b","utterances":["x","y"],"labels":["anger"]})",
                 kLabels, "f.jsonl");
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_NE(std::string(e.what()).find("f.jsonl:2"), std::string::npos) << e.what();
  }
  try {
    parse_corpus(R"({"id":"a","utterances":["hi"],"labels":["bored"]})", kLabels, "g");
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_NE(std::string(e.what()).find("g:1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bored"), std::string::npos);
  }
  EXPECT_THROW(parse_corpus("{not json", kLabels), CorpusError);
  EXPECT_THROW(load_corpus("/nonexistent/file.jsonl", kLabels), CorpusError);
}

TEST(LoadCorpus, RoundTrip) {
  SynthConfig cfg;
  cfg.n_dialogues = 40;
  auto corpus = all_dialogues(generate_synthetic(cfg));
  EXPECT_EQ(parse_corpus(serialize_corpus(corpus), kLabels), corpus);
  auto path = std::filesystem::temp_directory_path() / "todkat_corpus_rt.jsonl";
  save_corpus(path, corpus);
  EXPECT_EQ(load_corpus(path, kLabels), corpus);
  std::filesystem::remove(path);
}

TEST(Synthetic, SplitsPartitionIds) {
  SynthConfig cfg;
  cfg.n_dialogues = 300;
  auto c = generate_synthetic(cfg);
  EXPECT_TRUE(overlapping_ids({c.train, c.dev, c.test}).empty());
  EXPECT_EQ(c.train.size() + c.dev.size() + c.test.size(), 300u);
  EXPECT_EQ(c.dev.size(), 30u);
  EXPECT_EQ(c.test.size(), 30u);
  EXPECT_EQ(overlapping_ids({c.train, {c.train[0]}}), std::vector<std::string>{c.train[0].id});
}

TEST(Synthetic, FullCorrelationUsesSignature) {
  SynthConfig cfg;
  cfg.rho = 1.0;
  cfg.n_topics = 6;
  cfg.n_dialogues = 200;
  auto c = generate_synthetic(cfg);
  for (const auto& d : all_dialogues(c)) {
    const auto& sig = topic_blocks()[c.topic_of.at(d.id)].signature;
    for (const auto& l : d.labels) EXPECT_EQ(l, sig);
  }
}

TEST(Synthetic, ZeroCorrelationIsUniform) {
  SynthConfig cfg;
  cfg.rho = 0.0;
  cfg.n_dialogues = 2000;
  cfg.min_utterances = cfg.max_utterances = 5;
  std::vector<double> counts(kLabels.size(), 0.0);
  double total = 0;
  for (const auto& d : all_dialogues(generate_synthetic(cfg))) {
    for (const auto& l : d.labels) {
      counts[kLabels.id(l)] += 1;
      total += 1;
    }
  }
  ASSERT_EQ(total, 10000);
  double chi2 = 0;
  const double expected = total / static_cast<double>(kLabels.size());
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(kLabels.size() - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01) << chi2;
}

TEST(Synthetic, MixtureFrequencyMatchesAnalytic) {
  SynthConfig cfg;
  cfg.rho = 0.9;
  cfg.n_dialogues = 2000;
  cfg.min_utterances = cfg.max_utterances = 5;
  auto c = generate_synthetic(cfg);
  double sig = 0, total = 0;
  for (const auto& d : all_dialogues(c)) {
    const auto& s = topic_blocks()[c.topic_of.at(d.id)].signature;
    for (const auto& l : d.labels) {
      sig += l == s;
      total += 1;
    }
  }
  const double analytic = cfg.rho + (1 - cfg.rho) / static_cast<double>(kLabels.size());
  EXPECT_NEAR(sig / total, analytic, 0.02);
}

TEST(Synthetic, DeterministicBytes) {
  SynthConfig cfg;
  cfg.n_dialogues = 100;
  auto a = std::filesystem::temp_directory_path() / "todkat_syn_a";
  auto b = std::filesystem::temp_directory_path() / "todkat_syn_b";
  write_synthetic(generate_synthetic(cfg), a);
  write_synthetic(generate_synthetic(cfg), b);
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "topics.tsv", "splits.txt"}) {
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  }
  auto splits = load_split_manifest(a / "splits.txt");
  EXPECT_EQ(splits.at("dev"), a / "dev.jsonl");
  EXPECT_EQ(load_corpus(splits.at("dev"), kLabels).size(), 10u);
  cfg.seed = 2;
  EXPECT_NE(serialize_corpus(generate_synthetic(cfg).train), read_file(a / "train.jsonl"));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Synthetic, EveryUtteranceCarriesItsEvent) {
  SynthConfig cfg;
  cfg.n_dialogues = 50;
  for (const auto& d : all_dialogues(generate_synthetic(cfg))) {
    for (std::size_t i = 0; i < d.utterances.size(); ++i) {
      bool found = false;
      for (const auto& ev : toy_events()) found |= ev.emotion == d.labels[i] && d.utterances[i].find(ev.head) != std::string::npos;
      EXPECT_TRUE(found) << d.utterances[i];
    }
  }
  EXPECT_THROW(([] { SynthConfig c; c.rho = 1.5; generate_synthetic(c); })(), std::invalid_argument);
}

TEST(ToyKb, TableShapeAndBundledFile) {
  std::map<std::string, int> per_label;
  std::set<std::string> heads;
  for (const auto& ev : toy_events()) {
    ++per_label[ev.emotion];
    heads.insert(ev.head);
    EXPECT_EQ(ev.tails.size(), 9u);
  }
  EXPECT_EQ(heads.size(), 63u);
  for (const auto& name : kLabels.names) EXPECT_EQ(per_label[name], 9) << name;
  // event phrases never use topic vocabulary
  std::set<std::string> topic_words;
  for (const auto& b : topic_blocks()) topic_words.insert(b.words.begin(), b.words.end());
  for (const auto& h : heads)
    for (const auto& w : split_words(h)) EXPECT_FALSE(topic_words.count(w)) << h;
  EXPECT_EQ(read_file(std::filesystem::path(TODKAT_DATA_DIR) / "kb/toy_kb.jsonl"), serialize_kb(toy_kb_triples()));
}

TEST(PadAndBatch, MasksAndTruncation) {
  std::vector<Dialogue> ds;
  for (std::size_t n : {1, 3, 5}) {
    Dialogue d;
    d.id = std::to_string(n);
    d.utterances.assign(n, "x");
    d.labels.assign(n, "neutral");
    ds.push_back(d);
  }
  auto plan = pad_and_batch(ds, 4, 2);
  ASSERT_EQ(plan.batches.size(), 2u);
  EXPECT_EQ(plan.truncated, 1u);
  const auto& first = plan.batches[0].items[0];
  EXPECT_EQ(first.length, 1u);
  EXPECT_EQ(first.pad_mask, (std::vector<std::uint8_t>{0, 1, 1, 1}));
  EXPECT_EQ(plan.batches[1].items[0].length, 4u);
  EXPECT_EQ(plan.batches[1].items[0].pad_mask, (std::vector<std::uint8_t>{0, 0, 0, 0}));
  auto single = pad_and_batch({ds[1]}, 4, 1);
  EXPECT_EQ(single.batches[0].items[0].pad_mask, plan.batches[0].items[1].pad_mask);
  EXPECT_EQ(single.batches[0].items[0].length, plan.batches[0].items[1].length);
}

#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "run_config.hpp"
#include "run_dir.hpp"
#include "todkat/data/synthetic.hpp"
#include "todkat/eval/ablation.hpp"
#include "todkat/eval/metrics.hpp"
#include "todkat/eval/pipeline.hpp"
#include "todkat/numerics/ops.hpp"

namespace todkat::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Options shared by every subcommand.
struct Common {
  std::string out_dir;
  std::string config;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
};

struct Corpus {
  std::vector<Dialogue> train, dev, test;
  const std::vector<Dialogue>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "test") return test;
    throw ConfigError("unknown split '" + name + "' (train, dev or test)");
  }
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunConfig config_for(const Common& c) {
  auto cfg = resolve_config(c.config, c.overrides);
  if (c.seed >= 0) cfg.set_seed(static_cast<std::uint64_t>(c.seed));
  return cfg;
}

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  auto* o = sub->add_option("--out-dir", c.out_dir, "run directory for every output");
  if (needs_out) o->required();
  sub->add_option("--config", c.config, "key=value configuration file");
  sub->add_option("--set", c.overrides, "override one key, key=value (repeatable)");
  sub->add_option("--seed", c.seed, "global seed; wins over TODKAT_SEED and the config file");
}

Corpus load_data(const fs::path& dir, const EmotionLabelSet& labels, RunDir* run) {
  const auto manifest = dir / "splits.txt";
  const auto splits = load_split_manifest(manifest);
  Corpus c;
  for (const auto& [name, path] : splits) {
    if (run) run->add_input(path);
    auto dialogues = load_corpus(path, labels);
    if (name == "train") c.train = std::move(dialogues);
    else if (name == "dev") c.dev = std::move(dialogues);
    else if (name == "test") c.test = std::move(dialogues);
  }
  if (c.train.empty()) throw CorpusError(manifest.string() + ": no train split");
  if (!overlapping_ids({c.train, c.dev, c.test}).empty()) throw CorpusError(manifest.string() + ": splits share dialogue ids");
  return c;
}

KnowledgeBase load_kb(const fs::path& path, RunDir* run) {
  if (run) run->add_input(path);
  return KnowledgeBase::load(path);
}

/// Settings of a finished run, read back from its config.echo.
RunConfig load_run_config(const fs::path& run_dir) {
  RunConfig c;
  c.apply_file(run_dir / "config.echo");
  return c;
}

json load_manifest(const fs::path& run_dir) {
  return json::parse(read_file(run_dir / "manifest.json"));
}

std::vector<std::size_t> exclude_ids(const RunConfig& cfg, const EmotionLabelSet& labels) {
  std::vector<std::size_t> ids;
  for (const auto& l : cfg.exclude_labels) ids.push_back(labels.id(l));
  return ids;
}

LMConfig lm_config(const RunConfig& cfg, std::size_t vocab_size) {
  auto lm = cfg.pipeline.lm;
  lm.vocab_size = vocab_size;
  lm.latent_dim = cfg.pipeline.topic.d_z;
  return lm;
}

/// A trained topic model with its vocabulary, loaded from a train-topic run.
struct TopicAssets {
  RunConfig config;
  Vocab vocab;
  std::unique_ptr<TopicModel> model;
};

TopicAssets load_topic(const fs::path& run_dir, RunDir* run) {
  TopicAssets a;
  a.config = load_run_config(run_dir);
  const auto vocab_path = run_dir / "checkpoints" / "vocab.txt";
  const auto ckpt = run_dir / "checkpoints" / "topic.ckpt";
  if (run) {
    run->add_input(vocab_path);
    run->add_input(ckpt);
  }
  a.vocab = Vocab::load(vocab_path);
  a.model = std::make_unique<TopicModel>(lm_config(a.config, a.vocab.size()), a.config.pipeline.topic, Rng(a.config.seed()));
  load_stores(ckpt, {&a.model->lm().params(), &a.model->params()});
  return a;
}

std::unique_ptr<EventGenerator> train_generator(const RunConfig& cfg, const Vocab& vocab, const KnowledgeBase& kb,
                                                const std::vector<Dialogue>& train) {
  Stopwatch sw;
  auto gen = std::make_unique<EventGenerator>(vocab, cfg.pipeline.generator, Rng(cfg.seed()).split("generator"));
  gen->train(kb.records(), utterance_words(train), Rng(cfg.seed()).split("generator-train"),
             [](const GeneratorEpochLog& l) {
               if ((l.epoch + 1) % 10 == 0) spdlog::info("generator epoch {} loss {:.4f}", l.epoch + 1, l.mean_loss);
             });
  spdlog::info("generator trained in {:.1f}s", sw.seconds());
  return gen;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string labels_json(const std::vector<std::size_t>& ids, const EmotionLabelSet& labels) {
  json a = json::array();
  for (auto i : ids) a.push_back(labels.names.at(i));
  return a.dump();
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const Common& c) {
  auto cfg = config_for(c);
  cfg.validate();
  RunDir run(c.out_dir, "gen-data");
  const auto corpus = generate_synthetic(cfg.synth);
  write_synthetic(corpus, run.path("data"));
  for (const auto* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "topics.tsv", "splits.txt"}) {
    run.add_output(std::string("data/") + f);
  }
  run.write("data/kb.jsonl", serialize_kb(toy_kb_triples()));
  spdlog::info("wrote {} / {} / {} dialogues to {}", corpus.train.size(), corpus.dev.size(), corpus.test.size(),
               run.path("data").string());
  run.finish(cfg.echo(), cfg.seed());
  return 0;
}

// ------------------------------------------------------------- train-topic

int cmd_train_topic(const Common& c, const std::string& data_dir, std::string kb_path) {
  auto cfg = config_for(c);
  cfg.validate();
  RunDir run(c.out_dir, "train-topic");
  const auto labels = EmotionLabelSet::ekman_with_neutral();
  const auto corpus = load_data(data_dir, labels, &run);
  if (kb_path.empty()) kb_path = (fs::path(data_dir) / "kb.jsonl").string();
  const auto kb = load_kb(kb_path, &run);
  const auto vocab = build_pipeline_vocab(corpus.train, kb);
  TopicModel model(lm_config(cfg, vocab.size()), cfg.pipeline.topic, Rng(cfg.seed()));
  const auto max_tokens = cfg.pipeline.lm.max_tokens;
  std::string csv = "epoch,train_loss,heldout_loss,heldout_reconstruction,heldout_kl\n";
  Stopwatch sw;
  auto report = train_topic_model(model, tokenize_dialogues(corpus.train, vocab, max_tokens),
                                  tokenize_dialogues(corpus.dev, vocab, max_tokens), Rng(cfg.seed()).split("topic-train"),
                                  [&](const TopicEpochLog& l) {
                                    spdlog::info("topic epoch {} heldout {:.4f} (reconstruction {:.4f}, kl {:.4f})",
                                                 l.epoch, l.heldout_loss, l.heldout_reconstruction, l.heldout_kl);
                                    csv += std::to_string(l.epoch) + "," + fmt("%.10g", l.train_loss) + "," +
                                           fmt("%.10g", l.heldout_loss) + "," + fmt("%.10g", l.heldout_reconstruction) +
                                           "," + fmt("%.10g", l.heldout_kl) + "\n";
                                  });
  spdlog::info("topic model trained in {:.1f}s; heldout {:.4f} -> {:.4f}", sw.seconds(), report.initial_heldout_loss,
               report.epochs.empty() ? report.initial_heldout_loss : report.epochs.back().heldout_loss);
  fs::create_directories(run.path("checkpoints"));
  vocab.save(run.path("checkpoints/vocab.txt"));
  run.add_output("checkpoints/vocab.txt");
  save_stores(run.path("checkpoints/topic.ckpt"), {&model.lm().params(), &model.params()});
  run.add_output("checkpoints/topic.ckpt");
  run.write("metrics/topic_epochs.csv", csv);
  run.finish(cfg.echo(), cfg.seed());
  return 0;
}

// --------------------------------------------------------------- train-clf

struct ClfFlags {
  std::string data, topic, kb, source;
  bool no_topics = false, no_kb = false, unfreeze_lm = false;
};

int cmd_train_clf(const Common& c, const ClfFlags& f) {
  auto cfg = config_for(c);
  auto& cc = cfg.pipeline.classifier;
  if (f.no_topics) cc.use_topics = false;
  if (f.no_kb) cc.use_knowledge = false;
  if (!f.source.empty()) cc.source = parse_source(f.source);
  if (f.unfreeze_lm) cc.unfreeze_lm = true;
  RunDir run(c.out_dir, "train-clf");
  auto topic = load_topic(f.topic, &run);
  // the architecture of the topic model is fixed by its own run
  cfg.pipeline.lm = topic.config.pipeline.lm;
  cfg.pipeline.topic = topic.config.pipeline.topic;
  cfg.validate();
  const auto labels = EmotionLabelSet::ekman_with_neutral();
  const auto corpus = load_data(f.data, labels, &run);
  run.set_field("topic_run", fs::absolute(f.topic).lexically_normal().string());

  std::unique_ptr<KnowledgeBase> kb;
  std::unique_ptr<KnowledgeIndex> index;
  std::unique_ptr<EventGenerator> gen;
  if (cc.use_knowledge) {
    const auto kb_path = f.kb.empty() ? (fs::path(f.data) / "kb.jsonl").string() : f.kb;
    kb = std::make_unique<KnowledgeBase>(load_kb(kb_path, &run));
    run.set_field("kb", fs::absolute(kb_path).lexically_normal().string());
    index = build_index(*kb, *topic.model, topic.vocab);
    gen = train_generator(cfg, topic.vocab, *kb, corpus.train);
    save_stores(run.path("checkpoints/generator.ckpt"), {&gen->params()});
    run.add_output("checkpoints/generator.ckpt");
  }
  Stopwatch sw;
  FeatureExtractor fx(*topic.model, topic.vocab, index.get(), gen.get(), cfg.pipeline.knowledge);
  const auto train = fx.extract_all(corpus.train, labels, cc.max_dialogue_length, cc.use_knowledge);
  const auto dev = fx.extract_all(corpus.dev, labels, cc.max_dialogue_length, cc.use_knowledge);
  spdlog::info("features for {} + {} dialogues in {:.1f}s ({} retrievals, {} generations)", train.size(), dev.size(),
               sw.seconds(), fx.stats().retrievals, fx.stats().generations);

  EmotionClassifier model(cc, labels.size(), cfg.pipeline.lm.d_model, cfg.pipeline.topic.d_z, Rng(cfg.seed()));
  if (cc.unfreeze_lm) model.attach_lm(&topic.model->lm());
  std::string csv = "epoch,train_loss,dev_loss,dev_macro_f1,dev_micro_f1,dev_weighted_f1\n";
  const auto report = train_classifier(model, train, dev, exclude_ids(cfg, labels), Rng(cfg.seed()).split("train"),
                                       [&](const ClassifierEpochLog& l) {
                                         spdlog::info("classifier epoch {} train {:.4f} dev {:.4f} micro-F1 {:.4f}",
                                                      l.epoch, l.train_loss, l.dev_loss, l.dev.micro);
                                         csv += std::to_string(l.epoch) + "," + fmt("%.10g", l.train_loss) + "," +
                                                fmt("%.10g", l.dev_loss) + "," + fmt("%.6f", l.dev.macro) + "," +
                                                fmt("%.6f", l.dev.micro) + "," + fmt("%.6f", l.dev.weighted) + "\n";
                                       });
  spdlog::info("classifier trained in {:.1f}s; best dev micro-F1 {:.4f} at epoch {}", sw.seconds(),
               report.best_dev_micro, report.best_epoch);
  save_stores(run.path("checkpoints/classifier.ckpt"), {&model.params()});
  run.add_output("checkpoints/classifier.ckpt");
  if (cc.unfreeze_lm) {
    save_stores(run.path("checkpoints/lm.ckpt"), {&topic.model->lm().params()});
    run.add_output("checkpoints/lm.ckpt");
  }
  run.write("metrics/classifier_epochs.csv", csv);
  run.finish(cfg.echo(), cfg.seed());
  return 0;
}

/// Everything a trained classifier run needs for inference.
struct ClassifierAssets {
  RunConfig config;
  TopicAssets topic;
  std::unique_ptr<KnowledgeBase> kb;
  std::unique_ptr<KnowledgeIndex> index;
  std::unique_ptr<EventGenerator> generator;
  std::unique_ptr<EmotionClassifier> model;
};

ClassifierAssets load_classifier(const fs::path& run_dir, RunDir* run, bool need_model = true) {
  ClassifierAssets a;
  a.config = load_run_config(run_dir);
  const auto manifest = load_manifest(run_dir);
  if (manifest.value("command", "") != "train-clf") throw ConfigError(run_dir.string() + " is not a train-clf run");
  a.topic = load_topic(manifest.at("topic_run").get<std::string>(), run);
  const auto& cc = a.config.pipeline.classifier;
  if (cc.unfreeze_lm) {
    if (run) run->add_input(run_dir / "checkpoints" / "lm.ckpt");
    load_stores(run_dir / "checkpoints" / "lm.ckpt", {&a.topic.model->lm().params()});
  }
  if (cc.use_knowledge) {
    const fs::path kb_path = manifest.at("kb").get<std::string>();
    a.kb = std::make_unique<KnowledgeBase>(load_kb(kb_path, run));
    a.index = build_index(*a.kb, *a.topic.model, a.topic.vocab);
    a.generator = std::make_unique<EventGenerator>(a.topic.vocab, a.config.pipeline.generator, Rng(a.config.seed()).split("generator"));
    if (run) run->add_input(run_dir / "checkpoints" / "generator.ckpt");
    load_stores(run_dir / "checkpoints" / "generator.ckpt", {&a.generator->params()});
    a.generator->mark_trained();
  }
  if (need_model) {
    const auto labels = EmotionLabelSet::ekman_with_neutral();
    a.model = std::make_unique<EmotionClassifier>(cc, labels.size(), a.config.pipeline.lm.d_model,
                                                  a.config.pipeline.topic.d_z, Rng(a.config.seed()));
    if (run) run->add_input(run_dir / "checkpoints" / "classifier.ckpt");
    load_stores(run_dir / "checkpoints" / "classifier.ckpt", {&a.model->params()});
  }
  return a;
}

// -------------------------------------------------------------------- eval

struct PredictionRecord {
  std::string id;
  std::vector<std::size_t> predicted, gold;
};

std::vector<PredictionRecord> read_predictions(const fs::path& path, const EmotionLabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t no = 0;
  auto ids = [&](const json& arr, const char* field) {
    std::vector<std::size_t> v;
    for (const auto& x : arr) {
      auto id = labels.find(x.get<std::string>());
      if (!id) throw CorpusError(path.string() + ":" + std::to_string(no) + ": unknown label in " + field);
      v.push_back(*id);
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      PredictionRecord r{j.at("dialogue_id").get<std::string>(), ids(j.at("predicted"), "predicted"), ids(j.at("gold"), "gold")};
      if (r.predicted.size() != r.gold.size()) throw CorpusError("predicted and gold lengths differ");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    } catch (const CorpusError& e) {
      throw CorpusError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  if (out.empty()) throw CorpusError(path.string() + ": no predictions");
  return out;
}

std::string metrics_row(const std::string& variant, const std::string& seed, const std::string& split, const F1Scores& f) {
  return variant + "," + seed + "," + split + "," + fmt("%.6f", f.macro) + "," + fmt("%.6f", f.micro) + "," +
         fmt("%.6f", f.weighted) + "\n";
}

const char* kMetricsHeader = "variant,seed,split,macro_f1,micro_f1,weighted_f1\n";

int cmd_eval(const Common& c, const std::string& model_dir, const std::string& data_dir, const std::string& split,
             const std::string& predictions) {
  const auto labels = EmotionLabelSet::ekman_with_neutral();
  if (!predictions.empty()) {
    auto cfg = config_for(c);
    cfg.validate();
    RunDir run(c.out_dir, "eval");
    run.add_input(predictions);
    const auto recs = read_predictions(predictions, labels);
    ConfusionMatrix cm(labels.size());
    for (const auto& r : recs)
      for (std::size_t i = 0; i < r.gold.size(); ++i) cm.add(r.gold[i], r.predicted[i]);
    const auto f = f1_scores(cm, exclude_ids(cfg, labels));
    run.write("metrics/metrics.csv", std::string(kMetricsHeader) + metrics_row("predictions", std::to_string(cfg.seed()), "file", f));
    std::cout << "macro_f1=" << fmt("%.6f", f.macro) << " micro_f1=" << fmt("%.6f", f.micro)
              << " weighted_f1=" << fmt("%.6f", f.weighted) << "\n";
    run.finish(cfg.echo(), cfg.seed());
    return 0;
  }
  if (model_dir.empty() || data_dir.empty()) throw ConfigError("eval needs --model and --data, or --predictions");
  RunDir run(c.out_dir, "eval");
  auto assets = load_classifier(model_dir, &run);
  auto& cfg = assets.config;
  for (const auto& o : c.overrides)
    if (o.rfind("eval.", 0) == 0) cfg.set(o.substr(0, o.find('=')), o.substr(o.find('=') + 1));
  const auto corpus = load_data(data_dir, labels, &run);
  const auto& cc = cfg.pipeline.classifier;
  FeatureExtractor fx(*assets.topic.model, assets.topic.vocab, assets.index.get(), assets.generator.get(),
                      cfg.pipeline.knowledge);
  std::vector<std::string> splits = split == "all" ? std::vector<std::string>{"dev", "test"} : std::vector<std::string>{split};
  std::string csv = kMetricsHeader;
  std::string variant = cc.use_knowledge ? (cc.use_topics ? "full" : "minus_topics") : "minus_kb";
  if (cc.use_knowledge && cc.source != KnowledgeSource::Pointer)
    variant = cc.source == KnowledgeSource::Retrieved ? "kat_sbert" : "kat_comet";
  for (const auto& s : splits) {
    const auto& dialogues = corpus.split(s);
    if (dialogues.empty()) throw CorpusError("split " + s + " is empty");
    const auto feats = fx.extract_all(dialogues, labels, cc.max_dialogue_length, cc.use_knowledge);
    const auto pred = predict_all(*assets.model, feats);
    const auto f = score_predictions(feats, pred, labels.size(), exclude_ids(cfg, labels));
    csv += metrics_row(variant, std::to_string(cfg.seed()), s, f);
    std::string jsonl;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      json j;
      j["dialogue_id"] = feats[i].id;
      j["predicted"] = json::parse(labels_json(pred[i], labels));
      j["gold"] = json::parse(labels_json(feats[i].labels, labels));
      jsonl += j.dump() + "\n";
    }
    run.write("predictions/" + s + ".jsonl", jsonl);
    spdlog::info("{}: macro {:.4f} micro {:.4f} weighted {:.4f}", s, f.macro, f.micro, f.weighted);
  }
  run.write("metrics/metrics.csv", csv);
  run.finish(cfg.echo(), cfg.seed());
  return 0;
}

// ---------------------------------------------------------------- retrieve

int cmd_retrieve(const Common& c, const std::string& model_dir, const std::string& text, const std::string& relations,
                 std::size_t k) {
  RunDir run(c.out_dir, "retrieve");
  auto assets = load_classifier(model_dir, &run, false);
  auto& cfg = assets.config;
  if (!assets.index) throw ConfigError(model_dir + " was trained without knowledge; nothing to retrieve from");
  const auto rels = relations.empty() ? cfg.pipeline.knowledge.relations : parse_relation_list(relations);
  if (k == 0) k = cfg.pipeline.knowledge.k;
  const auto query = embed_text(assets.topic.model->lm(), assets.topic.vocab, text);
  json out;
  out["text"] = text;
  out["k"] = k;
  for (auto r : rels) {
    json rel;
    for (const auto& item : assets.index->retrieve_topk(query, r, k).items) {
      rel["retrieved"].push_back({{"head", item.head}, {"tail", item.tail}, {"score", item.score}});
    }
    rel["generated"] = assets.generator->beam(text, r, k);
    out["relations"][std::string(relation_name(r))] = rel;
  }
  const auto dumped = out.dump(2);
  std::cout << dumped << "\n";
  run.write("knowledge.json", dumped + "\n");
  run.finish(cfg.echo(), cfg.seed());
  return 0;
}

// ---------------------------------------------------------- analyze-topics

int cmd_analyze_topics(const Common& c, const std::string& topic_dir, const std::string& data_dir,
                       const std::string& split, const std::string& emotion, const std::string& model_dir) {
  RunDir run(c.out_dir, "analyze-topics");
  auto cfg = config_for(c);
  const auto labels = EmotionLabelSet::ekman_with_neutral();
  std::unique_ptr<ClassifierAssets> clf;
  const TopicAssets* topic = nullptr;
  TopicAssets own;
  if (emotion == "label-embedding") {
    if (model_dir.empty()) throw ConfigError("--emotion label-embedding needs --model");
    clf = std::make_unique<ClassifierAssets>(load_classifier(model_dir, &run));
    topic = &clf->topic;
  } else if (emotion == "one-hot") {
    if (topic_dir.empty()) throw ConfigError("analyze-topics needs --topic");
    own = load_topic(topic_dir, &run);
    topic = &own;
  } else {
    throw ConfigError("--emotion must be one-hot or label-embedding");
  }
  const auto corpus = load_data(data_dir, labels, &run);
  const auto& dialogues = split == "all" ? corpus.train : corpus.split(split);
  std::vector<Dialogue> chosen = dialogues;
  if (split == "all") {
    chosen.insert(chosen.end(), corpus.dev.begin(), corpus.dev.end());
    chosen.insert(chosen.end(), corpus.test.begin(), corpus.test.end());
  }
  const auto max_tokens = topic->config.pipeline.lm.max_tokens;
  std::string tsv = "dialogue_id\tutterance_index\tz\tgold_label\n";
  std::vector<TopicEmotionRecord> records;
  for (const auto& d : chosen) {
    const auto zs = topic->model->extract_dialogue_topics(tokenize_dialogues({d}, topic->vocab, max_tokens)[0]);
    for (std::size_t i = 0; i < zs.size(); ++i) {
      std::string z;
      for (auto v : zs[i]) z += (z.empty() ? "" : ",") + fmt("%.10g", v);
      tsv += d.id + "\t" + std::to_string(i) + "\t" + z + "\t" + d.labels[i] + "\n";
      std::vector<double> e;
      const auto y = labels.id(d.labels[i]);
      if (clf) {
        const auto& emb = clf->model->label_embedding();
        const auto width = emb.dim(1);
        e.assign(emb.values().begin() + static_cast<std::ptrdiff_t>(y * width),
                 emb.values().begin() + static_cast<std::ptrdiff_t>((y + 1) * width));
      } else {
        e.assign(labels.size(), 0.0);
        e[y] = 1.0;
      }
      records.push_back({zs[i], e});
    }
  }
  run.write("metrics/topics.tsv", tsv);
  const auto r = spearman_topic_emotion(records, cfg.spearman_pairs, Rng(cfg.seed()));
  json out;
  out["rho"] = r.rho;
  out["p_value"] = r.p_value;
  out["pairs"] = r.n;
  out["utterances"] = records.size();
  out["emotion_vectors"] = emotion;
  run.write("metrics/spearman.json", out.dump(2) + "\n");
  std::cout << "spearman_rho=" << fmt("%.6f", r.rho) << " p_value=" << fmt("%.3g", r.p_value) << " pairs=" << r.n
            << "\n";
  run.finish(cfg.echo(), cfg.seed());
  return 0;
}

// ------------------------------------------------------------------ ablate

struct AblateFlags {
  std::string data, topic, kb, variants = "full,minus_topics,minus_kb", seeds = "1,2,3,4,5";
  bool relation_sweep = false;
};

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_ablate(const Common& c, const AblateFlags& f) {
  auto cfg = config_for(c);
  RunDir run(c.out_dir, "ablate");
  auto topic = load_topic(f.topic, &run);
  cfg.pipeline.lm = topic.config.pipeline.lm;
  cfg.pipeline.topic = topic.config.pipeline.topic;
  cfg.validate();
  const auto labels = EmotionLabelSet::ekman_with_neutral();
  const auto corpus = load_data(f.data, labels, &run);

  AblationPlan plan;
  plan.variants.clear();
  for (const auto& v : split_commas(f.variants)) plan.variants.push_back(parse_variant(v));
  plan.seeds.clear();
  for (const auto& s : split_commas(f.seeds)) plan.seeds.push_back(std::stoull(s));
  if (f.relation_sweep) plan.relation_sets = {relation_set(3), relation_set(5), relation_set(9)};
  plan.validate();

  AblationInputs in;
  in.topic = topic.model.get();
  in.vocab = &topic.vocab;
  in.train = &corpus.train;
  in.dev = &corpus.dev;
  in.test = &corpus.test;
  in.labels = labels;
  in.exclude = exclude_ids(cfg, labels);
  in.classifier = cfg.pipeline.classifier;
  in.knowledge = cfg.pipeline.knowledge;

  std::unique_ptr<KnowledgeBase> kb;
  std::unique_ptr<KnowledgeIndex> index;
  std::unique_ptr<EventGenerator> gen;
  const bool needs_kb = std::any_of(plan.variants.begin(), plan.variants.end(),
                                    [&](Variant v) { return apply_variant(in.classifier, v).use_knowledge; });
  if (needs_kb) {
    const auto kb_path = f.kb.empty() ? (fs::path(f.data) / "kb.jsonl").string() : f.kb;
    kb = std::make_unique<KnowledgeBase>(load_kb(kb_path, &run));
    index = build_index(*kb, *topic.model, topic.vocab);
    gen = train_generator(cfg, topic.vocab, *kb, corpus.train);
    save_stores(run.path("checkpoints/generator.ckpt"), {&gen->params()});
    run.add_output("checkpoints/generator.ckpt");
    in.index = index.get();
    in.generator = gen.get();
  }
  auto rows = run_ablations(plan, in, [](const AblationRow& r) {
    if (r.failed) spdlog::warn("{} seed {} {}: failed ({})", r.variant, r.seed, r.split, r.error);
    else spdlog::info("{} seed {} {}: micro-F1 {:.4f} in {:.1f}s", r.variant, r.seed, r.split, r.micro_f1, r.wall_clock_seconds);
  });
  const auto summary = summarize(rows);
  rows.insert(rows.end(), summary.begin(), summary.end());
  const auto csv = ablation_csv(rows);
  run.write("metrics/ablation.csv", csv);
  std::cout << csv;
  run.finish(cfg.echo(), cfg.seed());
  return 0;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int fail(const char* kind, const std::string& msg, int code) {
  std::cerr << "todkat: error kind=" << kind << " msg=" << one_line(msg) << std::endl;
  return code;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Topic-driven, knowledge-aware emotion recognition in dialogue"};
  app.require_subcommand(1);
  spdlog::set_pattern("[%H:%M:%S] %v");

  Common common;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic corpus and the toy knowledge base");
  add_common(gen, common);

  std::string data, topic_run, kb, model, split = "test", predictions, text, relations, emotion = "one-hot";
  std::size_t k = 0;
  auto* tt = app.add_subcommand("train-topic", "train the topic model and its language model");
  add_common(tt, common);
  tt->add_option("--data", data, "directory holding splits.txt")->required();
  tt->add_option("--kb", kb, "knowledge base JSONL (default <data>/kb.jsonl)");

  ClfFlags clf;
  auto* tc = app.add_subcommand("train-clf", "train the emotion classifier");
  add_common(tc, common);
  tc->add_option("--data", clf.data, "directory holding splits.txt")->required();
  tc->add_option("--topic", clf.topic, "train-topic run directory")->required();
  tc->add_option("--kb", clf.kb, "knowledge base JSONL (default <data>/kb.jsonl)");
  tc->add_flag("--no-topics", clf.no_topics, "zero the topic vectors");
  tc->add_flag("--no-kb", clf.no_kb, "zero the knowledge vector; the knowledge base is never read");
  tc->add_option("--source", clf.source, "retrieved | generated | pointer")
      ->check(CLI::IsMember({"retrieved", "generated", "pointer"}));
  tc->add_flag("--unfreeze-lm", clf.unfreeze_lm, "train the language model jointly");

  auto* ev = app.add_subcommand("eval", "score a classifier run, or a predictions file");
  add_common(ev, common);
  ev->add_option("--model", model, "train-clf run directory");
  ev->add_option("--data", data, "directory holding splits.txt");
  ev->add_option("--split", split, "dev | test | all")->check(CLI::IsMember({"dev", "test", "train", "all"}));
  ev->add_option("--predictions", predictions, "score this JSONL of {dialogue_id, predicted, gold} instead");

  auto* rt = app.add_subcommand("retrieve", "show retrieved and generated knowledge for one utterance");
  add_common(rt, common);
  rt->add_option("--model", model, "train-clf run directory (with knowledge)")->required();
  rt->add_option("--text", text, "utterance")->required();
  rt->add_option("--relations", relations, "comma-separated relation names, or 3, 5, 9");
  rt->add_option("--k", k, "items per relation (default from the run)");

  auto* at = app.add_subcommand("analyze-topics", "export topic vectors and the topic-emotion rank correlation");
  add_common(at, common);
  at->add_option("--topic", topic_run, "train-topic run directory");
  at->add_option("--data", data, "directory holding splits.txt")->required();
  at->add_option("--split", split, "train | dev | test | all")->check(CLI::IsMember({"dev", "test", "train", "all"}));
  at->add_option("--emotion", emotion, "one-hot | label-embedding")
      ->check(CLI::IsMember({"one-hot", "label-embedding"}));
  at->add_option("--model", model, "train-clf run directory, for label embeddings");

  AblateFlags abl;
  auto* ab = app.add_subcommand("ablate", "train every variant for every seed and tabulate F1");
  add_common(ab, common);
  ab->add_option("--data", abl.data, "directory holding splits.txt")->required();
  ab->add_option("--topic", abl.topic, "train-topic run directory")->required();
  ab->add_option("--kb", abl.kb, "knowledge base JSONL (default <data>/kb.jsonl)");
  ab->add_option("--variants", abl.variants, "comma list of full, minus_topics, minus_kb, kat_sbert, kat_comet");
  ab->add_option("--seeds", abl.seeds, "comma list of seeds");
  ab->add_flag("--relation-sweep", abl.relation_sweep, "repeat knowledge variants with 3, 5 and 9 relations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what(), 2);
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*tt) return cmd_train_topic(common, data, kb);
    if (*tc) return cmd_train_clf(common, clf);
    if (*ev) return cmd_eval(common, model, data, split, predictions);
    if (*rt) return cmd_retrieve(common, model, text, relations, k);
    if (*at) return cmd_analyze_topics(common, topic_run, data, split, emotion, model);
    if (*ab) return cmd_ablate(common, abl);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const RunDirLocked& e) {
    return fail("locked", e.what(), 3);
  } catch (const CorpusError& e) {
    return fail("data", e.what(), 1);
  } catch (const KnowledgeError& e) {
    return fail("knowledge", e.what(), 1);
  } catch (const TrainingDiverged& e) {
    return fail("diverged", e.what(), 1);
  } catch (const std::invalid_argument& e) {
    return fail("invalid", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}

}  // namespace todkat::cli

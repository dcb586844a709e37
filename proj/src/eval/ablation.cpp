#include "todkat/eval/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

namespace todkat {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::MinusTopics: return "minus_topics";
    case Variant::MinusKb: return "minus_kb";
    case Variant::KatSbert: return "kat_sbert";
    case Variant::KatComet: return "kat_comet";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::Full, Variant::MinusTopics, Variant::MinusKb, Variant::KatSbert, Variant::KatComet})
    if (variant_name(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

ClassifierConfig apply_variant(ClassifierConfig c, Variant v) {
  switch (v) {
    case Variant::Full: break;
    case Variant::MinusTopics: c.use_topics = false; break;
    case Variant::MinusKb: c.use_knowledge = false; break;
    case Variant::KatSbert: c.source = KnowledgeSource::Retrieved; break;
    case Variant::KatComet: c.source = KnowledgeSource::Generated; break;
  }
  return c;
}

void AblationPlan::validate() const {
  if (variants.empty()) throw ContractError("ablation plan: no variants");
  if (seeds.empty()) throw ContractError("ablation plan: no seeds");
  std::set<Variant> seen(variants.begin(), variants.end());
  if (seen.size() != variants.size()) throw ContractError("ablation plan: duplicate variant");
  for (const auto& rs : relation_sets)
    if (rs.empty()) throw ContractError("ablation plan: empty relation set");
}

namespace {

struct FeatureSet {
  std::vector<DialogueFeatures> train, dev, test;
};

FeatureSet extract(FeatureExtractor& fx, const AblationInputs& in, bool knowledge) {
  const auto max_len = in.classifier.max_dialogue_length;
  return {fx.extract_all(*in.train, in.labels, max_len, knowledge), fx.extract_all(*in.dev, in.labels, max_len, knowledge),
          fx.extract_all(*in.test, in.labels, max_len, knowledge)};
}

AblationRow make_row(const std::string& variant, std::uint64_t seed, const std::string& split) {
  AblationRow r;
  r.variant = variant;
  r.seed = std::to_string(seed);
  r.split = split;
  return r;
}

}  // namespace

std::vector<AblationRow> run_ablations(const AblationPlan& plan, const AblationInputs& in,
                                       const std::function<void(const AblationRow&)>& on_row) {
  plan.validate();
  if (!in.topic || !in.vocab || !in.train || !in.dev || !in.test) throw ContractError("run_ablations: missing inputs");
  const bool any_knowledge = std::any_of(plan.variants.begin(), plan.variants.end(), [&](Variant v) {
    return apply_variant(in.classifier, v).use_knowledge;
  });
  const bool any_bare = std::any_of(plan.variants.begin(), plan.variants.end(), [&](Variant v) {
    return !apply_variant(in.classifier, v).use_knowledge;
  });
  if (any_knowledge && (!in.index || !in.generator)) {
    throw ContractError("run_ablations: a knowledge variant needs an index and a generator");
  }

  auto relation_sets = plan.relation_sets;
  const bool sweep = !relation_sets.empty();
  if (!sweep) relation_sets.push_back(in.knowledge.relations);
  const auto d_u = in.topic->lm().config().d_model, d_z = in.topic->config().d_z;

  // the bare features never touch the knowledge sources
  FeatureSet bare;
  if (any_bare) {
    FeatureExtractor fx(*in.topic, *in.vocab, nullptr, nullptr, in.knowledge);
    bare = extract(fx, in, false);
  }

  std::vector<AblationRow> rows;
  for (const auto& relations : relation_sets) {
    FeatureSet rich;
    if (any_knowledge) {
      auto opts = in.knowledge;
      opts.relations = relations;
      FeatureExtractor fx(*in.topic, *in.vocab, in.index, in.generator, opts);
      rich = extract(fx, in, true);
    }
    for (auto seed : plan.seeds) {
      for (auto v : plan.variants) {
        const auto cfg = apply_variant(in.classifier, v);
        if (sweep && !cfg.use_knowledge && &relations != &relation_sets.front()) continue;  // identical to the first pass
        std::string name(variant_name(v));
        if (sweep && cfg.use_knowledge) name += "/" + std::to_string(relations.size()) + "rel";
        const auto& data = cfg.use_knowledge ? rich : bare;
        const auto start = std::chrono::steady_clock::now();
        auto dev_row = make_row(name, seed, "dev"), test_row = make_row(name, seed, "test");
        try {
          EmotionClassifier model(cfg, in.labels.size(), d_u, d_z, Rng(seed));
          train_classifier(model, data.train, data.dev, in.exclude, Rng(seed).split("train"));
          const auto dev = score_predictions(data.dev, predict_all(model, data.dev), in.labels.size(), in.exclude);
          const auto test = score_predictions(data.test, predict_all(model, data.test), in.labels.size(), in.exclude);
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          for (auto [row, f] : {std::pair{&dev_row, &dev}, std::pair{&test_row, &test}}) {
            row->macro_f1 = f->macro;
            row->micro_f1 = f->micro;
            row->weighted_f1 = f->weighted;
            row->wall_clock_seconds = secs;
          }
        } catch (const std::exception& e) {
          spdlog::error("variant {} seed {} failed: {}", name, seed, e.what());
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          for (auto* row : {&dev_row, &test_row}) {
            row->failed = true;
            row->error = e.what();
            row->macro_f1 = row->micro_f1 = row->weighted_f1 = std::nan("");
            row->wall_clock_seconds = secs;
          }
        }
        for (auto* row : {&dev_row, &test_row}) {
          if (on_row) on_row(*row);
          rows.push_back(*row);
        }
      }
    }
  }
  return rows;
}

std::vector<AblationRow> summarize(const std::vector<AblationRow>& rows) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const AblationRow*>> groups;
  for (const auto& r : rows) {
    if (r.seed == "mean" || r.seed == "std") continue;
    auto key = std::make_pair(r.variant, r.split);
    if (!groups.count(key)) keys.push_back(key);
    auto& g = groups[key];
    if (!r.failed) g.push_back(&r);
  }
  std::vector<AblationRow> out;
  for (const auto& key : keys) {
    const auto& g = groups[key];
    if (g.empty()) continue;
    const double n = static_cast<double>(g.size());
    auto stat = [&](double AblationRow::*field, bool stddev) {
      double mean = 0;
      for (const auto* r : g) mean += r->*field;
      mean /= n;
      if (!stddev) return mean;
      double ss = 0;
      for (const auto* r : g) ss += (r->*field - mean) * (r->*field - mean);
      return std::sqrt(ss / (n - 1));
    };
    for (bool sd : {false, true}) {
      if (sd && g.size() < 2) continue;
      AblationRow r;
      r.variant = key.first;
      r.split = key.second;
      r.seed = sd ? "std" : "mean";
      r.macro_f1 = stat(&AblationRow::macro_f1, sd);
      r.micro_f1 = stat(&AblationRow::micro_f1, sd);
      r.weighted_f1 = stat(&AblationRow::weighted_f1, sd);
      r.wall_clock_seconds = stat(&AblationRow::wall_clock_seconds, sd);
      out.push_back(r);
    }
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,seed,split,macro_f1,micro_f1,weighted_f1,wall_clock_seconds,error\n";
  char buf[256];
  for (const auto& r : rows) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), '"', '\'');
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.3f", r.macro_f1, r.micro_f1, r.weighted_f1, r.wall_clock_seconds);
    out += r.variant + "," + r.seed + "," + r.split + "," + buf + "," + (error.empty() ? "" : "\"" + error + "\"") + "\n";
  }
  return out;
}

std::optional<double> mean_micro(const std::vector<AblationRow>& summary, const std::string& variant,
                                 const std::string& split) {
  for (const auto& r : summary)
    if (r.variant == variant && r.split == split && r.seed == "mean") return r.micro_f1;
  return std::nullopt;
}

AttentionReport attention_report(const EmotionClassifier& model, const DialogueFeatures& features,
                                 std::size_t utterance, const std::vector<Relation>& relations) {
  if (utterance >= features.length()) {
    throw ContractError("attention_report: utterance " + std::to_string(utterance) + " outside a dialogue of " +
                        std::to_string(features.length()));
  }
  if (!model.config().use_knowledge || !features.has_knowledge) {
    throw ContractError("attention_report: the model or the features carry no knowledge");
  }
  if (relations.size() != features.retrieved.rows.size()) {
    throw ContractError("attention_report: relation list does not match the features");
  }
  NoGradGuard guard;
  StepTrace trace;
  model.step_features(features, nullptr, &trace);
  AttentionReport report;
  report.utterance = utterance;
  report.relations = relations;
  switch (model.config().source) {
    case KnowledgeSource::Pointer:
      report.selection = trace.selection.indicator.values()[utterance];
      report.probability = trace.selection.probability.values()[utterance];
      break;
    case KnowledgeSource::Retrieved: report.selection = report.probability = 1; break;
    case KnowledgeSource::Generated: report.selection = report.probability = 0; break;
  }
  const bool retrieved = report.selection == 1.0;
  const auto& src = retrieved ? features.retrieved : features.generated;
  for (std::size_t r = 0; r < relations.size(); ++r) {
    const auto& alpha = trace.fusion.alpha[r][utterance];
    std::vector<AttentionItem> items;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      items.push_back({src.texts[r][utterance * alpha.size() + k], retrieved ? "retrieved" : "generated", alpha[k], k});
    }
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.alpha > b.alpha; });
    report.items.push_back(std::move(items));
  }
  return report;
}

}  // namespace todkat

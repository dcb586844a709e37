#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "../support/gradcheck.hpp"
#include "todkat/classifier/training.hpp"
#include "todkat/data/synthetic.hpp"
#include "todkat/numerics/ops.hpp"

using namespace todkat;

namespace {

constexpr std::size_t kDu = 8, kDz = 4, kK = 2, kLabels = 5;

ClassifierConfig small_config() {
  ClassifierConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_dialogue_length = 12;
  c.max_epochs = 3;
  c.batch_size = 4;
  return c;
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({r, c}, std::move(v));
}

SourceItems random_items(std::size_t n, Rng& rng) {
  SourceItems s;
  for (int r = 0; r < 3; ++r) s.rows.push_back(random_matrix(n * kK, kDu + kDz, rng));
  s.mean_cls = random_matrix(n, kDu, rng);
  return s;
}

DialogueFeatures random_dialogue(std::size_t n, Rng rng) {
  DialogueFeatures f;
  f.id = "d";
  f.u = random_matrix(n, kDu, rng);
  f.z = random_matrix(n, kDz, rng);
  f.retrieved = random_items(n, rng);
  f.generated = random_items(n, rng);
  f.has_knowledge = true;
  for (std::size_t i = 0; i < n; ++i) f.labels.push_back(static_cast<std::size_t>(rng.below(kLabels)));
  return f;
}

/// First m utterances of f, with every per-utterance block cut consistently.
DialogueFeatures prefix(const DialogueFeatures& f, std::size_t m) {
  auto cut = [](const Tensor& t, std::size_t rows) {
    auto v = t.values().subspan(0, rows * t.dim(1));
    return Tensor::from({rows, t.dim(1)}, {v.begin(), v.end()});
  };
  auto cut_items = [&](const SourceItems& s) {
    SourceItems o;
    for (const auto& r : s.rows) o.rows.push_back(cut(r, m * kK));
    o.mean_cls = cut(s.mean_cls, m);
    return o;
  };
  DialogueFeatures p = f;
  p.u = cut(f.u, m);
  p.z = cut(f.z, m);
  p.retrieved = cut_items(f.retrieved);
  p.generated = cut_items(f.generated);
  p.labels.resize(m);
  return p;
}

/// Replaces every row at utterance >= from with fresh noise.
DialogueFeatures perturb_after(const DialogueFeatures& f, std::size_t from, Rng rng) {
  auto scramble = [&](const Tensor& t, std::size_t rows_per_utt) {
    std::vector<double> v(t.values().begin(), t.values().end());
    for (std::size_t i = from * rows_per_utt * t.dim(1); i < v.size(); ++i) v[i] = 10 * rng.normal();
    return Tensor::from(t.shape(), std::move(v));
  };
  DialogueFeatures p = f;
  p.u = scramble(f.u, 1);
  p.z = scramble(f.z, 1);
  for (auto* s : {&p.retrieved, &p.generated}) {
    for (auto& r : s->rows) r = scramble(r, kK);
    s->mean_cls = scramble(s->mean_cls, 1);
  }
  for (std::size_t i = from; i < p.labels.size(); ++i) p.labels[i] = (p.labels[i] + 1) % kLabels;
  return p;
}

bool rows_equal(const Tensor& a, const Tensor& b, std::size_t rows) {
  const auto c = a.dim(1);
  for (std::size_t i = 0; i < rows * c; ++i)
    if (a.values()[i] != b.values()[i]) return false;
  return true;
}

std::span<double> param(EmotionClassifier& m, const std::string& name) {
  for (auto& e : m.params().entries())
    if (e.name == name) return e.tensor.mutable_values();
  throw std::out_of_range(name);
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  long double s = 0;
  for (auto x : v) s += std::exp(static_cast<long double>(x - m));
  return m + static_cast<double>(std::log(s));
}

}  // namespace

TEST(ClassifierConfig, Validation) {
  auto c = small_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), DimensionError);
  c = small_config();
  c.temperature = 0;
  EXPECT_THROW(c.validate(), ContractError);
  EXPECT_EQ(parse_source("generated"), KnowledgeSource::Generated);
  EXPECT_EQ(source_name(KnowledgeSource::Retrieved), "retrieved");
  EXPECT_THROW(parse_source("both"), std::invalid_argument);
}

TEST(Classifier, ShapesAndNormalization) {
  EmotionClassifier m(small_config(), kLabels, kDu, kDz, Rng(1));
  auto f = random_dialogue(4, Rng(2));
  NoGradGuard g;
  auto feats = m.step_features(f, nullptr);
  EXPECT_EQ(feats.shape(), (Shape{4, 2 * kDu + kDz}));
  auto enc = m.encode(feats);
  EXPECT_EQ(enc.shape(), (Shape{4, 16}));
  auto logits = m.decode_step(enc, {});
  EXPECT_EQ(logits.shape(), (Shape{kLabels}));
  auto p = softmax(logits, 0);
  EXPECT_NEAR(std::accumulate(p.values().begin(), p.values().end(), 0.0), 1.0, 1e-12);
  EXPECT_EQ(m.predict(f).size(), 4u);
}

TEST(Classifier, EncoderCausalityIsExact) {
  EmotionClassifier m(small_config(), kLabels, kDu, kDz, Rng(3));
  NoGradGuard g;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng r = Rng(4).split(trial);
    const auto n = 2 + static_cast<std::size_t>(r.below(9));
    const auto cut = 1 + static_cast<std::size_t>(r.below(n - 1));
    auto f = random_dialogue(n, r.split("d"));
    auto p = perturb_after(f, cut, r.split("p"));
    auto ea = m.encode(m.step_features(f, nullptr));
    auto eb = m.encode(m.step_features(p, nullptr));
    EXPECT_TRUE(rows_equal(ea, eb, cut)) << "trial " << trial;
    EXPECT_FALSE(rows_equal(ea, eb, n));
  }
}

TEST(Classifier, DecoderCausalityIsExact) {
  EmotionClassifier m(small_config(), kLabels, kDu, kDz, Rng(5));
  NoGradGuard g;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng r = Rng(6).split(trial);
    const auto n = 2 + static_cast<std::size_t>(r.below(9));
    const auto cut = 1 + static_cast<std::size_t>(r.below(n - 1));
    auto f = random_dialogue(n, r.split("d"));
    auto p = perturb_after(f, cut, r.split("p"));
    auto la = m.decode(m.encode(m.step_features(f, nullptr)), {f.labels.begin(), f.labels.end() - 1});
    auto lb = m.decode(m.encode(m.step_features(p, nullptr)), {p.labels.begin(), p.labels.end() - 1});
    // logits for step i use labels < i, so steps up to cut see identical history
    EXPECT_TRUE(rows_equal(la, lb, cut)) << "trial " << trial;
  }
}

TEST(Classifier, PrefixStablePredictions) {
  EmotionClassifier m(small_config(), kLabels, kDu, kDz, Rng(7));
  auto f = random_dialogue(9, Rng(8));
  const auto full = m.predict(f);
  for (std::size_t n = 1; n <= 9; ++n) {
    auto part = m.predict(prefix(f, n));
    EXPECT_TRUE(std::equal(part.begin(), part.end(), full.begin())) << n;
  }
}

TEST(Classifier, SequenceLogLikelihoodFactorizes) {
  EmotionClassifier m(small_config(), kLabels, kDu, kDz, Rng(9));
  NoGradGuard g;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    auto f = random_dialogue(2 + trial % 8, Rng(10).split(trial));
    const double joint = -m.nll_loss(f, nullptr).item() * static_cast<double>(f.length());
    auto enc = m.encode(m.step_features(f, nullptr));
    double sum = 0;
    std::vector<std::size_t> history;
    for (auto y : f.labels) {
      auto logits = m.decode_step(enc, history);
      sum += logits.values()[y] - log_sum_exp(logits.values());
      history.push_back(y);
    }
    EXPECT_NEAR(joint, sum, 1e-10);
  }
}

TEST(Classifier, UniformLogitsGiveLogK) {
  EmotionClassifier m(small_config(), kLabels, kDu, kDz, Rng(11));
  auto w = param(m, "clf.head.w");
  std::fill(w.begin(), w.end(), 0.0);
  auto f = random_dialogue(5, Rng(12));
  NoGradGuard g;
  EXPECT_NEAR(m.nll_loss(f, nullptr).item(), std::log(static_cast<double>(kLabels)), 1e-12);
}

TEST(Classifier, TwoUtteranceHandExample) {
  // with a zero head matrix the logits are the head bias at every step
  EmotionClassifier m(small_config(), 3, kDu, kDz, Rng(13));
  auto w = param(m, "clf.head.w");
  std::fill(w.begin(), w.end(), 0.0);
  auto b = param(m, "clf.head.b");
  b[0] = 0.5;
  b[1] = -1.0;
  b[2] = 2.0;
  auto f = random_dialogue(2, Rng(14));
  f.labels = {2, 0};
  NoGradGuard g;
  // log(e^0.5 + e^-1 + e^2) = 2.241311296657157
  const double lse = std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(2.0));
  const double expected = ((lse - 2.0) + (lse - 0.5)) / 2;
  EXPECT_NEAR(m.nll_loss(f, nullptr).item(), expected, 1e-10);
  EXPECT_NEAR(lse, 2.241311296657157, 1e-12);
}

TEST(Classifier, ConfidentLogitsDriveLossToZero) {
  EmotionClassifier m(small_config(), 3, kDu, kDz, Rng(15));
  auto w = param(m, "clf.head.w");
  std::fill(w.begin(), w.end(), 0.0);
  auto b = param(m, "clf.head.b");
  b[1] = 60.0;
  auto f = random_dialogue(3, Rng(16));
  f.labels = {1, 1, 1};
  NoGradGuard g;
  EXPECT_LT(m.nll_loss(f, nullptr).item(), 1e-20);
}

TEST(Classifier, ContractErrors) {
  EmotionClassifier m(small_config(), kLabels, kDu, kDz, Rng(17));
  auto f = random_dialogue(3, Rng(18));
  f.labels[1] = kLabels;
  EXPECT_THROW(m.nll_loss(f, nullptr), ContractError);
  auto enc = m.encode(m.step_features(random_dialogue(3, Rng(19)), nullptr));
  EXPECT_THROW(m.decode_step(enc, {0, 7}), ContractError);
  EXPECT_THROW(m.decode_step(enc, {0, 1, 2}), ContractError);  // needs 4 encoder states
  DialogueFeatures empty;
  EXPECT_THROW(m.nll_loss(empty, nullptr), ContractError);
  EXPECT_THROW(m.encode(Tensor::zeros({13, 2 * kDu + kDz})), ContractError);
  auto bare = random_dialogue(2, Rng(20));
  bare.has_knowledge = false;
  EXPECT_THROW(m.step_features(bare, nullptr), ContractError);
}

TEST(Classifier, AblationsIgnoreTheirInputs) {
  auto base = random_dialogue(4, Rng(21));
  auto other = base;
  Rng r(22);
  other.z = random_matrix(4, kDz, r);
  for (auto* s : {&other.retrieved, &other.generated})
    for (auto& rows : s->rows) {
      std::vector<double> v(rows.values().begin(), rows.values().end());
      for (std::size_t i = 0; i < v.size(); ++i)
        if (i % (kDu + kDz) >= kDu) v[i] = r.normal();
      rows = Tensor::from(rows.shape(), std::move(v));
    }
  NoGradGuard g;
  auto c = small_config();
  c.use_topics = false;
  EmotionClassifier no_topics(c, kLabels, kDu, kDz, Rng(23));
  EXPECT_TRUE(rows_equal(no_topics.step_features(base, nullptr), no_topics.step_features(other, nullptr), 4));

  c = small_config();
  c.use_knowledge = false;
  EmotionClassifier no_kb(c, kLabels, kDu, kDz, Rng(23));
  auto bare = base;
  bare.has_knowledge = false;
  bare.retrieved = bare.generated = {};
  auto feats = no_kb.step_features(bare, nullptr);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = kDu + kDz; j < 2 * kDu + kDz; ++j) EXPECT_EQ(feats.values()[i * (2 * kDu + kDz) + j], 0.0);

  // a forced source never looks at the other one
  for (auto src : {KnowledgeSource::Retrieved, KnowledgeSource::Generated}) {
    c = small_config();
    c.source = src;
    EmotionClassifier forced(c, kLabels, kDu, kDz, Rng(24));
    auto swapped = base;
    (src == KnowledgeSource::Retrieved ? swapped.generated : swapped.retrieved) = random_items(4, r);
    EXPECT_TRUE(rows_equal(forced.step_features(base, nullptr), forced.step_features(swapped, nullptr), 4));
  }
}

TEST(Classifier, PointerGateSelectsPerUtterance) {
  EmotionClassifier m(small_config(), kLabels, kDu, kDz, Rng(25));
  auto f = random_dialogue(6, Rng(26));
  StepTrace trace;
  NoGradGuard g;
  m.step_features(f, nullptr, &trace);
  ASSERT_EQ(trace.selection.indicator.size(), 6u);
  for (auto v : trace.selection.indicator.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
  ASSERT_EQ(trace.fusion.alpha.size(), 3u);
  for (const auto& rel : trace.fusion.alpha)
    for (const auto& a : rel) EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-12);
}

TEST(Classifier, LossGradientMatchesFiniteDifferences) {
  auto c = small_config();
  c.d_model = 8;
  c.d_ff = 8;
  EmotionClassifier m(c, 3, kDu, kDz, Rng(27));
  auto f = random_dialogue(3, Rng(28));
  for (auto& y : f.labels) y %= 3;
  // the gate only receives gradient through the straight-through estimator,
  // which finite differences cannot see
  std::vector<Tensor> ps;
  for (const auto& e : m.params().entries())
    if (e.name.rfind("clf.gate", 0) != 0 && e.name.find(".k.b") == std::string::npos) ps.push_back(e.tensor);
  auto err = testsupport::gradcheck_sampled(ps, [&] { return m.nll_loss(f, nullptr); }, 60, 29);
  EXPECT_LT(err, 1e-6);
}

TEST(TrainClassifier, LearnsASeparableTaskAndIsDeterministic) {
  // label is readable from the first feature column
  std::vector<DialogueFeatures> train, dev;
  for (std::uint64_t d = 0; d < 48; ++d) {
    auto f = random_dialogue(3 + d % 4, Rng(30).split(d));
    std::vector<double> u(f.u.values().begin(), f.u.values().end());
    for (std::size_t i = 0; i < f.length(); ++i) {
      f.labels[i] = d % 2 == 0 ? 1 : 3;
      u[i * kDu] = f.labels[i] == 1 ? 2.0 : -2.0;
    }
    f.u = Tensor::from(f.u.shape(), std::move(u));
    (d < 40 ? train : dev).push_back(std::move(f));
  }
  auto run = [&] {
    auto c = small_config();
    c.max_epochs = 6;
    c.learning_rate = 3e-3;
    EmotionClassifier m(c, kLabels, kDu, kDz, Rng(31));
    auto report = train_classifier(m, train, dev, {}, Rng(32));
    return std::make_pair(report, m.params().snapshot());
  };
  auto [a, pa] = run();
  auto [b, pb] = run();
  EXPECT_GE(a.best_dev_micro, 0.9);
  EXPECT_LT(a.epochs.back().dev_loss, a.initial_dev_loss);
  EXPECT_EQ(a.best_dev_micro, b.best_dev_micro);
  EXPECT_EQ(pa, pb);
}

TEST(TrainClassifier, RestoresTheBestEpoch) {
  std::vector<DialogueFeatures> data;
  for (std::uint64_t d = 0; d < 8; ++d) data.push_back(random_dialogue(3, Rng(33).split(d)));
  auto c = small_config();
  c.max_epochs = 5;
  c.patience = 1;
  EmotionClassifier m(c, kLabels, kDu, kDz, Rng(34));
  auto report = train_classifier(m, data, data, {}, Rng(35));
  auto f1 = score_predictions(data, predict_all(m, data), kLabels, {});
  EXPECT_DOUBLE_EQ(f1.micro, report.best_dev_micro);
  EXPECT_DOUBLE_EQ(report.epochs[report.best_epoch].dev.micro, report.best_dev_micro);
  EXPECT_THROW(train_classifier(m, {}, data, {}, Rng(1)), ContractError);
}

TEST(ScorePredictions, PerfectPredictionsScoreOne) {
  std::vector<DialogueFeatures> data{random_dialogue(4, Rng(36)), random_dialogue(2, Rng(37))};
  std::vector<std::vector<std::size_t>> pred{data[0].labels, data[1].labels};
  auto f = score_predictions(data, pred, kLabels, {});
  EXPECT_EQ(f.micro, 1.0);
  pred[1].pop_back();
  EXPECT_THROW(score_predictions(data, pred, kLabels, {}), ContractError);
}

#include <gtest/gtest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "todkat/numerics/ops.hpp"
#include "todkat/topicvae/topic_model.hpp"

using namespace todkat;

namespace {

const std::vector<std::string> kTexts = {
    "the soup was delicious", "we ate noodles and soup", "dinner tasted great", "my boss yelled at me",
    "the meeting ran late again", "my boss wants the report", "i love this pizza", "the office is noisy"};

struct Fixture {
  Vocab vocab = Vocab::build(kTexts);
  LMConfig lm;
  TopicModelConfig topic;
  Fixture() {
    lm.d_model = 16;
    lm.n_heads = 2;
    lm.max_tokens = 8;
    lm.vocab_size = vocab.size();
    lm.d_ff = 24;
    topic.d_z = 4;
    topic.mlp_hidden = 8;
    topic.transition_heads = 2;
    topic.learning_rate = 3e-3;
  }
  TokenIds ids(const std::string& s) const { return vocab.tokenize(s, lm.max_tokens); }
  std::vector<DialogueTokens> corpus(std::size_t begin, std::size_t end) const {
    std::vector<DialogueTokens> out;
    for (std::size_t d = begin; d < end; ++d) {
      DialogueTokens dlg;
      for (std::size_t u = 0; u < 3; ++u) dlg.push_back(ids(kTexts[(d * 3 + u * (d % 2 ? 1 : 3)) % kTexts.size()]));
      out.push_back(dlg);
    }
    return out;
  }
};

GaussianParams gaussian(std::vector<double> mean, std::vector<double> logvar) {
  return {Tensor::vector(std::move(mean)), Tensor::vector(std::move(logvar))};
}

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void zero_params_except_output_bias(ParameterStore& store) {
  for (auto& e : store.entries()) {
    if (e.name.find(".out.b") != std::string::npos) continue;
    for (auto& v : e.tensor.mutable_values()) v = 0.0;
  }
}

}  // namespace

TEST(KlGaussian, ClosedFormValues) {
  EXPECT_EQ(kl_gaussian(gaussian({0.3, -1.2}, {0.5, -2.0}), gaussian({0.3, -1.2}, {0.5, -2.0})).item(), 0.0);
  EXPECT_NEAR(kl_gaussian(gaussian({1.0}, {0.0}), gaussian({0.0}, {0.0})).item(), 0.5, 1e-10);
  // variance e against the standard normal: (e - 1 - log e) / 2
  EXPECT_NEAR(kl_gaussian(gaussian({0.0}, {1.0}), gaussian({0.0}, {0.0})).item(), 0.359140914229522, 1e-10);
  EXPECT_THROW(kl_gaussian(gaussian({0.0}, {0.0}), gaussian({0.0, 1.0}, {0.0, 0.0})), DimensionError);
}

TEST(KlGaussian, NonNegativeAndZeroOnSelf) {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    auto q = gaussian(rng.normal_vector(5), rng.normal_vector(5));
    auto p = gaussian(rng.normal_vector(5), rng.normal_vector(5));
    EXPECT_GE(kl_gaussian(q, p).item(), 0.0);
    EXPECT_EQ(kl_gaussian(q, q).item(), 0.0);
  }
}

TEST(TopicModel, PosteriorAndPriorShapes) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(1));
  auto x = m.lm().encode_lower(f.ids("the soup was delicious"));
  auto q = m.posterior_params(x, m.initial_state());
  auto p = m.prior_params(m.initial_state());
  EXPECT_EQ(q.mean.shape(), Shape{4});
  EXPECT_EQ(q.log_variance.shape(), Shape{4});
  EXPECT_EQ(p.mean.shape(), Shape{4});
  EXPECT_THROW(m.prior_params(Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(m.posterior_params(x, Tensor::zeros({5})), DimensionError);
  const auto h0 = m.initial_state();
  for (double v : h0.values()) EXPECT_EQ(v, 0.0);
}

TEST(TopicModel, ZeroWeightsGiveBias) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(1));
  zero_params_except_output_bias(m.params());
  for (auto& e : m.params().entries()) {
    if (e.name.find(".out.b") == std::string::npos) continue;
    for (std::size_t i = 0; i < 4; ++i) e.tensor.mutable_values()[i] = 0.1 * (i + 1);
  }
  auto x = m.lm().encode_lower(f.ids("my boss yelled at me"));
  Rng rng(3);
  auto h = Tensor::vector(rng.normal_vector(16));
  auto q = m.posterior_params(x, h);
  auto p = m.prior_params(h);
  const std::vector<double> bias{0.1, 0.2, 0.30000000000000004, 0.4};
  EXPECT_EQ(values_of(q.mean), bias);
  EXPECT_EQ(values_of(q.log_variance), bias);
  EXPECT_EQ(values_of(p.mean), bias);
  EXPECT_EQ(values_of(p.log_variance), bias);
}

TEST(TopicModel, LogVarianceClamped) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(1));
  zero_params_except_output_bias(m.params());
  for (auto& e : m.params().entries()) {
    if (e.name == "topic.prior_logvar.out.b") e.tensor.mutable_values()[0] = 50.0;
    if (e.name == "topic.prior_logvar.out.b") e.tensor.mutable_values()[1] = -50.0;
  }
  auto p = m.prior_params(m.initial_state());
  EXPECT_EQ(p.log_variance.at(0), 8.0);
  EXPECT_EQ(p.log_variance.at(1), -8.0);
}

TEST(TopicModel, KlGradientMatchesFiniteDifferences) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(2));
  auto x = m.lm().encode_lower(f.ids("the meeting ran late again"));
  Rng rng(4);
  auto h = Tensor::vector(rng.normal_vector(16));
  auto loss = [&] { return kl_gaussian(m.posterior_params(x, h), m.prior_params(h)); };
  EXPECT_LT(testsupport::gradcheck(m.params().tensors(), loss).max_relative_error, 1e-4);
}

TEST(Transition, SingleKeyReturnsValueProjection) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(5));
  auto x = m.lm().encode_lower(f.ids(""));
  ASSERT_EQ(x.length(), 1u);
  std::vector<Tensor> w;
  auto h = m.transition(Tensor::vector({0.3, -0.2, 0.9, 0.1}), x, &w);
  // weight 1 on the only key: out(value(x)) for that row
  auto& ps = m.params();
  auto v = add(matmul(x.states, ps.get("topic.transition.v.w")), ps.get("topic.transition.v.b"));
  auto expect = add(matmul(v, ps.get("topic.transition.o.w")), ps.get("topic.transition.o.b"));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(h.at(i), expect.at(0, i), 1e-14);
  for (auto& a : w) EXPECT_EQ(a.at(0, 0), 1.0);
}

TEST(Transition, WeightsNormalizeAndDuplicateMaskedKeyIsInert) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(6));
  auto x = m.lm().encode_lower(f.ids("we ate noodles and soup"));
  const auto z = Tensor::vector({0.5, 0.4, -0.3, 0.2});
  std::vector<Tensor> w;
  auto h = m.transition(z, x, &w);
  for (auto& a : w) {
    double s = 0;
    for (double v : a.values()) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  auto dup = concat({slice(x.states, 0, 3), slice(x.states, 2, 3), slice(x.states, 3, x.length())}, 0);
  std::vector<std::uint8_t> blocked(x.length() + 1, 0);
  blocked[3] = 1;
  auto h2 = m.transition(z, dup, blocked);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(h.at(i), h2.at(i), 1e-10);
  EXPECT_THROW(m.transition(z, x.states, std::vector<std::uint8_t>(x.length(), 1)), ContractError);
}

TEST(ElboStep, BoundaryCases) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(7));
  const auto ids = f.ids("i love this pizza");
  auto h0 = m.initial_state();
  auto s0 = m.elbo_step(ids, h0, std::vector<double>{0.5, -1.0, 0.2, 0.3}, 0.0, false);
  EXPECT_EQ(s0.loss.item(), s0.reconstruction.item());
  EXPECT_FALSE(s0.h.defined());
  auto s1 = m.elbo_step(ids, h0, std::nullopt, 0.7, true);
  EXPECT_EQ(values_of(s1.z), values_of(s1.posterior.mean));
  EXPECT_TRUE(s1.h.defined());
  // single utterance: one reconstruction plus one KL against the h_0 prior
  auto total = m.dialogue_loss({ids}, nullptr, 1.0);
  auto x = m.lm().encode_lower(ids);
  auto q = m.posterior_params(x, h0);
  auto expect = m.lm().reconstruct(q.mean, ids).loss.item() + kl_gaussian(q, m.prior_params(h0)).item();
  EXPECT_NEAR(total.item(), expect, 1e-12);
}

TEST(ElboStep, DialogueLossIsSumOfSteps) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(8));
  auto dlg = f.corpus(0, 1)[0];
  Rng a(9), b(9);
  auto total = m.dialogue_loss(dlg, &a, 0.6).item();
  double manual = 0;
  auto h = m.initial_state();
  for (std::size_t n = 0; n < dlg.size(); ++n) {
    auto s = m.elbo_step(dlg[n], h, b.normal_vector(4), 0.6, true);
    manual += s.reconstruction.item() + 0.6 * s.kl.item();
    h = s.h;
  }
  EXPECT_NEAR(total, manual, 1e-10 * std::abs(manual));
}

TEST(ElboStep, ReparameterizationGradient) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(10));
  const auto ids = f.ids("dinner tasted great");
  auto mu = Tensor::parameter({4}, {0.2, -0.4, 0.1, 0.6});
  auto lv = Tensor::parameter({4}, {-0.5, 0.3, 0.0, -1.0});
  const auto eps = Tensor::vector({0.7, -1.1, 0.4, 0.9});
  const GaussianParams prior = gaussian({0.1, 0.0, -0.2, 0.3}, {0.2, -0.1, 0.0, 0.5});
  auto loss = [&] {
    auto z = gaussian_sample(mu, lv, eps);
    return add(m.lm().reconstruct(z, ids).loss, kl_gaussian({mu, lv}, prior));
  };
  EXPECT_LT(testsupport::gradcheck({mu, lv}, loss).max_relative_error, 1e-4);
}

TEST(ExtractTopic, DeterministicMean) {
  Fixture f;
  TopicModel m(f.lm, f.topic, Rng(11));
  auto dlg = f.corpus(2, 3)[0];
  auto a = m.extract_dialogue_topics(dlg);
  auto b = m.extract_dialogue_topics(dlg);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), dlg.size());
  EXPECT_EQ(a[0].size(), 4u);
}

TEST(TrainTopicModel, FrozenRunLeavesElboUnchanged) {
  Fixture f;
  f.topic.freeze = true;
  TopicModel m(f.lm, f.topic, Rng(12));
  auto report = train_topic_model(m, f.corpus(0, 6), f.corpus(6, 8), Rng(13));
  ASSERT_EQ(report.epochs.size(), 3u);
  for (auto& e : report.epochs) EXPECT_EQ(e.heldout_loss, report.initial_heldout_loss);
}

TEST(TrainTopicModel, ReducesHeldoutReconstructionAndIsReproducible) {
  Fixture f;
  auto run = [&] {
    TopicModel m(f.lm, f.topic, Rng(14));
    return train_topic_model(m, f.corpus(0, 12), f.corpus(12, 16), Rng(15));
  };
  auto r1 = run();
  auto r2 = run();
  EXPECT_LT(r1.epochs.back().heldout_reconstruction, r1.initial_heldout_reconstruction);
  EXPECT_EQ(r1.epochs.back().heldout_loss, r2.epochs.back().heldout_loss);
  EXPECT_EQ(r1.epochs.back().train_loss, r2.epochs.back().train_loss);
  TopicModel m(f.lm, f.topic, Rng(14));
  EXPECT_THROW(train_topic_model(m, {}, {}, Rng(1)), ContractError);
}

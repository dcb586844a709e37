#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "../support/gradcheck.hpp"
#include "todkat/lm/model.hpp"
#include "todkat/numerics/ops.hpp"

using namespace todkat;

namespace {

const std::vector<std::string> kTexts = {"I passed the exam", "you're a freak!", "my boss yelled at me today",
                                         "the soup was delicious", "what a lovely day , isn't it ?"};

Vocab small_vocab() { return Vocab::build(kTexts); }

LMConfig small_config(const Vocab& v) {
  LMConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.max_tokens = 10;
  c.vocab_size = v.size();
  c.latent_dim = 4;
  c.d_ff = 24;
  return c;
}

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Tokenize, EmptyStringIsClsThenPad) {
  auto v = small_vocab();
  auto ids = v.tokenize("", 6);
  EXPECT_EQ(ids, (TokenIds{Vocab::kCls, 0, 0, 0, 0, 0}));
}

TEST(Tokenize, DirectLookup) {
  auto v = small_vocab();
  auto ids = v.tokenize("I passed the exam", 8);
  EXPECT_EQ(ids, (TokenIds{Vocab::kCls, v.id("i"), v.id("passed"), v.id("the"), v.id("exam"), 0, 0, 0}));
  EXPECT_NE(v.id("exam"), Vocab::kUnk);
}

TEST(Tokenize, UnknownWordAndPunctuation) {
  auto v = small_vocab();
  auto ids = v.tokenize("the zyzzyva!", 6);
  EXPECT_EQ(ids[2], Vocab::kUnk);
  EXPECT_EQ(ids[3], v.id("!"));
  EXPECT_EQ(split_words("You're a FREAK!"), (std::vector<std::string>{"you're", "a", "freak", "!"}));
}

TEST(Tokenize, Truncation) {
  auto v = small_vocab();
  auto ids = v.tokenize("my boss yelled at me today", 4);
  EXPECT_EQ(ids, (TokenIds{Vocab::kCls, v.id("my"), v.id("boss"), v.id("yelled")}));
  EXPECT_THROW(v.tokenize("x", 1), ContractError);
}

TEST(Vocab, ReservedIdsAndFileRoundTrip) {
  auto v = Vocab::build(kTexts, {"<xIntent>"});
  EXPECT_EQ(v.token(Vocab::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocab::kNull), "<null>");
  EXPECT_EQ(v.id("<xIntent>"), 6);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.id(v.token(static_cast<std::int64_t>(i))), static_cast<std::int64_t>(i));
  auto path = std::filesystem::temp_directory_path() / "todkat_vocab_test.txt";
  v.save(path);
  EXPECT_EQ(Vocab::load(path), v);
  std::filesystem::remove(path);
}

TEST(EncodeLower, ShapesAndPooling) {
  auto v = small_vocab();
  LanguageModel lm(small_config(v), Rng(1));
  auto enc = lm.encode_lower(v.tokenize("I passed the exam", 10));
  EXPECT_EQ(enc.token_states().shape(), (Shape{10, 16}));
  EXPECT_EQ(enc.length(), 5u);
  EXPECT_EQ(values_of(enc.pooled), values_of(row(enc.states, 0)));
  for (std::size_t i = 5; i < 10; ++i) EXPECT_EQ(enc.pad_mask[i], 1);
  auto full = enc.token_states();
  for (std::size_t i = 5; i < 10; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(full.at(i, j), 0.0);
}

TEST(EncodeLower, PadContentNeverMatters) {
  auto v = small_vocab();
  LanguageModel lm(small_config(v), Rng(2));
  const auto ids = v.tokenize("you're a freak!", 10);
  auto before = lm.encode_lower(ids);
  auto rec_before = lm.reconstruct(Tensor::vector({0.1, -0.2, 0.3, 0.4}), ids);
  // Scramble the PAD embedding row: nothing downstream may move.
  auto& embed = lm.params().entries()[0].tensor;
  ASSERT_EQ(lm.params().entries()[0].name, "lm.embed");
  for (std::size_t j = 0; j < 16; ++j) embed.mutable_values()[j] = 100.0 + j;
  auto after = lm.encode_lower(ids);
  auto rec_after = lm.reconstruct(Tensor::vector({0.1, -0.2, 0.3, 0.4}), ids);
  EXPECT_EQ(values_of(before.pooled), values_of(after.pooled));
  EXPECT_EQ(values_of(before.states), values_of(after.states));
  EXPECT_EQ(rec_before.loss.item(), rec_after.loss.item());
}

TEST(EncodeLower, DistinctUtterancesDistinctPooling) {
  auto v = small_vocab();
  LanguageModel lm(small_config(v), Rng(3));
  auto a = lm.encode_lower(v.tokenize(kTexts[0], 10)).pooled;
  auto b = lm.encode_lower(v.tokenize(kTexts[2], 10)).pooled;
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
  EXPECT_GT(std::sqrt(d2), 1e-6);
  EXPECT_EQ(values_of(a), values_of(lm.encode_lower(v.tokenize(kTexts[0], 10)).pooled));
}

TEST(EncodeLower, RejectsBadIds) {
  auto v = small_vocab();
  LanguageModel lm(small_config(v), Rng(3));
  auto ids = v.tokenize(kTexts[0], 10);
  ids[1] = static_cast<std::int64_t>(v.size());
  EXPECT_THROW(lm.encode_lower(ids), ContractError);
  EXPECT_THROW(lm.encode_lower(v.tokenize(kTexts[0], 9)), ContractError);
}

TEST(DecodeUpper, LossFinitePositiveAndDependsOnZ) {
  auto v = small_vocab();
  LanguageModel lm(small_config(v), Rng(4));
  const auto ids = v.tokenize("my boss yelled at me today", 10);
  auto z = Tensor::parameter({4}, {0.5, -0.5, 0.25, 1.0});
  auto rec = lm.reconstruct(z, ids);
  EXPECT_TRUE(std::isfinite(rec.loss.item()));
  EXPECT_GT(rec.loss.item(), 0.0);
  EXPECT_EQ(rec.targets.back(), Vocab::kEos);
  double probe = 0;
  for (std::size_t i = 0; i < 4; ++i) probe += std::abs(testsupport::numeric_partial(z, i, [&] { return lm.reconstruct(z, ids).loss; }));
  EXPECT_GT(probe, 1e-8);
  EXPECT_NE(lm.reconstruct(Tensor::zeros({4}), ids).loss.item(), rec.loss.item());
  EXPECT_THROW(lm.reconstruct(Tensor::zeros({5}), ids), DimensionError);
}

TEST(DecodeUpper, CausalInTargets) {
  auto v = small_vocab();
  LanguageModel lm(small_config(v), Rng(5));
  const auto z = Tensor::vector({0.3, 0.1, -0.7, 0.2});
  auto base = v.tokenize("what a lovely day , isn't it ?", 10);
  auto ref = lm.reconstruct(z, base).logits;
  const std::size_t n = unpadded_length(base);
  for (std::size_t t = 1; t < n; ++t) {
    auto ids = base;
    for (std::size_t j = t + 1; j < n; ++j) ids[j] = v.id("freak");
    auto logits = lm.reconstruct(z, ids).logits;
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t c = 0; c < v.size(); ++c) ASSERT_EQ(logits.at(r, c), ref.at(r, c)) << "t=" << t << " r=" << r;
  }
}

TEST(LanguageModelGrad, SpotChecksOnRandomParameters) {
  auto v = small_vocab();
  LanguageModel lm(small_config(v), Rng(6));
  const auto ids = v.tokenize("you're a freak!", 10);
  const auto z = Tensor::vector({0.2, -0.1, 0.4, 0.0});
  auto loss = [&] { return lm.reconstruct(z, ids).loss; };
  EXPECT_LT(testsupport::gradcheck_sampled(lm.params().tensors(), loss, 5, 17), 1e-4);
  EXPECT_LT(testsupport::gradcheck_sampled(lm.params().tensors(), loss, 5, 18), 1e-4);
}

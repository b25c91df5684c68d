// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "avoid/toy_lm.hpp"
#include "test_support.hpp"

using namespace avoid;
using avoid::testing::random_tokens;
using avoid::testing::toy64_spec;

namespace {

std::size_t argmax_of(const std::vector<float>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<ForwardOutput> run_cached(const LanguageModel& m, std::span<const TokenId> tokens) {
  auto cache = m.new_cache();
  std::vector<ForwardOutput> out;
  for (TokenId t : tokens) out.push_back(m.forward_step(t, cache));
  return out;
}

}  // namespace

TEST(ModelSpec, Validation) {
  auto s = toy64_spec();
  EXPECT_NO_THROW(s.validate());
  s.model_dim = 30;
  EXPECT_THROW(s.validate(), ConfigError);
  s = toy64_spec();
  s.vocab_size = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = toy64_spec();
  s.num_layers = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = toy64_spec();
  s.ffn_dim = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(ToyTransformer, SameSpecSameWeightsAndLogits) {
  const auto a = ToyTransformer::init(toy64_spec());
  const auto b = ToyTransformer::init(toy64_spec());
  EXPECT_EQ(a.weights().tok_emb, b.weights().tok_emb);
  EXPECT_EQ(a.weights().layers[1].w_ff2, b.weights().layers[1].w_ff2);
  EXPECT_EQ(a.weights().unembed, b.weights().unembed);
  auto ca = a.new_cache(), cb = b.new_cache();
  EXPECT_EQ(a.forward_step(5, ca).logits, b.forward_step(5, cb).logits);

  auto other = toy64_spec();
  other.seed = 8;
  EXPECT_NE(ToyTransformer::init(other).weights().tok_emb, a.weights().tok_emb);
}

TEST(ToyTransformer, OutputShapes) {
  const auto m = ToyTransformer::init(toy64_spec());
  auto cache = m.new_cache();
  const auto out = m.forward_step(3, cache);
  EXPECT_EQ(out.logits.size(), 64u);
  EXPECT_EQ(out.last_hidden.size(), 32u);
  ASSERT_EQ(out.ffn_activations.size(), 2u);
  EXPECT_EQ(out.ffn_activations[0].size(), 64u);
  EXPECT_EQ(cache.prefix_length(), 1u);
  m.forward_step(4, cache);
  EXPECT_EQ(cache.prefix_length(), 2u);
}

TEST(ToyTransformer, RejectsOutOfRangeTokens) {
  const auto m = ToyTransformer::init(toy64_spec());
  auto cache = m.new_cache();
  EXPECT_THROW(m.forward_step(64, cache), ConfigError);
  EXPECT_THROW(m.forward_step(-1, cache), ConfigError);
  EXPECT_EQ(cache.prefix_length(), 0u);
}

TEST(ToyTransformer, ContextOverflow) {
  const auto m = ToyTransformer::init(toy64_spec(4));
  auto cache = m.new_cache();
  for (TokenId t : {1, 2, 3, 4}) m.forward_step(t, cache);
  EXPECT_THROW(m.forward_step(5, cache), ContextOverflowError);
  const std::vector<TokenId> five{1, 2, 3, 4, 5};
  EXPECT_THROW(m.forward_sequence(five), ContextOverflowError);
}

TEST(ToyTransformer, CachedEqualsRecomputedExactly) {
  const auto m = ToyTransformer::init(toy64_spec());
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto tokens = random_tokens(gen, 1 + gen() % 40, 64);
    const auto inc = run_cached(m, tokens);
    const auto batch = m.forward_sequence(tokens);
    ASSERT_EQ(inc.size(), batch.size());
    for (std::size_t i = 0; i < inc.size(); ++i) {
      EXPECT_EQ(inc[i].logits, batch[i].logits) << "position " << i;
      EXPECT_EQ(inc[i].last_hidden, batch[i].last_hidden);
      EXPECT_EQ(inc[i].ffn_activations, batch[i].ffn_activations);
      // Also recompute the prefix alone from scratch.
      if (i % 7 == 0) {
        const auto prefix = m.forward_sequence(std::span(tokens).first(i + 1));
        EXPECT_EQ(prefix.back().logits, inc[i].logits);
      }
    }
  }
}

TEST(ToyTransformer, SoftmaxSumsToOne) {
  const auto m = ToyTransformer::init(toy64_spec());
  std::mt19937_64 gen(2);
  const auto tokens = random_tokens(gen, 50, 64);
  for (const auto& out : run_cached(m, tokens)) {
    for (double temp : {0.5, 1.0, 2.0}) {
      const auto p = softmax(out.logits, temp);
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
    }
  }
  EXPECT_THROW(softmax(std::vector<float>{1.0f}, 0.0), ConfigError);
}

TEST(ToyTransformer, Causality) {
  const auto m = ToyTransformer::init(toy64_spec());
  const std::vector<TokenId> a{1, 2, 3, 4, 5, 6}, b{1, 2, 3, 40, 50, 60};
  const auto oa = m.forward_sequence(a), ob = m.forward_sequence(b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(oa[i].logits, ob[i].logits);
  EXPECT_NE(oa[3].logits, ob[3].logits);
}

// Argmax after prompt [3, 1, 4] on the seed-7 toy model, computed once from a
// non-cached forward pass and frozen in the fixture.
TEST(ToyTransformer, GoldenArgmax) {
  std::ifstream in(std::string(AVOID_TEST_FIXTURES) + "/golden_argmax.json");
  ASSERT_TRUE(in) << "missing golden fixture";
  const auto golden = nlohmann::json::parse(in);
  const auto m = ToyTransformer::init(toy64_spec());
  const std::vector<TokenId> prompt = golden.at("prompt").get<std::vector<TokenId>>();
  ASSERT_EQ(prompt, (std::vector<TokenId>{3, 1, 4}));
  const auto batch = m.forward_sequence(prompt);
  const auto inc = run_cached(m, prompt);
  EXPECT_EQ(argmax_of(batch.back().logits), golden.at("argmax").get<std::size_t>());
  EXPECT_EQ(argmax_of(inc.back().logits), golden.at("argmax").get<std::size_t>());
}

TEST(HiddenStates, ShapeAndPrefixProperty) {
  const auto m = ToyTransformer::init(toy64_spec());
  const std::vector<TokenId> five{9, 8, 7, 6, 5};
  const auto h5 = m.hidden_states_of(five);
  ASSERT_EQ(h5.size(), 5u);
  for (const auto& h : h5) EXPECT_EQ(h.size(), 32u);
  const auto h3 = m.hidden_states_of(std::span(five).first(3));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(h3[i], h5[i]);
  EXPECT_THROW(m.hidden_states_of(std::vector<TokenId>{}), ConfigError);
}

TEST(HiddenStates, MatchIncrementalLastHidden) {
  const auto m = ToyTransformer::init(toy64_spec());
  std::mt19937_64 gen(4);
  const auto tokens = random_tokens(gen, 30, 64);
  const auto batch = m.hidden_states_of(tokens);
  const auto inc = run_cached(m, tokens);
  for (std::size_t i = 0; i < tokens.size(); ++i) EXPECT_EQ(batch[i], inc[i].last_hidden);
}

TEST(KvCache, TruncateRestoresPrefix) {
  const auto m = ToyTransformer::init(toy64_spec());
  auto cache = m.new_cache();
  for (TokenId t : {1, 2, 3}) m.forward_step(t, cache);
  const auto snapshot = cache.layers;
  m.forward_step(9, cache);
  cache.truncate(3);
  EXPECT_EQ(cache.prefix_length(), 3u);
  EXPECT_EQ(cache.layers[0].keys, snapshot[0].keys);
  EXPECT_EQ(cache.layers[1].values, snapshot[1].values);
}

TEST(Weights, SaveLoadRoundTrip) {
  const auto dir = avoid::testing::scratch_dir("weights");
  const auto spec = toy64_spec(128);
  const auto m = ToyTransformer::init(spec);
  save_weights(dir / "w.json", spec, m.weights());

  auto from_file = spec;
  from_file.seed = 999;  // ignored when a weights file is given
  from_file.weights_path = dir / "w.json";
  const auto loaded = ToyTransformer::init(from_file);
  EXPECT_EQ(loaded.weights().tok_emb, m.weights().tok_emb);
  EXPECT_EQ(loaded.weights().layers[0].wq, m.weights().layers[0].wq);
  const std::vector<TokenId> p{3, 1, 4};
  EXPECT_EQ(loaded.forward_sequence(p).back().logits, m.forward_sequence(p).back().logits);
  std::filesystem::remove_all(dir);
}

TEST(Weights, MismatchedHeaderIsRejected) {
  const auto dir = avoid::testing::scratch_dir("weights_mismatch");
  const auto spec = toy64_spec(128);
  save_weights(dir / "w.json", spec, ToyWeights::generate(spec));
  auto wrong = spec;
  wrong.vocab_size = 128;
  wrong.weights_path = dir / "w.json";
  EXPECT_THROW(ToyTransformer::init(wrong), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Weights, MalformedFileIsRejected) {
  const auto dir = avoid::testing::scratch_dir("weights_bad");
  std::ofstream(dir / "bad.json") << "{\"header\": {";
  auto spec = toy64_spec(128);
  spec.weights_path = dir / "bad.json";
  EXPECT_THROW(ToyTransformer::init(spec), ParseError);

  // Valid JSON, short tensor.
  auto j = nlohmann::json::parse(R"({"header": {"vocab_size": 64, "model_dim": 32, "num_layers": 2,
      "num_heads": 4, "ffn_dim": 64, "max_context": 128}, "tensors": {"tok_emb": [1.0]}})");
  std::ofstream(dir / "short.json") << j.dump();
  spec.weights_path = dir / "short.json";
  EXPECT_ANY_THROW(ToyTransformer::init(spec));
  std::filesystem::remove_all(dir);
}

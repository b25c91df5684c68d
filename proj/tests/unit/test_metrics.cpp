// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "avoid/embedding.hpp"
#include "avoid/metrics.hpp"

using namespace avoid;
using namespace avoid::metrics;

namespace {

Branch br(std::string text, std::vector<TokenId> tokens = {}) { return {std::move(text), std::move(tokens)}; }

const std::vector<std::string> kCorpus = {
    "the old robot walked into the quiet city .",
    "a girl found a letter in the garden",
    "the dragon never slept , it waited for the morning",
    "rain fell on the tower and the river rose again",
    "the robot remembered the rain",
};

}  // namespace

TEST(Bleu, HandValues) {
  EXPECT_NEAR(bleu("a b c d", "a b c d"), 1.0, 1e-12);
  EXPECT_NEAR(bleu("a b c d", "a b c d e"), std::exp(-0.25), 1e-6);
  // exp(log(eps)) may round one ulp above eps
  EXPECT_LE(bleu("a b c d", "e f g h"), kBleuSmoothing * (1.0 + 1e-12));
  // two-word identical texts use orders 1..2 only
  EXPECT_NEAR(bleu("hello world", "hello world"), 1.0, 1e-12);
  EXPECT_THROW(bleu("", "a"), ConfigError);
  EXPECT_THROW(bleu("a", "   "), ConfigError);
}

// Independent re-derivation of the clipped-precision formula on a case with
// partial overlap at every order.
TEST(Bleu, PartialOverlapOracle) {
  // cand: a b a b c (5), ref: a b c a b (5)
  // 1-grams: a2 b2 c1 vs ref a2 b2 c1 -> 5/5
  // 2-grams: ab ba ab bc -> ref ab bc ca ab: ab min(2,2)=2, ba 0, bc 1 -> 3/4
  // 3-grams: aba bab abc -> ref abc bca cab: abc 1 -> 1/3
  // 4-grams: abab babc -> ref abca bcab: 0 -> smoothed
  const double expected = std::exp((std::log(1.0) + std::log(0.75) + std::log(1.0 / 3.0) + std::log(1e-9)) / 4.0);
  EXPECT_NEAR(bleu("a b a b c", "a b c a b"), expected, 1e-15);
}

TEST(RougeL, HandValues) {
  EXPECT_NEAR(rouge_l_f1("a c", "a b c"), 0.8, 1e-9);
  EXPECT_EQ(rouge_l_f1("x y z", "x y z"), 1.0);
  EXPECT_EQ(rouge_l_f1("x y", "p q"), 0.0);
  EXPECT_THROW(rouge_l_f1("a", ""), ConfigError);
}

TEST(Meteor, HandValues) {
  EXPECT_NEAR(meteor_simple("a b", "b a"), 0.5, 1e-9);
  EXPECT_EQ(meteor_simple("a b", "c d"), 0.0);
  const std::string eight = "one two three four five six seven eight";
  EXPECT_NEAR(meteor_simple(eight, eight), 1.0 - 0.5 / 512.0, 1e-12);
  EXPECT_GE(meteor_simple(eight, eight), 0.99);
}

TEST(Meteor, PartialMatchOracle) {
  // cand "a b c x" vs ref "a b y c": m=3, P=3/4, R=3/4, Fmean = 10PR/(R+9P) = 0.75
  // aligned ref positions 0,1,3 -> chunks {a b}, {c} = 2, penalty 0.5*(2/3)^3
  const double expected = 0.75 * (1.0 - 0.5 * std::pow(2.0 / 3.0, 3));
  EXPECT_NEAR(meteor_simple("a b c x", "a b y c"), expected, 1e-12);
}

TEST(Metrics, IdentityIsMaximal) {
  for (const auto& x : kCorpus) {
    for (const auto& y : kCorpus) {
      EXPECT_GE(bleu(x, x), bleu(x, y));
      EXPECT_GE(rouge_l_f1(x, x), rouge_l_f1(x, y));
      EXPECT_GE(meteor_simple(x, x), meteor_simple(x, y));
      for (double v : {bleu(x, y), rouge_l_f1(x, y), meteor_simple(x, y)}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(SentSim, IdentityOrthogonalitySymmetry) {
  const ToyEmbedder e(3, {1, 0, 0, 0, 1, 0, 1, 1, 0});
  const std::vector<TokenId> a{0, 0}, b{1}, c{2, 0};
  EXPECT_NEAR(sent_sim(a, a, e), 1.0, 1e-12);
  EXPECT_NEAR(sent_sim(a, b, e), 0.0, 1e-12);
  EXPECT_EQ(sent_sim(a, c, e), sent_sim(c, a, e));
}

TEST(MetricNames, ParseRoundTrip) {
  for (auto m : all_metrics()) EXPECT_EQ(parse_metric(metric_name(m)), m);
  EXPECT_THROW(parse_metric("cider"), ConfigError);
}

TEST(Report, IdenticalBranchesScoreOne) {
  const auto e = ToyEmbedder::seeded(16, 8, 7);
  std::vector<PromptBranches> prompts{{"p", {br("the cat sat", {1, 2, 3}), br("the cat sat", {1, 2, 3}),
                                             br("the cat sat", {1, 2, 3})}}};
  const auto r = report(prompts, all_metrics(), &e);
  // one chunk still pays the fragmentation penalty: 1 - 0.5 * (1/3)^3
  for (auto m : all_metrics()) {
    const double want = m == Metric::kMeteor ? 1.0 - 0.5 / 27.0 : 1.0;
    EXPECT_NEAR(r.corpus.at(m), want, 1e-12) << metric_name(m);
  }
  const auto j = r.to_json();
  EXPECT_NEAR(j["corpus"]["rouge_l"].get<double>(), 100.0, 1e-9);
  EXPECT_NEAR(j["per_prompt"]["p"]["sent_sim"].get<double>(), 100.0, 1e-9);
}

TEST(Report, RejectsSingleBranch) {
  std::vector<PromptBranches> prompts{{"p", {br("only one")}}};
  try {
    report(prompts, std::vector<Metric>{Metric::kBleu});
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("fewer than 2 branches"), std::string::npos);
  }
}

// Two prompts, hand-computed. ROUGE-L:
//   p1: "a b" vs "a c": LCS 1, P=R=1/2 -> F1 0.5 (symmetric) -> mean 0.5
//   p2: "x y z" / "x y z" / "q": pairs (1,2)=1, (1,3)=0, (2,3)=0 -> mean 1/3
//   corpus = (0.5 + 1/3)/2
TEST(Report, CorpusIsMeanOfPromptMeans) {
  std::vector<PromptBranches> prompts{{"p1", {br("a b"), br("a c")}},
                                      {"p2", {br("x y z"), br("x y z"), br("q")}}};
  const std::vector<Metric> ms{Metric::kRougeL, Metric::kBleu};
  const auto r = report(prompts, ms);
  EXPECT_NEAR(r.prompts[0].means.at(Metric::kRougeL), 0.5, 1e-12);
  EXPECT_NEAR(r.prompts[1].means.at(Metric::kRougeL), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.corpus.at(Metric::kRougeL), (0.5 + 1.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(r.corpus.at(Metric::kBleu), (r.prompts[0].means.at(Metric::kBleu) + r.prompts[1].means.at(Metric::kBleu)) / 2.0,
              1e-15);
  // 3 branches -> 3x3 matrix, diagonal ignored
  EXPECT_EQ(r.prompts[1].matrices.at(Metric::kRougeL).size(), 9u);
}

// Asymmetric metrics average both orderings of each unordered pair.
TEST(Report, AsymmetricPairsAverageBothOrders) {
  std::vector<PromptBranches> prompts{{"p", {br("a b c d"), br("a b c d e")}}};
  const auto r = report(prompts, std::vector<Metric>{Metric::kBleu});
  const double expected = (bleu("a b c d", "a b c d e") + bleu("a b c d e", "a b c d")) / 2.0;
  EXPECT_NEAR(r.corpus.at(Metric::kBleu), expected, 1e-15);
}

TEST(Report, PermutationInvariant) {
  const auto e = ToyEmbedder::seeded(64, 8, 3);
  std::vector<Branch> bs;
  for (std::size_t i = 0; i < kCorpus.size(); ++i) {
    bs.push_back(br(kCorpus[i], {TokenId(i), TokenId(i + 7), TokenId(2 * i + 1)}));
  }
  std::vector<PromptBranches> a{{"p", bs}};
  std::reverse(bs.begin(), bs.end());
  std::swap(bs[0], bs[2]);
  std::vector<PromptBranches> b{{"p", bs}};
  const auto ra = report(a, all_metrics(), &e), rb = report(b, all_metrics(), &e);
  for (auto m : all_metrics()) EXPECT_NEAR(ra.corpus.at(m), rb.corpus.at(m), 1e-12);
}

TEST(Report, SentSimNeedsEmbedder) {
  std::vector<PromptBranches> prompts{{"p", {br("a", {1}), br("b", {2})}}};
  EXPECT_THROW(report(prompts, std::vector<Metric>{Metric::kSentSim}), ConfigError);
}

TEST(MeanPairwiseCosine, IdenticalIsOne) {
  const auto e = ToyEmbedder::seeded(64, 8, 3);
  const std::vector<std::vector<TokenId>> same(5, std::vector<TokenId>{1, 2, 3});
  EXPECT_EQ(mean_pairwise_cosine(same, e), 1.0);
  const std::vector<std::vector<TokenId>> one(1, std::vector<TokenId>{1});
  EXPECT_THROW(mean_pairwise_cosine(one, e), ConfigError);
}

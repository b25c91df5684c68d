// SPDX-License-Identifier: Apache-2.0
//
// Pairwise similarity metrics between branches of one prompt. Lower means
// more diverse. String metrics tokenize with split_words().

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "avoid/embedding.hpp"
#include "avoid/tokenizer.hpp"

namespace avoid::metrics {

/// Zero n-gram precisions are replaced by this value.
inline constexpr double kBleuSmoothing = 1e-9;

/// Sentence BLEU: geometric mean of clipped n-gram precisions for orders
/// 1..min(max_n, |candidate|) times the brevity penalty. Throws ConfigError
/// on empty text.
double bleu(std::string_view candidate, std::string_view reference, std::size_t max_n = 4);
double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
            std::size_t max_n = 4);

/// LCS-based F1.
double rouge_l_f1(std::string_view candidate, std::string_view reference);
double rouge_l_f1(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Exact-match METEOR: F_mean = 10PR / (R + 9P), fragmentation penalty
/// 0.5 * (chunks / matches)^3. Candidate words align left to right to the
/// earliest unused identical reference word.
double meteor_simple(std::string_view candidate, std::string_view reference);
double meteor_simple(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Cosine of the two branch embeddings.
double sent_sim(std::span<const TokenId> branch_i, std::span<const TokenId> branch_j,
                const SentenceEmbedder& embedder);

enum class Metric { kBleu, kRougeL, kMeteor, kSentSim };

std::string metric_name(Metric m);
Metric parse_metric(std::string_view name);
std::vector<Metric> all_metrics();

/// One branch as the report sees it.
struct Branch {
  std::string text;
  std::vector<TokenId> tokens;
};

struct PromptBranches {
  std::string prompt_id;
  std::vector<Branch> branches;
};

struct PairwiseReport {
  struct PromptEntry {
    std::string prompt_id;
    /// n x n row-major ordered-pair scores; diagonal is 0 and excluded.
    std::map<Metric, std::vector<double>> matrices;
    std::map<Metric, double> means;
  };

  std::vector<PromptEntry> prompts;
  std::map<Metric, double> corpus;

  /// {"scale": s, "per_prompt": {id: {metric: mean}}, "corpus": {metric: mean}}
  /// with every mean multiplied by `scale`.
  nlohmann::json to_json(double scale = 100.0) const;
};

/// Mean over unordered pairs i < j, where each pair contributes the average
/// of its two ordered scores; then the unweighted mean over prompts.
/// Throws ConfigError when a prompt has fewer than 2 branches.
PairwiseReport report(std::span<const PromptBranches> prompts, std::span<const Metric> metrics,
                      const SentenceEmbedder* embedder = nullptr);

/// Mean pairwise embedding cosine of a set of token sequences.
double mean_pairwise_cosine(std::span<const std::vector<TokenId>> branches,
                            const SentenceEmbedder& embedder);

}  // namespace avoid::metrics

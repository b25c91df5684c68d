// SPDX-License-Identifier: Apache-2.0
//
// Avoidance decoding: greedy selection over candidate scores that trade model
// probability against similarity to branches generated earlier for the same
// prompt. Also hosts the plain greedy and temperature-sampling baselines.

#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avoid/common.hpp"
#include "avoid/embedding.hpp"
#include "avoid/penalty.hpp"
#include "avoid/toy_lm.hpp"

namespace avoid {

/// One earlier branch, with everything the penalties need precomputed.
class NegativeSample {
 public:
  NegativeSample(std::string text, std::vector<TokenId> tokens,
                 std::vector<HiddenVector> hidden_states, SentenceEmbedding embedding);

  const std::string& text() const { return text_; }
  std::span<const TokenId> tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t hidden_dim() const { return dim_; }
  std::span<const float> hidden_state(std::size_t i) const;
  /// All hidden states as one row-major [size() x hidden_dim()] block.
  std::span<const float> hidden_rows() const { return rows_; }
  const SentenceEmbedding& embedding() const { return embedding_; }

  friend bool operator==(const NegativeSample&, const NegativeSample&) = default;

 private:
  std::string text_;
  std::vector<TokenId> tokens_;
  std::size_t dim_ = 0;
  std::vector<float> rows_;
  SentenceEmbedding embedding_;
};

/// Ordered store of negatives; with a window only the most recent W remain.
class NegativeMemory {
 public:
  explicit NegativeMemory(std::optional<std::size_t> window = std::nullopt);

  void add(NegativeSample sample);
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const NegativeSample& operator[](std::size_t i) const { return samples_[i]; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }
  std::optional<std::size_t> window() const { return window_; }

 private:
  std::deque<NegativeSample> samples_;
  std::optional<std::size_t> window_;
};

/// Candidate count and penalty weight chosen from the next-token
/// distribution. k is the smallest count whose top-k probability mass reaches
/// k_mass_threshold, clamped to [1, k_max]; alpha is alpha_max times the
/// entropy normalized by log(vocab size).
struct AdaptivePolicy {
  double k_mass_threshold = 0.95;
  std::size_t k_max = 10;
  double alpha_max = 0.8;
  std::optional<std::size_t> fixed_k;
  std::optional<double> fixed_alpha;

  void validate() const;
};

struct AdaptiveParams {
  std::size_t k = 1;
  double alpha = 0.0;
};

AdaptiveParams adaptive_params(std::span<const float> logits, const AdaptivePolicy& policy);
AdaptiveParams adaptive_params_from_probs(std::span<const double> probs,
                                          const AdaptivePolicy& policy);

/// Indices of the k most probable tokens, descending probability, ties by
/// lower id.
std::vector<TokenId> top_k(std::span<const double> probs, std::size_t k);

/// Highest-probability token, ties by lower id.
TokenId argmax(std::span<const double> probs);

struct DecodeState {
  std::vector<TokenId> prompt_tokens;
  std::vector<TokenId> generated;
  KvCache cache;
  /// Next-token logits after consuming prompt + generated.
  std::vector<float> logits;

  std::size_t step() const { return generated.size(); }
};

struct StepResult {
  TokenId token = 0;
  std::size_t k = 0;
  double alpha = 0.0;
  double gamma = 0.0;
  std::vector<CandidateScore> candidates;
  std::size_t chosen = 0;
};

struct GenerateOptions {
  std::size_t max_tokens = 200;
  std::optional<TokenId> stop_token;
  /// Keep every StepResult.
  bool diagnostics = false;
  /// Record the dormant fraction of each generated token's FFN activations.
  std::optional<double> probe_threshold;
};

struct BranchResult {
  std::vector<TokenId> tokens;
  /// Hidden state of each generated token, captured when it was consumed.
  std::vector<HiddenVector> hidden_states;
  std::vector<StepResult> steps;
  std::vector<double> dormant_fractions;
  std::size_t memory_size_at_start = 0;
  /// Generation stopped early because the context was full.
  bool truncated = false;
};

/// Consumes the prompt with the cache. Throws on an empty prompt or overflow.
DecodeState start_decode(const LanguageModel& model, std::span<const TokenId> prompt);

/// Feeds `token`, appending it to the state.
ForwardOutput advance(const LanguageModel& model, DecodeState& state, TokenId token);

class AvoidanceDecoder {
 public:
  AvoidanceDecoder(const LanguageModel& model, const SentenceEmbedder& embedder,
                   PenaltyConfig penalty, AdaptivePolicy policy);

  const PenaltyConfig& penalty() const { return penalty_; }
  const AdaptivePolicy& policy() const { return policy_; }

  /// Precomputes a negative's hidden states (teacher-forced under `prompt`)
  /// and its embedding (continuation only).
  NegativeSample ingest_negative(std::span<const TokenId> prompt,
                                 std::span<const TokenId> continuation,
                                 std::string text = {}) const;

  /// Scores the candidates for the next token and picks one. The state's
  /// cache is left exactly as it was: lookahead entries are rolled back.
  StepResult decode_step(DecodeState& state, const NegativeMemory& memory) const;

  BranchResult generate_branch(std::span<const TokenId> prompt, const NegativeMemory& memory,
                               const GenerateOptions& options) const;

  /// n branches over the same prompt; each finished branch becomes a
  /// negative for the ones after it.
  std::vector<BranchResult> generate_branches(std::span<const TokenId> prompt, std::size_t n,
                                              const GenerateOptions& options,
                                              std::optional<std::size_t> window = std::nullopt) const;

 private:
  const LanguageModel& model_;
  const SentenceEmbedder& embedder_;
  PenaltyConfig penalty_;
  AdaptivePolicy policy_;
};

/// Plain greedy decoding.
BranchResult generate_greedy(const LanguageModel& model, std::span<const TokenId> prompt,
                             const GenerateOptions& options);

/// Samples from softmax(logits / temperature) with a seeded mt19937_64.
BranchResult generate_sampled(const LanguageModel& model, std::span<const TokenId> prompt,
                              double temperature, std::uint64_t seed,
                              const GenerateOptions& options);

/// Instruction-feedback baseline prompt: the story prompt followed by every
/// earlier output under an explicit "do not resemble" instruction.
std::string feedback_prompt(std::string_view story_prompt,
                            std::span<const std::string> previous_outputs);

}  // namespace avoid

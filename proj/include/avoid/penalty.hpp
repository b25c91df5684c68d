// SPDX-License-Identifier: Apache-2.0
//
// Similarity penalties against previously generated branches and the
// candidate score they feed into.
//
//   csp     max cosine between a candidate's hidden state and every token
//           hidden state of one negative sample
//   nsp     cosine between the sentence embedding of (generated + candidate)
//           and the negative sample's embedding
//   gamma   sigmoid schedule mixing the two over decode steps
//   hybrid  gamma * csp + (1 - gamma) * nsp
//   aggregate  beta-scaled max (or sum) of hybrid over negatives
//   final_score  (1 - alpha) * p - alpha * s_final

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "avoid/common.hpp"
#include "avoid/embedding.hpp"

namespace avoid {

enum class ScheduleMode {
  /// CSP weight starts near 1 and decays toward delta after t0.
  kProse,
  /// delta + (1 - delta) * sigmoid(t - t0) as literally written.
  kVerbatim,
};

enum class AggregationMode { kMax, kSum };

struct PenaltyConfig {
  double beta = 2.0;
  double delta = 0.5;
  std::size_t t0 = 25;
  ScheduleMode schedule_mode = ScheduleMode::kProse;
  AggregationMode aggregation_mode = AggregationMode::kMax;
  /// Overrides the schedule with a constant CSP weight (for analysis).
  std::optional<double> fixed_gamma;

  void validate() const;
};

struct CandidateScore {
  TokenId token = 0;
  double prob = 0.0;
  std::vector<double> csp_per_negative;
  std::vector<double> nsp_per_negative;
  std::vector<double> hybrid_per_negative;
  double s_final = 0.0;
  double final_score = 0.0;
};

double csp(std::span<const float> candidate_hidden, std::span<const HiddenVector> negative_hiddens);

/// Same as csp() over a row-major [n x dim] block of negative hidden states.
double csp_flat(std::span<const float> candidate_hidden, std::span<const float> negative_rows);

double nsp(std::span<const TokenId> current_plus_candidate,
           const SentenceEmbedding& negative_embedding, const SentenceEmbedder& embedder);

double sigmoid(double x);

/// Ignores cfg.fixed_gamma; the decoder applies that override itself.
double gamma(std::size_t t, const PenaltyConfig& cfg);

double hybrid(double csp_val, double nsp_val, double gamma_val);

/// 0 for an empty vector.
double aggregate(std::span<const double> hybrid_per_negative, const PenaltyConfig& cfg);

double final_score(double prob, double s_final, double alpha);

}  // namespace avoid

// SPDX-License-Identifier: Apache-2.0

#include "avoid/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avoid/kernels.hpp"

namespace avoid {

void PenaltyConfig::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
  if (fixed_gamma && !(*fixed_gamma >= 0.0 && *fixed_gamma <= 1.0)) {
    throw ConfigError("fixed gamma must lie in [0, 1]");
  }
}

double csp(std::span<const float> candidate_hidden, std::span<const HiddenVector> negative_hiddens) {
  if (negative_hiddens.empty()) throw ConfigError("csp: empty negative set");
  double best = -INFINITY;
  for (const auto& h : negative_hiddens) best = std::max(best, kernels::cosine(candidate_hidden, h));
  return best;
}

double csp_flat(std::span<const float> candidate_hidden, std::span<const float> negative_rows) {
  return kernels::max_cosine(candidate_hidden, negative_rows);
}

double nsp(std::span<const TokenId> current_plus_candidate,
           const SentenceEmbedding& negative_embedding, const SentenceEmbedder& embedder) {
  return cosine(embedder.embed(current_plus_candidate), negative_embedding);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gamma(std::size_t t, const PenaltyConfig& cfg) {
  const double shift = static_cast<double>(t) - static_cast<double>(cfg.t0);
  const double s = cfg.schedule_mode == ScheduleMode::kVerbatim ? sigmoid(shift) : sigmoid(-shift);
  return cfg.delta + (1.0 - cfg.delta) * s;
}

double hybrid(double csp_val, double nsp_val, double gamma_val) {
  return gamma_val * csp_val + (1.0 - gamma_val) * nsp_val;
}

double aggregate(std::span<const double> hybrid_per_negative, const PenaltyConfig& cfg) {
  if (hybrid_per_negative.empty()) return 0.0;
  if (cfg.aggregation_mode == AggregationMode::kSum) {
    double s = 0.0;
    for (double h : hybrid_per_negative) s += cfg.beta * h;
    return s;
  }
  double best = -INFINITY;
  for (double h : hybrid_per_negative) best = std::max(best, cfg.beta * h);
  return best;
}

double final_score(double prob, double s_final, double alpha) {
  return (1.0 - alpha) * prob - alpha * s_final;
}

}  // namespace avoid

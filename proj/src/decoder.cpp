// SPDX-License-Identifier: Apache-2.0

#include "avoid/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "avoid/instrumentation.hpp"
#include "avoid/kernels.hpp"

namespace avoid {

NegativeSample::NegativeSample(std::string text, std::vector<TokenId> tokens,
                               std::vector<HiddenVector> hidden_states, SentenceEmbedding embedding)
    : text_(std::move(text)), tokens_(std::move(tokens)), embedding_(std::move(embedding)) {
  if (tokens_.empty()) throw ConfigError("negative sample: empty continuation");
  if (hidden_states.size() != tokens_.size()) {
    throw ConfigError("negative sample: " + std::to_string(hidden_states.size()) +
                      " hidden states for " + std::to_string(tokens_.size()) + " tokens");
  }
  dim_ = hidden_states.front().size();
  rows_.reserve(dim_ * hidden_states.size());
  for (const auto& h : hidden_states) {
    if (h.size() != dim_) throw ConfigError("negative sample: ragged hidden states");
    rows_.insert(rows_.end(), h.begin(), h.end());
  }
}

std::span<const float> NegativeSample::hidden_state(std::size_t i) const {
  return std::span<const float>(rows_).subspan(i * dim_, dim_);
}

NegativeMemory::NegativeMemory(std::optional<std::size_t> window) : window_(window) {
  if (window_ && *window_ == 0) throw ConfigError("negative memory window must be >= 1");
}

void NegativeMemory::add(NegativeSample sample) {
  samples_.push_back(std::move(sample));
  if (window_) {
    while (samples_.size() > *window_) samples_.pop_front();
  }
}

void AdaptivePolicy::validate() const {
  if (!(k_mass_threshold > 0.0 && k_mass_threshold <= 1.0)) {
    throw ConfigError("k_mass_threshold must lie in (0, 1]");
  }
  if (k_max == 0) throw ConfigError("k_max must be >= 1");
  if (!(alpha_max >= 0.0 && alpha_max <= 1.0)) throw ConfigError("alpha_max must lie in [0, 1]");
  if (fixed_k && *fixed_k == 0) throw ConfigError("fixed k must be >= 1");
  if (fixed_alpha && !(*fixed_alpha >= 0.0 && *fixed_alpha <= 1.0)) {
    throw ConfigError("fixed alpha must lie in [0, 1]");
  }
}

std::vector<TokenId> top_k(std::span<const double> probs, std::size_t k) {
  std::vector<TokenId> idx(probs.size());
  std::iota(idx.begin(), idx.end(), TokenId{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](TokenId a, TokenId b) {
                      const double pa = probs[static_cast<std::size_t>(a)];
                      const double pb = probs[static_cast<std::size_t>(b)];
                      return pa != pb ? pa > pb : a < b;
                    });
  idx.resize(k);
  return idx;
}

TokenId argmax(std::span<const double> probs) {
  if (probs.empty()) throw ConfigError("argmax: empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

AdaptiveParams adaptive_params_from_probs(std::span<const double> probs,
                                          const AdaptivePolicy& policy) {
  if (probs.size() < 2) throw ConfigError("adaptive_params: vocabulary must have >= 2 tokens");
  AdaptiveParams out;

  if (policy.fixed_k) {
    out.k = std::min(*policy.fixed_k, probs.size());
  } else {
    std::vector<double> sorted(probs.begin(), probs.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double mass = 0.0;
    std::size_t k = 0;
    while (k < sorted.size()) {
      mass += sorted[k++];
      if (mass >= policy.k_mass_threshold) break;
    }
    out.k = std::clamp<std::size_t>(k, 1, std::min(policy.k_max, probs.size()));
  }

  if (policy.fixed_alpha) {
    out.alpha = *policy.fixed_alpha;
  } else {
    double h = 0.0;
    for (double p : probs) {
      if (p > 0.0) h -= p * std::log(p);
    }
    const double a = policy.alpha_max * h / std::log(static_cast<double>(probs.size()));
    out.alpha = std::clamp(a, 0.0, policy.alpha_max);
  }
  return out;
}

AdaptiveParams adaptive_params(std::span<const float> logits, const AdaptivePolicy& policy) {
  const auto probs = softmax(logits);
  return adaptive_params_from_probs(probs, policy);
}

DecodeState start_decode(const LanguageModel& model, std::span<const TokenId> prompt) {
  if (prompt.empty()) throw ConfigError("prompt must contain at least one token");
  if (prompt.size() > model.max_context()) {
    throw ContextOverflowError("prompt of " + std::to_string(prompt.size()) +
                               " tokens exceeds context of " + std::to_string(model.max_context()));
  }
  DecodeState s;
  s.prompt_tokens.assign(prompt.begin(), prompt.end());
  s.cache = model.new_cache();
  for (TokenId t : prompt) s.logits = model.forward_step(t, s.cache).logits;
  return s;
}

ForwardOutput advance(const LanguageModel& model, DecodeState& state, TokenId token) {
  auto out = model.forward_step(token, state.cache);
  state.generated.push_back(token);
  state.logits = out.logits;
  return out;
}

AvoidanceDecoder::AvoidanceDecoder(const LanguageModel& model, const SentenceEmbedder& embedder,
                                   PenaltyConfig penalty, AdaptivePolicy policy)
    : model_(model), embedder_(embedder), penalty_(penalty), policy_(policy) {
  penalty_.validate();
  policy_.validate();
}

NegativeSample AvoidanceDecoder::ingest_negative(std::span<const TokenId> prompt,
                                                 std::span<const TokenId> continuation,
                                                 std::string text) const {
  if (continuation.empty()) throw ConfigError("ingest_negative: empty continuation");
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), continuation.begin(), continuation.end());
  auto hidden = model_.hidden_states_of(seq);
  hidden.erase(hidden.begin(), hidden.begin() + static_cast<std::ptrdiff_t>(prompt.size()));
  return NegativeSample(std::move(text), {continuation.begin(), continuation.end()},
                        std::move(hidden), embedder_.embed(continuation));
}

StepResult AvoidanceDecoder::decode_step(DecodeState& state, const NegativeMemory& memory) const {
  const auto probs = softmax(state.logits);
  const auto params = adaptive_params_from_probs(probs, policy_);

  StepResult r;
  r.k = params.k;
  r.alpha = params.alpha;
  r.gamma = penalty_.fixed_gamma.value_or(gamma(state.step(), penalty_));

  const std::size_t base = state.cache.prefix_length();
  std::vector<TokenId> continuation = state.generated;
  continuation.push_back(0);

  for (TokenId tok : top_k(probs, params.k)) {
    CandidateScore c;
    c.token = tok;
    c.prob = probs[static_cast<std::size_t>(tok)];
    if (!memory.empty()) {
      HiddenVector h;
      try {
        h = model_.forward_step(tok, state.cache).last_hidden;
      } catch (...) {
        state.cache.truncate(base);
        throw;
      }
      state.cache.truncate(base);
      continuation.back() = tok;
      const auto current = embedder_.embed(continuation);
      for (const auto& neg : memory) {
        const double s_csp = csp_flat(h, neg.hidden_rows());
        const double s_nsp = cosine(current, neg.embedding());
        c.csp_per_negative.push_back(s_csp);
        c.nsp_per_negative.push_back(s_nsp);
        c.hybrid_per_negative.push_back(hybrid(s_csp, s_nsp, r.gamma));
      }
    }
    c.s_final = aggregate(c.hybrid_per_negative, penalty_);
    c.final_score = final_score(c.prob, c.s_final, r.alpha);
    r.candidates.push_back(std::move(c));
  }

  for (std::size_t j = 1; j < r.candidates.size(); ++j) {
    const auto& best = r.candidates[r.chosen];
    const auto& c = r.candidates[j];
    if (c.final_score > best.final_score ||
        (c.final_score == best.final_score && c.token < best.token)) {
      r.chosen = j;
    }
  }
  r.token = r.candidates[r.chosen].token;
  return r;
}

namespace {

// Shared loop for every decoding mode. `choose` picks the next token.
template <typename Choose>
BranchResult run_branch(const LanguageModel& model, std::span<const TokenId> prompt,
                        const GenerateOptions& options, Choose&& choose) {
  BranchResult out;
  if (options.max_tokens == 0) return out;
  DecodeState state = start_decode(model, prompt);
  while (state.generated.size() < options.max_tokens) {
    if (state.cache.prefix_length() >= model.max_context()) {
      out.truncated = true;
      break;
    }
    StepResult step = choose(state);
    const TokenId tok = step.token;
    if (options.stop_token && tok == *options.stop_token) break;
    if (options.diagnostics) out.steps.push_back(std::move(step));
    auto fwd = advance(model, state, tok);
    out.hidden_states.push_back(std::move(fwd.last_hidden));
    if (options.probe_threshold) {
      out.dormant_fractions.push_back(dormant_fraction(fwd.ffn_activations, *options.probe_threshold));
    }
  }
  out.tokens = std::move(state.generated);
  return out;
}

}  // namespace

BranchResult AvoidanceDecoder::generate_branch(std::span<const TokenId> prompt,
                                               const NegativeMemory& memory,
                                               const GenerateOptions& options) const {
  auto out = run_branch(model_, prompt, options,
                        [&](DecodeState& s) { return decode_step(s, memory); });
  out.memory_size_at_start = memory.size();
  return out;
}

std::vector<BranchResult> AvoidanceDecoder::generate_branches(std::span<const TokenId> prompt,
                                                              std::size_t n,
                                                              const GenerateOptions& options,
                                                              std::optional<std::size_t> window) const {
  if (n == 0) throw ConfigError("number of branches must be >= 1");
  NegativeMemory memory(window);
  std::vector<BranchResult> branches;
  branches.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    branches.push_back(generate_branch(prompt, memory, options));
    const auto& b = branches.back();
    // An empty continuation has nothing to avoid.
    if (!b.tokens.empty()) memory.add(ingest_negative(prompt, b.tokens));
  }
  return branches;
}

BranchResult generate_greedy(const LanguageModel& model, std::span<const TokenId> prompt,
                             const GenerateOptions& options) {
  return run_branch(model, prompt, options, [](DecodeState& s) {
    StepResult r;
    const auto probs = softmax(s.logits);
    r.token = argmax(probs);
    r.k = 1;
    r.candidates.push_back({.token = r.token,
                            .prob = probs[static_cast<std::size_t>(r.token)],
                            .final_score = probs[static_cast<std::size_t>(r.token)]});
    return r;
  });
}

BranchResult generate_sampled(const LanguageModel& model, std::span<const TokenId> prompt,
                              double temperature, std::uint64_t seed,
                              const GenerateOptions& options) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  std::mt19937_64 gen(seed);
  return run_branch(model, prompt, options, [&](DecodeState& s) {
    const auto probs = softmax(s.logits, temperature);
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    double cum = 0.0;
    std::size_t pick = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) {
        pick = i;
        break;
      }
    }
    StepResult r;
    r.token = static_cast<TokenId>(pick);
    r.k = probs.size();
    r.candidates.push_back({.token = r.token, .prob = probs[pick], .final_score = probs[pick]});
    return r;
  });
}

std::string feedback_prompt(std::string_view story_prompt,
                            std::span<const std::string> previous_outputs) {
  std::string s =
      "You are a helpful and creative assistant that always responds in English and avoids "
      "undesired responses.\n\n"
      "Please write a story from the following prompt.\n";
  s += story_prompt;
  if (!previous_outputs.empty()) {
    s += "\n\nDo NOT generate responses that resemble the following examples:\n";
    for (std::size_t i = 0; i < previous_outputs.size(); ++i) {
      if (i > 0) s += "\n\n";
      s += previous_outputs[i];
    }
  }
  return s;
}

}  // namespace avoid

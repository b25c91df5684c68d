// SPDX-License-Identifier: Apache-2.0
//
// Rubric texts. These must stay byte-identical to the golden files under
// tests/fixtures/judge.

#include <string>

#include "avoid/judge.hpp"

namespace avoid::judge {

const std::string& degeneration_rubric() {
  static const std::string kText =
      R"(You are a rigorous text degeneration evaluator.

You will be given ONE passage of text. Your task is to assess whether it exhibits signs of LLM degeneration.

Return ONLY valid JSON with:
- "degeneration_score": float in [0.0, 1.0]
- "label": "OK" or "DEGENERATED" (threshold: 0.30)
- "issues": a list of up to 4 bullet-point style strings, explaining key problems if any

Use the following rubric. Each of the 4 dimensions contributes equally (0.25 weight each) to the final score.
-- 1. Syntactic Integrity (grammar & sentence structure)
    • 0.0 = flawless grammar, logical punctuation, complete sentences
    • 0.2–0.4 = minor run-ons or awkward phrasing
    • 0.6–0.8 = frequent structural errors or confusing syntax
    • 1.0 = broken or chaotic sentence structure
    Do NOT penalize complex or poetic sentence structures if grammatically valid.

-- 2. Semantic Trajectory (logical & thematic coherence)
    • 0.0 = clear, logical development of ideas
    • 0.2–0.4 = some loose transitions or unexpected inserts
    • 0.6–0.8 = idea flow breaks down across sentences
    • 1.0 = no coherent message or progression
    Do NOT penalize metafictional commentary or stylistic digressions if meaning is preserved.

-- 3. Lexical Sanity (word choices & in-context appropriateness)
    • 0.0 = all words match the tone and meaning
    • 0.2–0.4 = some unusual word choices but interpretable
    • 0.6–0.8 = strange phrasing, tone mismatches, rare word combinations
    • 1.0 = nonsensical or surreal word combinations (e.g. “fractional nut satisfaction”)
    Do NOT penalize poetic, archaic, or stylized language if used intentionally.

-- 4. Noise Symptoms (repetition, rambling, word salad)
    • 0.0 = no unusual patterns
    • 0.2–0.4 = light stylistic repetition or verbosity
    • 0.6–0.8 = distracting repetition, filler, or randomness
    • 1.0 = clear signs of uncontrolled generation: token loops, hallucinations, nonsense
    Do NOT, Never penalize if the final sentence of the passage is truncated — this is because of the length limits.

Important:
- Use professional judgment to apply these scores.
- Focus on detecting true degeneration (e.g., broken logic, nonsense, hallucinated text).
- Never return anything except the JSON object. No extra explanation or comments.)";
  return kText;
}

std::string diversity_rubric(std::size_t sample_count) {
  return "You are a text diversity evaluator.\n\nBelow are " + std::to_string(sample_count) +
         R"( numbered text samples. Your task is to assess how diverse they are in terms of perspective, style, plot structure, and language variation.

Your output must be a JSON object with:
- "diversity_score": a float between 0.0 and 1.0 (where 0 = all samples are nearly identical, and 1 = samples are maximally diverse)
- "justification": a one-sentence explanation of your reasoning

Scoring guidance:
- 0.0: All samples are structurally and semantically almost identical.
- 0.1–0.3: Slight variation in phrasing or detail, but mostly follow the same template.
- 0.4–0.6: Notable variation in perspective, tone, setting, or content development.
- 0.7–0.9: Substantial differences in narrative framing, imaginative detail, or genre shifts.
- 1.0: Samples are maximally different in form, function, and voice.

Be generous when minor shifts in character, setting, or literary device occur. Do not penalize shared themes if surface features differ meaningfully.

Return only a valid JSON object and nothing else.)";
}

}  // namespace avoid::judge

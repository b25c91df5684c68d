// SPDX-License-Identifier: Apache-2.0

#include "avoid/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "avoid/kernels.hpp"

namespace avoid::metrics {

namespace {

using Words = std::vector<std::string>;

void require_nonempty(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) throw ConfigError("metric input is empty after tokenization");
}

std::map<Words, std::size_t> ngram_counts(std::span<const std::string> w, std::size_t n) {
  std::map<Words, std::size_t> counts;
  for (std::size_t i = 0; i + n <= w.size(); ++i) ++counts[Words(w.begin() + i, w.begin() + i + n)];
  return counts;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
            std::size_t max_n) {
  require_nonempty(candidate, reference);
  if (max_n == 0) throw ConfigError("bleu: max_n must be >= 1");
  const std::size_t orders = std::min(max_n, candidate.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t clipped = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) clipped += std::min(count, it->second);
    }
    const double total = static_cast<double>(candidate.size() - n + 1);
    double p = static_cast<double>(clipped) / total;
    if (p == 0.0) p = kBleuSmoothing;
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

double bleu(std::string_view candidate, std::string_view reference, std::size_t max_n) {
  return bleu(split_words(candidate), split_words(reference), max_n);
}

double rouge_l_f1(std::span<const std::string> candidate, std::span<const std::string> reference) {
  require_nonempty(candidate, reference);
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l_f1(std::string_view candidate, std::string_view reference) {
  return rouge_l_f1(split_words(candidate), split_words(reference));
}

double meteor_simple(std::span<const std::string> candidate, std::span<const std::string> reference) {
  require_nonempty(candidate, reference);
  std::vector<bool> used(reference.size(), false);
  // ref position matched by each candidate word, or -1
  std::vector<std::ptrdiff_t> align(candidate.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!used[j] && reference[j] == candidate[i]) {
        used[j] = true;
        align[i] = static_cast<std::ptrdiff_t>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;

  std::size_t chunks = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (align[i] < 0) continue;
    const bool continues = i > 0 && align[i - 1] >= 0 && align[i] == align[i - 1] + 1;
    if (!continues) ++chunks;
  }
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

double meteor_simple(std::string_view candidate, std::string_view reference) {
  return meteor_simple(split_words(candidate), split_words(reference));
}

double sent_sim(std::span<const TokenId> branch_i, std::span<const TokenId> branch_j,
                const SentenceEmbedder& embedder) {
  return cosine(embedder.embed(branch_i), embedder.embed(branch_j));
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kBleu: return "bleu";
    case Metric::kRougeL: return "rouge_l";
    case Metric::kMeteor: return "meteor";
    case Metric::kSentSim: return "sent_sim";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : all_metrics()) {
    if (metric_name(m) == name) return m;
  }
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

std::vector<Metric> all_metrics() {
  return {Metric::kBleu, Metric::kRougeL, Metric::kMeteor, Metric::kSentSim};
}

nlohmann::json PairwiseReport::to_json(double scale) const {
  nlohmann::json j;
  j["scale"] = scale;
  j["per_prompt"] = nlohmann::json::object();
  for (const auto& p : prompts) {
    auto& e = j["per_prompt"][p.prompt_id];
    for (const auto& [m, v] : p.means) e[metric_name(m)] = v * scale;
  }
  j["corpus"] = nlohmann::json::object();
  for (const auto& [m, v] : corpus) j["corpus"][metric_name(m)] = v * scale;
  return j;
}

PairwiseReport report(std::span<const PromptBranches> prompts, std::span<const Metric> metrics,
                      const SentenceEmbedder* embedder) {
  if (prompts.empty()) throw ConfigError("report: no prompts");
  PairwiseReport rep;
  for (const auto& pb : prompts) {
    const std::size_t n = pb.branches.size();
    if (n < 2) {
      throw ConfigError("prompt '" + pb.prompt_id + "' has fewer than 2 branches");
    }
    PairwiseReport::PromptEntry entry;
    entry.prompt_id = pb.prompt_id;

    std::vector<Words> words;
    std::vector<SentenceEmbedding> embeddings;
    for (Metric m : metrics) {
      if (m == Metric::kSentSim && embeddings.empty()) {
        if (embedder == nullptr) throw ConfigError("sent_sim needs an embedder");
        for (const auto& b : pb.branches) embeddings.push_back(embedder->embed(b.tokens));
      } else if (m != Metric::kSentSim && words.empty()) {
        for (const auto& b : pb.branches) {
          words.push_back(split_words(b.text));
          if (words.back().empty()) {
            throw ConfigError("prompt '" + pb.prompt_id + "' has an empty branch");
          }
        }
      }
    }

    for (Metric m : metrics) {
      std::vector<double> mat;
      switch (m) {
        case Metric::kBleu:
          mat = kernels::pairwise(n, [&](std::size_t i, std::size_t j) { return bleu(words[i], words[j]); });
          break;
        case Metric::kRougeL:
          mat = kernels::pairwise(n, [&](std::size_t i, std::size_t j) { return rouge_l_f1(words[i], words[j]); });
          break;
        case Metric::kMeteor:
          mat = kernels::pairwise(n, [&](std::size_t i, std::size_t j) { return meteor_simple(words[i], words[j]); });
          break;
        case Metric::kSentSim:
          mat = kernels::pairwise(n, [&](std::size_t i, std::size_t j) { return cosine(embeddings[i], embeddings[j]); });
          break;
      }
      double sum = 0.0;
      std::size_t pairs = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          sum += 0.5 * (mat[i * n + j] + mat[j * n + i]);
          ++pairs;
        }
      }
      entry.means[m] = sum / static_cast<double>(pairs);
      entry.matrices[m] = std::move(mat);
    }
    rep.prompts.push_back(std::move(entry));
  }
  for (Metric m : metrics) {
    double s = 0.0;
    for (const auto& p : rep.prompts) s += p.means.at(m);
    rep.corpus[m] = s / static_cast<double>(rep.prompts.size());
  }
  return rep;
}

double mean_pairwise_cosine(std::span<const std::vector<TokenId>> branches,
                            const SentenceEmbedder& embedder) {
  if (branches.size() < 2) throw ConfigError("need at least 2 branches");
  std::vector<SentenceEmbedding> e;
  for (const auto& b : branches) e.push_back(embedder.embed(b));
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      s += cosine(e[i], e[j]);
      ++pairs;
    }
  }
  return s / static_cast<double>(pairs);
}

}  // namespace avoid::metrics

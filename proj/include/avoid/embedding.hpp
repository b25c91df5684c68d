// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "avoid/common.hpp"
#include "avoid/tokenizer.hpp"

namespace avoid {

/// Unit-norm sentence vector.
struct SentenceEmbedding {
  std::vector<double> values;
  /// Norm of the vector before normalization.
  double norm = 0.0;

  friend bool operator==(const SentenceEmbedding&, const SentenceEmbedding&) = default;
};

/// Builds a unit-norm embedding from a raw vector. Throws on a zero vector.
SentenceEmbedding normalized(std::vector<double> raw);

double cosine(const SentenceEmbedding& a, const SentenceEmbedding& b);
double cosine(std::span<const float> a, std::span<const float> b);

class SentenceEmbedder {
 public:
  virtual ~SentenceEmbedder() = default;
  virtual std::size_t dim() const = 0;
  /// Throws ConfigError on empty input.
  virtual SentenceEmbedding embed(std::span<const TokenId> tokens) const = 0;
  SentenceEmbedding embed(std::string_view text, const Tokenizer& tokenizer) const;
};

/// Mean of per-token vectors from a lookup table, L2-normalized.
class ToyEmbedder final : public SentenceEmbedder {
 public:
  /// Table of `vocab_size` rows filled with uniform [-1, 1) values from
  /// mt19937_64 seeded through std::seed_seq{seed low, seed high}.
  static ToyEmbedder seeded(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);
  /// Explicit row-major [vocab_size x dim] table.
  ToyEmbedder(std::size_t dim, std::vector<float> table);

  /// JSON {"embed_dim": d, "seed": s} or {"embed_dim": d, "vectors": [[...], ...]}.
  /// A seeded file needs `vocab_size` to size the table.
  static ToyEmbedder from_file(const std::filesystem::path& path, std::size_t vocab_size);

  std::size_t dim() const override { return dim_; }
  std::size_t vocab_size() const { return table_.size() / dim_; }
  SentenceEmbedding embed(std::span<const TokenId> tokens) const override;
  using SentenceEmbedder::embed;

 private:
  std::size_t dim_;
  std::vector<float> table_;
};

}  // namespace avoid

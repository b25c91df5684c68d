// SPDX-License-Identifier: Apache-2.0

#include "avoid/embedding.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "avoid/kernels.hpp"

namespace avoid {

SentenceEmbedding normalized(std::vector<double> raw) {
  double s = 0.0;
  for (double v : raw) s += v * v;
  const double n = std::sqrt(s);
  if (n == 0.0) throw ConfigError("embedding: zero vector");
  for (double& v : raw) v /= n;
  return {std::move(raw), n};
}

double cosine(const SentenceEmbedding& a, const SentenceEmbedding& b) {
  return kernels::cosine(std::span<const double>(a.values), std::span<const double>(b.values));
}

double cosine(std::span<const float> a, std::span<const float> b) { return kernels::cosine(a, b); }

SentenceEmbedding SentenceEmbedder::embed(std::string_view text, const Tokenizer& tokenizer) const {
  return embed(tokenizer.encode(text));
}

ToyEmbedder ToyEmbedder::seeded(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
  if (vocab_size == 0 || dim == 0) throw ConfigError("embedder: vocab_size and dim must be >= 1");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 gen(seq);
  std::vector<float> table(vocab_size * dim);
  for (float& v : table) v = 2.0F * (static_cast<float>(gen() >> 40) * 0x1.0p-24F) - 1.0F;
  return ToyEmbedder(dim, std::move(table));
}

ToyEmbedder::ToyEmbedder(std::size_t dim, std::vector<float> table)
    : dim_(dim), table_(std::move(table)) {
  if (dim_ == 0) throw ConfigError("embedder: dim must be >= 1");
  if (table_.empty() || table_.size() % dim_ != 0) {
    throw ConfigError("embedder: table size is not a multiple of dim");
  }
}

ToyEmbedder ToyEmbedder::from_file(const std::filesystem::path& path, std::size_t vocab_size) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding table " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    const auto dim = j.at("embed_dim").get<std::size_t>();
    if (j.contains("vectors")) {
      std::vector<float> table;
      for (const auto& row : j.at("vectors")) {
        auto r = row.get<std::vector<float>>();
        if (r.size() != dim) throw ConfigError("embedding table row has wrong dimension");
        table.insert(table.end(), r.begin(), r.end());
      }
      if (table.size() / dim < vocab_size) {
        throw ConfigError("embedding table has fewer rows than the vocabulary");
      }
      return ToyEmbedder(dim, std::move(table));
    }
    return seeded(vocab_size, dim, j.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed embedding table " + path.string() + ": " + e.what());
  }
}

SentenceEmbedding ToyEmbedder::embed(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw ConfigError("embed: empty input");
  const std::size_t rows = vocab_size();
  std::vector<double> acc(dim_, 0.0);
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= rows) {
      throw ConfigError("embed: token id " + std::to_string(t) + " outside table");
    }
    const float* row = table_.data() + static_cast<std::size_t>(t) * dim_;
    for (std::size_t i = 0; i < dim_; ++i) acc[i] += row[i];
  }
  for (double& v : acc) v /= static_cast<double>(tokens.size());
  return normalized(std::move(acc));
}

}  // namespace avoid

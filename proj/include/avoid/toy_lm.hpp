// SPDX-License-Identifier: Apache-2.0
//
// Language-model backend abstraction and a small deterministic transformer
// that implements it.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "avoid/common.hpp"

namespace avoid {

struct ModelSpec {
  std::size_t vocab_size = 256;
  std::size_t model_dim = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t max_context = 1024;
  std::uint64_t seed = 7;
  /// When set, weights are read from this JSON file instead of the seed.
  std::optional<std::filesystem::path> weights_path;

  /// Throws ConfigError on a violated invariant.
  void validate() const;
};

/// Attention keys and values for a consumed prefix.
///
/// Backends own the layout of `layers`; callers only read prefix_length()
/// and roll back with truncate().
struct KvCache {
  struct Layer {
    std::vector<float> keys;    // [prefix_length * model_dim]
    std::vector<float> values;  // [prefix_length * model_dim]
  };

  std::vector<TokenId> tokens;
  std::vector<Layer> layers;

  std::size_t prefix_length() const { return tokens.size(); }

  /// Drops everything after the first `length` tokens.
  void truncate(std::size_t length);
};

struct ForwardOutput {
  std::vector<float> logits;                       // [vocab_size]
  HiddenVector last_hidden;                        // [model_dim]
  std::vector<std::vector<float>> ffn_activations;  // [num_layers][ffn_dim], post-GELU
};

/// What the decoder needs from a language model.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t hidden_dim() const = 0;
  virtual std::size_t max_context() const = 0;

  virtual KvCache new_cache() const = 0;

  /// Consumes `token` at position cache.prefix_length() and appends its keys
  /// and values. The output holds the next-token logits and the hidden state
  /// of `token`. Throws ContextOverflowError when the cache is full.
  virtual ForwardOutput forward_step(TokenId token, KvCache& cache) const = 0;

  /// Full recomputation without a cache: one output per position.
  virtual std::vector<ForwardOutput> forward_sequence(std::span<const TokenId> tokens) const = 0;

  /// Last hidden state of every token in one teacher-forced pass.
  std::vector<HiddenVector> hidden_states_of(std::span<const TokenId> tokens) const;
};

/// Named weight tensors, row-major, [out x in] for projections.
struct ToyWeights {
  struct Layer {
    std::vector<float> wq, wk, wv, wo;
    std::vector<float> w_ff1, b_ff1, w_ff2, b_ff2;
    std::vector<float> ln1_g, ln1_b, ln2_g, ln2_b;
  };

  std::vector<float> tok_emb;  // [vocab, dim]
  std::vector<float> pos_emb;  // [max_context, dim]
  std::vector<Layer> layers;
  std::vector<float> ln_f_g, ln_f_b;
  std::vector<float> unembed;  // [vocab, dim]

  /// Seeded scheme: each tensor gets its own mt19937_64 seeded through
  /// std::seed_seq{seed low, seed high, tensor index} and is filled with
  /// uniform values in [-scale, scale). Projections use scale 1/sqrt(fan_in),
  /// token embeddings 1, positional embeddings 0.5 and the unembedding
  /// 3/sqrt(dim). Layer-norm gains are 1; all biases are 0.
  static ToyWeights generate(const ModelSpec& spec);

  /// Throws ConfigError when any tensor disagrees with `spec`.
  void check_shapes(const ModelSpec& spec) const;
};

/// Pre-norm transformer: learned token and position embeddings, multi-head
/// causal attention without biases, GELU feed-forward, final layer norm and
/// an untied unembedding. The hidden state reported per token is the final
/// layer-norm output, i.e. the vector fed to the unembedding.
class ToyTransformer final : public LanguageModel {
 public:
  /// Generates seeded weights or loads spec.weights_path.
  static ToyTransformer init(const ModelSpec& spec);
  ToyTransformer(ModelSpec spec, ToyWeights weights);

  const ModelSpec& spec() const { return spec_; }
  const ToyWeights& weights() const { return weights_; }

  std::size_t vocab_size() const override { return spec_.vocab_size; }
  std::size_t hidden_dim() const override { return spec_.model_dim; }
  std::size_t max_context() const override { return spec_.max_context; }

  KvCache new_cache() const override;
  ForwardOutput forward_step(TokenId token, KvCache& cache) const override;
  std::vector<ForwardOutput> forward_sequence(std::span<const TokenId> tokens) const override;

 private:
  void check_token(TokenId token) const;

  ModelSpec spec_;
  ToyWeights weights_;
};

/// Weights file: {"header": {vocab_size, model_dim, num_layers, num_heads,
/// ffn_dim, max_context}, "tensors": {tok_emb, pos_emb, layers: [{wq, ...}],
/// ln_f_g, ln_f_b, unembed}} with flat float arrays.
void save_weights(const std::filesystem::path& path, const ModelSpec& spec,
                  const ToyWeights& weights);

/// Reads a weights file and checks it against `spec`. Throws ParseError on a
/// malformed file and ConfigError on a dimension mismatch.
ToyWeights load_weights(const std::filesystem::path& path, const ModelSpec& spec);

/// Numerically stable softmax in double precision.
std::vector<double> softmax(std::span<const float> logits, double temperature = 1.0);

}  // namespace avoid

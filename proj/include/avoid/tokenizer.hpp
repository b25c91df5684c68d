// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "avoid/common.hpp"

namespace avoid {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> tokens) const = 0;
  /// Id of the end-of-text token, when the vocabulary has one.
  virtual std::optional<TokenId> eos() const { return std::nullopt; }
};

/// One token per byte, vocabulary of 256.
class ByteTokenizer final : public Tokenizer {
 public:
  std::size_t vocab_size() const override { return 256; }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> tokens) const override;
};

/// Word-level tokenizer over a supplied token-to-id map.
///
/// Text is lowercased and split on whitespace, with each punctuation
/// character emitted as its own token. Words missing from the map become
/// "<unk>", which must be present. decode() joins tokens with single spaces.
class VocabTokenizer final : public Tokenizer {
 public:
  explicit VocabTokenizer(std::unordered_map<std::string, TokenId> token_to_id);

  /// Loads a JSON object {"token": id, ...}. Ids must be dense in [0, n).
  static VocabTokenizer from_file(const std::filesystem::path& path);

  std::size_t vocab_size() const override { return id_to_token_.size(); }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> tokens) const override;
  std::optional<TokenId> eos() const override { return eos_; }

 private:
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
  TokenId unk_ = 0;
  std::optional<TokenId> eos_;
};

/// Lowercase, whitespace split, punctuation characters as separate tokens.
/// Shared by VocabTokenizer and the string diversity metrics.
std::vector<std::string> split_words(std::string_view text);

}  // namespace avoid

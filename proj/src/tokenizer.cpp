// SPDX-License-Identifier: Apache-2.0

#include "avoid/tokenizer.hpp"

#include <cctype>
#include <fstream>

#include <json.hpp>

namespace avoid {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char ch : text) ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(ch)));
  return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> tokens) const {
  std::string s;
  s.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || t > 255) throw ConfigError("byte tokenizer: id out of range " + std::to_string(t));
    s.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return s;
}

VocabTokenizer::VocabTokenizer(std::unordered_map<std::string, TokenId> token_to_id)
    : token_to_id_(std::move(token_to_id)) {
  if (token_to_id_.size() < 2) throw ConfigError("vocabulary needs at least 2 tokens");
  id_to_token_.assign(token_to_id_.size(), {});
  std::vector<bool> seen(token_to_id_.size(), false);
  for (const auto& [tok, id] : token_to_id_) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size() ||
        seen[static_cast<std::size_t>(id)]) {
      throw ConfigError("vocabulary ids must be dense and unique, bad id for '" + tok + "'");
    }
    seen[static_cast<std::size_t>(id)] = true;
    id_to_token_[static_cast<std::size_t>(id)] = tok;
  }
  auto unk = token_to_id_.find("<unk>");
  if (unk == token_to_id_.end()) throw ConfigError("vocabulary has no <unk> token");
  unk_ = unk->second;
  if (auto eos = token_to_id_.find("<eos>"); eos != token_to_id_.end()) eos_ = eos->second;
}

VocabTokenizer VocabTokenizer::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("vocabulary file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("vocabulary file must be a JSON object");
  std::unordered_map<std::string, TokenId> map;
  for (const auto& [tok, id] : j.items()) {
    if (!id.is_number_integer()) throw ParseError("vocabulary id for '" + tok + "' is not an integer");
    map.emplace(tok, id.get<TokenId>());
  }
  return VocabTokenizer(std::move(map));
}

std::vector<TokenId> VocabTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) {
    auto it = token_to_id_.find(w);
    ids.push_back(it == token_to_id_.end() ? unk_ : it->second);
  }
  return ids;
}

std::string VocabTokenizer::decode(std::span<const TokenId> tokens) const {
  std::string s;
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= id_to_token_.size()) {
      throw ConfigError("vocabulary: id out of range " + std::to_string(t));
    }
    if (!s.empty()) s.push_back(' ');
    s += id_to_token_[static_cast<std::size_t>(t)];
  }
  return s;
}

}  // namespace avoid

// SPDX-License-Identifier: Apache-2.0
//
// Client for LLM-judge rubrics: per-passage degeneration scoring and
// set-level diversity scoring, against a chat-completion style endpoint.
// Transports are pluggable so tests replay recorded request/response pairs.

#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "avoid/common.hpp"

namespace avoid::judge {

/// Network or HTTP-level failure. Retried.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Response that does not follow the rubric's schema. Never retried.
class MalformedResponseError : public ParseError {
 public:
  using ParseError::ParseError;
};

inline constexpr double kDegeneratedThreshold = 0.30;
inline constexpr double kAcceptableDegenMean = 0.1;
inline constexpr std::size_t kDiversitySampleCount = 15;

/// System prompt for degeneration scoring.
const std::string& degeneration_rubric();

/// System prompt for diversity scoring of `sample_count` samples.
std::string diversity_rubric(std::size_t sample_count = kDiversitySampleCount);

/// "1. first\n\n2. second..." as sent in the user message.
std::string numbered_samples(std::span<const std::string> samples);

struct DegenVerdict {
  double degeneration_score = 0.0;
  enum class Label { kOk, kDegenerated } label = Label::kOk;
  std::vector<std::string> issues;
};

struct DiversityVerdict {
  double diversity_score = 0.0;
  std::string justification;
};

/// Strict parsers of the model's reply text.
DegenVerdict parse_degen(std::string_view content);
DiversityVerdict parse_diversity(std::string_view content);

/// {"model": ..., "messages": [{"role": "system", ...}, {"role": "user", ...}]}
nlohmann::json chat_request(const std::string& model, const std::string& system,
                            const std::string& user);

/// Text of choices[0].message.content.
std::string extract_content(std::string_view response_body);

class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one JSON request body and returns the raw response body.
  virtual std::string post(const std::string& body) = 0;
};

/// POST to a URL with optional bearer-token auth.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string url, std::string api_key,
                std::chrono::seconds timeout = std::chrono::seconds(120));
  std::string post(const std::string& body) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

/// Replays a directory of NAME.request.json / NAME.response.json pairs. A
/// request must equal a recorded one (as parsed JSON) or post() throws.
class FixtureTransport final : public Transport {
 public:
  explicit FixtureTransport(const std::filesystem::path& dir);
  std::string post(const std::string& body) override;
  std::size_t size() const { return pairs_.size(); }

 private:
  std::vector<std::pair<nlohmann::json, std::string>> pairs_;
};

/// Forwards to another transport and writes each exchange as a fixture pair.
class RecordingTransport final : public Transport {
 public:
  RecordingTransport(Transport& inner, std::filesystem::path dir);
  std::string post(const std::string& body) override;

 private:
  Transport& inner_;
  std::filesystem::path dir_;
  std::size_t count_ = 0;
};

struct ClientOptions {
  std::string model;
  std::size_t max_retries = 2;
  std::chrono::milliseconds backoff{500};
};

/// Endpoint settings from JUDGE_API_URL / JUDGE_API_KEY / JUDGE_MODEL.
struct EndpointConfig {
  std::string url;
  std::string api_key;
  std::string model;

  /// nullopt when JUDGE_API_URL is unset.
  static std::optional<EndpointConfig> from_env();
};

class JudgeClient {
 public:
  JudgeClient(Transport& transport, ClientOptions options);

  DegenVerdict judge_degeneration(const std::string& text);
  DiversityVerdict judge_diversity(std::span<const std::string> samples,
                                   std::size_t expected_count = kDiversitySampleCount);

 private:
  std::string call(const std::string& system, const std::string& user);

  Transport& transport_;
  ClientOptions options_;
};

struct DegenSummary {
  double mean = 0.0;
  /// mean > 0.1
  bool exceeds_threshold = false;
};

/// Throws ConfigError on empty input.
DegenSummary batch_degen_mean(std::span<const DegenVerdict> verdicts);

}  // namespace avoid::judge

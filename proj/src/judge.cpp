// SPDX-License-Identifier: Apache-2.0

#include "avoid/judge.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#ifdef AVOID_HAS_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

namespace avoid::judge {

using json = nlohmann::json;

namespace {

json parse_object(std::string_view content) {
  json j;
  try {
    j = json::parse(content);
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("judge reply is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw MalformedResponseError("judge reply is not a JSON object");
  return j;
}

void require_keys(const json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (!j.contains(k)) throw MalformedResponseError(std::string("judge reply lacks \"") + k + "\"");
  }
  if (j.size() != keys.size()) throw MalformedResponseError("judge reply has unexpected fields");
}

double unit_score(const json& v, const char* name) {
  if (!v.is_number()) throw MalformedResponseError(std::string(name) + " is not a number");
  const double s = v.get<double>();
  if (!(s >= 0.0 && s <= 1.0)) {
    throw MalformedResponseError(std::string(name) + " " + v.dump() + " outside [0, 1]");
  }
  return s;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string numbered_samples(std::span<const std::string> samples) {
  std::string s;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i > 0) s += "\n\n";
    s += std::to_string(i + 1) + ". " + samples[i];
  }
  return s;
}

DegenVerdict parse_degen(std::string_view content) {
  const json j = parse_object(content);
  require_keys(j, {"degeneration_score", "label", "issues"});
  DegenVerdict v;
  v.degeneration_score = unit_score(j["degeneration_score"], "degeneration_score");

  const auto& label = j["label"];
  if (!label.is_string()) throw MalformedResponseError("label is not a string");
  if (label == "OK") {
    v.label = DegenVerdict::Label::kOk;
  } else if (label == "DEGENERATED") {
    v.label = DegenVerdict::Label::kDegenerated;
  } else {
    throw MalformedResponseError("label must be OK or DEGENERATED, got " + label.dump());
  }
  const bool over = v.degeneration_score >= kDegeneratedThreshold;
  if (over != (v.label == DegenVerdict::Label::kDegenerated)) {
    throw MalformedResponseError("label " + label.dump() + " inconsistent with score " +
                                 std::to_string(v.degeneration_score) + " and threshold 0.30");
  }

  const auto& issues = j["issues"];
  if (!issues.is_array()) throw MalformedResponseError("issues is not a list");
  if (issues.size() > 4) throw MalformedResponseError("more than 4 issues");
  for (const auto& i : issues) {
    if (!i.is_string()) throw MalformedResponseError("issue is not a string");
    v.issues.push_back(i.get<std::string>());
  }
  return v;
}

DiversityVerdict parse_diversity(std::string_view content) {
  const json j = parse_object(content);
  require_keys(j, {"diversity_score", "justification"});
  DiversityVerdict v;
  v.diversity_score = unit_score(j["diversity_score"], "diversity_score");
  if (!j["justification"].is_string()) throw MalformedResponseError("justification is not a string");
  v.justification = j["justification"].get<std::string>();
  return v;
}

json chat_request(const std::string& model, const std::string& system, const std::string& user) {
  return {{"model", model},
          {"messages",
           json::array({{{"role", "system"}, {"content", system}},
                        {{"role", "user"}, {"content", user}}})}};
}

std::string extract_content(std::string_view response_body) {
  try {
    const json j = json::parse(response_body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("unexpected response envelope: ") + e.what());
  }
}

HttpTransport::HttpTransport(std::string url, std::string api_key, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("judge URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
#ifndef AVOID_HAS_OPENSSL
  if (url.rfind("https://", 0) == 0) throw ConfigError("built without TLS support: " + url);
#endif
}

std::string HttpTransport::post(const std::string& body) {
  httplib::Client cli(scheme_host_port_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Post(path_, headers, body, "application/json");
  if (!res) throw TransportError("judge request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("judge endpoint returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

FixtureTransport::FixtureTransport(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("fixture directory not found: " + dir.string());
  std::vector<std::filesystem::path> requests;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    const std::string suffix = ".request.json";
    if (name.size() > suffix.size() && name.ends_with(suffix)) requests.push_back(e.path());
  }
  std::sort(requests.begin(), requests.end());
  for (const auto& req : requests) {
    const auto name = req.filename().string();
    const auto stem = name.substr(0, name.size() - std::string(".request.json").size());
    const auto resp = dir / (stem + ".response.json");
    try {
      pairs_.emplace_back(json::parse(read_file(req)), read_file(resp));
    } catch (const json::exception& e) {
      throw ParseError("bad fixture " + req.string() + ": " + e.what());
    }
  }
}

std::string FixtureTransport::post(const std::string& body) {
  const json req = json::parse(body);
  for (const auto& [recorded, response] : pairs_) {
    if (recorded == req) return response;
  }
  throw TransportError("no recorded fixture matches the outgoing request");
}

RecordingTransport::RecordingTransport(Transport& inner, std::filesystem::path dir)
    : inner_(inner), dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string RecordingTransport::post(const std::string& body) {
  auto response = inner_.post(body);
  char stem[16];
  std::snprintf(stem, sizeof stem, "%04zu", count_++);
  std::ofstream(dir_ / (std::string(stem) + ".request.json")) << json::parse(body).dump(2) << '\n';
  std::ofstream(dir_ / (std::string(stem) + ".response.json")) << response;
  return response;
}

std::optional<EndpointConfig> EndpointConfig::from_env() {
  const char* url = std::getenv("JUDGE_API_URL");
  if (url == nullptr || *url == '\0') return std::nullopt;
  EndpointConfig c;
  c.url = url;
  if (const char* key = std::getenv("JUDGE_API_KEY")) c.api_key = key;
  if (const char* model = std::getenv("JUDGE_MODEL")) c.model = model;
  return c;
}

JudgeClient::JudgeClient(Transport& transport, ClientOptions options)
    : transport_(transport), options_(std::move(options)) {}

std::string JudgeClient::call(const std::string& system, const std::string& user) {
  const std::string body = chat_request(options_.model, system, user).dump();
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return extract_content(transport_.post(body));
    } catch (const TransportError&) {
      if (attempt >= options_.max_retries) throw;
      std::this_thread::sleep_for(options_.backoff * (1 << attempt));
    }
  }
}

DegenVerdict JudgeClient::judge_degeneration(const std::string& text) {
  return parse_degen(call(degeneration_rubric(), text));
}

DiversityVerdict JudgeClient::judge_diversity(std::span<const std::string> samples,
                                              std::size_t expected_count) {
  if (samples.size() != expected_count) {
    throw ConfigError("diversity judging expects " + std::to_string(expected_count) +
                      " samples, got " + std::to_string(samples.size()));
  }
  return parse_diversity(call(diversity_rubric(samples.size()), numbered_samples(samples)));
}

DegenSummary batch_degen_mean(std::span<const DegenVerdict> verdicts) {
  if (verdicts.empty()) throw ConfigError("no degeneration verdicts to average");
  double s = 0.0;
  for (const auto& v : verdicts) s += v.degeneration_score;
  DegenSummary out;
  out.mean = s / static_cast<double>(verdicts.size());
  out.exceeds_threshold = out.mean > kAcceptableDegenMean;
  return out;
}

}  // namespace avoid::judge

// SPDX-License-Identifier: Apache-2.0
//
// Run configuration, file formats and the subcommands behind the
// `avoidance` executable.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avoid/decoder.hpp"
#include "avoid/embedding.hpp"
#include "avoid/judge.hpp"
#include "avoid/metrics.hpp"
#include "avoid/tokenizer.hpp"
#include "avoid/toy_lm.hpp"

namespace avoid::cli {

enum ExitCode : int { kOk = 0, kUsageError = 1, kRuntimeError = 2 };

enum class BaselineMode { kGreedy, kTemperature };

/// Everything a run needs. The JSON form uses the same field names:
///
///   {"model": {"vocab_size", "model_dim", "num_layers", "num_heads", "ffn_dim",
///              "max_context", "weights_path"},
///    "vocab_path", "embedder": {"embed_dim", "table_path"},
///    "penalty": {"beta", "delta", "t0", "schedule", "aggregation"},
///    "policy": {"k_mass_threshold", "k_max", "alpha_max"},
///    "branches", "max_tokens", "window", "seed", "prompts", "out",
///    "diagnostics", "mode", "temperature", "feedback_prompt", "stop_token",
///    "probe_threshold"}
///
/// `seed` drives the generated model weights, the embedding table and the
/// temperature sampler. A model vocab_size of 0 means "take it from the
/// tokenizer". Without vocab_path the tokenizer is byte-level.
struct RunConfig {
  ModelSpec model{.vocab_size = 0, .max_context = 4096};
  std::optional<std::filesystem::path> vocab_path;
  std::size_t embed_dim = 32;
  std::optional<std::filesystem::path> embedding_table_path;
  PenaltyConfig penalty;
  AdaptivePolicy policy;
  std::size_t branches = 15;
  std::size_t max_tokens = 200;
  std::optional<std::size_t> window;
  std::uint64_t seed = 7;
  std::optional<std::filesystem::path> prompts_path;
  std::optional<std::filesystem::path> out_path;
  bool diagnostics = false;
  BaselineMode mode = BaselineMode::kGreedy;
  double temperature = 1.0;
  bool feedback_prompt = false;
  std::optional<TokenId> stop_token;
  double probe_threshold = 5e-5;

  /// Relative paths resolve against `base_dir`. Unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// 16 hex digits of FNV-1a over the effective config (without "out").
  std::string fingerprint() const;

  void validate() const;
};

/// Tokenizer, model and embedder built from a RunConfig.
struct Runtime {
  std::unique_ptr<Tokenizer> tokenizer;
  std::unique_ptr<ToyTransformer> model;
  std::unique_ptr<ToyEmbedder> embedder;

  static Runtime build(const RunConfig& cfg);
};

struct Prompt {
  std::string prompt_id;
  std::string text;
};

/// JSON list of {"prompt_id", "text"}.
std::vector<Prompt> load_prompts(const std::filesystem::path& path);

struct BranchRecord {
  std::string prompt_id;
  std::size_t branch_idx = 0;
  std::string text;
  std::vector<TokenId> tokens;
  std::string config_fingerprint;
  bool truncated = false;
  std::optional<nlohmann::json> diagnostics;

  nlohmann::json to_json() const;
  static BranchRecord from_json(const nlohmann::json& j);
};

/// One record per line. Throws ParseError naming the bad line.
std::vector<BranchRecord> read_branches(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames; nothing is left on failure.
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines);

nlohmann::json step_to_json(const StepResult& step);

/// Avoidance decoding over every prompt. Returns the records written.
std::vector<BranchRecord> cmd_generate(const RunConfig& cfg);

/// Greedy or temperature baseline, optionally with instruction feedback.
std::vector<BranchRecord> cmd_baseline(const RunConfig& cfg);

/// Pairwise diversity report of a branches file. Sent-Sim uses the embedder
/// from `cfg`. When `judge` is given, degeneration and diversity verdicts are
/// added under "judge".
nlohmann::json cmd_eval(const std::filesystem::path& branches_file,
                        const std::vector<metrics::Metric>& metric_set, const RunConfig& cfg,
                        judge::JudgeClient* judge = nullptr);

struct ProbeReport {
  struct Entry {
    std::string prompt_id;
    std::size_t branch_idx = 0;
    double dormant_ratio = 0.0;
  };
  std::vector<Entry> entries;
  /// Mean ratio per branch index across prompts.
  std::vector<double> per_branch_mean;
  double slope = 0.0;

  std::vector<nlohmann::json> jsonl() const;
  nlohmann::json slope_json() const;
};

/// Ratios from a trace file: JSONL {"branch_idx", "steps": [[activation, ...], ...]}.
ProbeReport probe_trace(const std::filesystem::path& trace_file, double threshold);

/// Ratios by re-running a branches file teacher-forced through the model.
ProbeReport probe_branches(const std::filesystem::path& branches_file, const RunConfig& cfg);

/// Ratios from a fresh generation run. `avoidance` selects the decoder;
/// otherwise cfg.mode picks the baseline.
ProbeReport probe_live(const RunConfig& cfg, bool avoidance);

/// Judges every branch for degeneration and every prompt's branch set for
/// diversity (the set size is the prompt's branch count).
nlohmann::json cmd_judge(const std::filesystem::path& branches_file, judge::JudgeClient& client,
                         bool degeneration, bool diversity);

}  // namespace avoid::cli

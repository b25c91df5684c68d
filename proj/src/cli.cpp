// SPDX-License-Identifier: Apache-2.0

#include "avoid/cli.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "avoid/instrumentation.hpp"

namespace avoid::cli {

using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) throw ConfigError("unknown config field '" + where + "." + k + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + where + key + "' has the wrong type: " + j[key].dump());
  }
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (j[key].is_null()) {
    out.reset();
    return;
  }
  T v{};
  read_field(j, key, v, where);
  out = v;
}

void read_path(const json& j, const char* key, std::optional<std::filesystem::path>& out,
               const std::filesystem::path& base) {
  std::optional<std::string> s;
  read_optional(j, key, s, "");
  if (!s) {
    if (j.contains(key)) out.reset();
    return;
  }
  std::filesystem::path p(*s);
  out = p.is_relative() && !base.empty() ? base / p : p;
}

json opt_path(const std::optional<std::filesystem::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

template <typename T>
json opt_value(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string schedule_name(ScheduleMode m) { return m == ScheduleMode::kProse ? "prose" : "verbatim"; }
std::string aggregation_name(AggregationMode m) { return m == AggregationMode::kMax ? "max" : "sum"; }
std::string mode_name(BaselineMode m) { return m == BaselineMode::kGreedy ? "greedy" : "temperature"; }

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t prompt_idx, std::size_t branch_idx) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(prompt_idx), static_cast<std::uint32_t>(branch_idx)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

GenerateOptions generate_options(const RunConfig& cfg) {
  GenerateOptions o;
  o.max_tokens = cfg.max_tokens;
  o.stop_token = cfg.stop_token;
  o.diagnostics = cfg.diagnostics;
  return o;
}

// Runs fn(i) for every prompt index, prompts in parallel, rethrowing the
// first failure after the loop.
template <typename Fn>
void for_each_prompt(std::size_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<BranchRecord> flatten(std::vector<std::vector<BranchRecord>>& per_prompt) {
  std::vector<BranchRecord> out;
  for (auto& v : per_prompt) {
    for (auto& r : v) out.push_back(std::move(r));
  }
  return out;
}

void write_records(const RunConfig& cfg, const std::vector<BranchRecord>& records) {
  if (!cfg.out_path) return;
  std::vector<json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(r.to_json());
  write_jsonl(*cfg.out_path, lines);
}

std::vector<Prompt> require_prompts(const RunConfig& cfg) {
  if (!cfg.prompts_path) throw ConfigError("no prompts file given (--prompts or \"prompts\")");
  return load_prompts(*cfg.prompts_path);
}

// Branches grouped by prompt id, in order of first appearance.
std::vector<std::pair<std::string, std::vector<BranchRecord>>> group_by_prompt(
    std::vector<BranchRecord> records) {
  std::vector<std::pair<std::string, std::vector<BranchRecord>>> groups;
  std::map<std::string, std::size_t> index;
  for (auto& r : records) {
    auto [it, inserted] = index.emplace(r.prompt_id, groups.size());
    if (inserted) groups.emplace_back(r.prompt_id, std::vector<BranchRecord>{});
    groups[it->second].second.push_back(std::move(r));
  }
  return groups;
}

ProbeReport finish_probe(std::vector<ProbeReport::Entry> entries) {
  ProbeReport rep;
  rep.entries = std::move(entries);
  std::map<std::size_t, std::pair<double, std::size_t>> by_branch;
  for (const auto& e : rep.entries) {
    auto& [sum, n] = by_branch[e.branch_idx];
    sum += e.dormant_ratio;
    ++n;
  }
  for (const auto& [idx, acc] : by_branch) {
    rep.per_branch_mean.push_back(acc.first / static_cast<double>(acc.second));
  }
  if (rep.per_branch_mean.size() >= 2) rep.slope = trend_slope(rep.per_branch_mean);
  return rep;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base) {
  check_keys(j, {"model", "vocab_path", "embedder", "penalty", "policy", "branches", "max_tokens",
                 "window", "seed", "prompts", "out", "diagnostics", "mode", "temperature",
                 "feedback_prompt", "stop_token", "probe_threshold"},
             "config");
  RunConfig c;
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"vocab_size", "model_dim", "num_layers", "num_heads", "ffn_dim", "max_context",
                   "weights_path"},
               "model");
    read_field(m, "vocab_size", c.model.vocab_size, "model.");
    read_field(m, "model_dim", c.model.model_dim, "model.");
    read_field(m, "num_layers", c.model.num_layers, "model.");
    read_field(m, "num_heads", c.model.num_heads, "model.");
    read_field(m, "ffn_dim", c.model.ffn_dim, "model.");
    read_field(m, "max_context", c.model.max_context, "model.");
    read_path(m, "weights_path", c.model.weights_path, base);
  }
  read_path(j, "vocab_path", c.vocab_path, base);
  if (j.contains("embedder")) {
    const auto& e = j["embedder"];
    check_keys(e, {"embed_dim", "table_path"}, "embedder");
    read_field(e, "embed_dim", c.embed_dim, "embedder.");
    read_path(e, "table_path", c.embedding_table_path, base);
  }
  if (j.contains("penalty")) {
    const auto& p = j["penalty"];
    check_keys(p, {"beta", "delta", "t0", "schedule", "aggregation"}, "penalty");
    read_field(p, "beta", c.penalty.beta, "penalty.");
    read_field(p, "delta", c.penalty.delta, "penalty.");
    read_field(p, "t0", c.penalty.t0, "penalty.");
    std::string s = schedule_name(c.penalty.schedule_mode);
    read_field(p, "schedule", s, "penalty.");
    if (s == "prose") c.penalty.schedule_mode = ScheduleMode::kProse;
    else if (s == "verbatim") c.penalty.schedule_mode = ScheduleMode::kVerbatim;
    else throw ConfigError("penalty.schedule must be prose or verbatim, got '" + s + "'");
    std::string a = aggregation_name(c.penalty.aggregation_mode);
    read_field(p, "aggregation", a, "penalty.");
    if (a == "max") c.penalty.aggregation_mode = AggregationMode::kMax;
    else if (a == "sum") c.penalty.aggregation_mode = AggregationMode::kSum;
    else throw ConfigError("penalty.aggregation must be max or sum, got '" + a + "'");
  }
  if (j.contains("policy")) {
    const auto& p = j["policy"];
    check_keys(p, {"k_mass_threshold", "k_max", "alpha_max"}, "policy");
    read_field(p, "k_mass_threshold", c.policy.k_mass_threshold, "policy.");
    read_field(p, "k_max", c.policy.k_max, "policy.");
    read_field(p, "alpha_max", c.policy.alpha_max, "policy.");
  }
  read_field(j, "branches", c.branches, "");
  read_field(j, "max_tokens", c.max_tokens, "");
  read_optional(j, "window", c.window, "");
  read_field(j, "seed", c.seed, "");
  read_path(j, "prompts", c.prompts_path, base);
  read_path(j, "out", c.out_path, base);
  read_field(j, "diagnostics", c.diagnostics, "");
  std::string mode = mode_name(c.mode);
  read_field(j, "mode", mode, "");
  if (mode == "greedy") c.mode = BaselineMode::kGreedy;
  else if (mode == "temperature") c.mode = BaselineMode::kTemperature;
  else throw ConfigError("mode must be greedy or temperature, got '" + mode + "'");
  read_field(j, "temperature", c.temperature, "");
  read_field(j, "feedback_prompt", c.feedback_prompt, "");
  read_optional(j, "stop_token", c.stop_token, "");
  read_field(j, "probe_threshold", c.probe_threshold, "");
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

json RunConfig::to_json() const {
  return {
      {"model",
       {{"vocab_size", model.vocab_size},
        {"model_dim", model.model_dim},
        {"num_layers", model.num_layers},
        {"num_heads", model.num_heads},
        {"ffn_dim", model.ffn_dim},
        {"max_context", model.max_context},
        {"weights_path", opt_path(model.weights_path)}}},
      {"vocab_path", opt_path(vocab_path)},
      {"embedder", {{"embed_dim", embed_dim}, {"table_path", opt_path(embedding_table_path)}}},
      {"penalty",
       {{"beta", penalty.beta},
        {"delta", penalty.delta},
        {"t0", penalty.t0},
        {"schedule", schedule_name(penalty.schedule_mode)},
        {"aggregation", aggregation_name(penalty.aggregation_mode)}}},
      {"policy",
       {{"k_mass_threshold", policy.k_mass_threshold},
        {"k_max", policy.k_max},
        {"alpha_max", policy.alpha_max}}},
      {"branches", branches},
      {"max_tokens", max_tokens},
      {"window", opt_value(window)},
      {"seed", seed},
      {"prompts", opt_path(prompts_path)},
      {"out", opt_path(out_path)},
      {"diagnostics", diagnostics},
      {"mode", mode_name(mode)},
      {"temperature", temperature},
      {"feedback_prompt", feedback_prompt},
      {"stop_token", opt_value(stop_token)},
      {"probe_threshold", probe_threshold},
  };
}

std::string RunConfig::fingerprint() const {
  json j = to_json();
  j.erase("out");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

void RunConfig::validate() const {
  penalty.validate();
  policy.validate();
  if (branches == 0) throw ConfigError("branches must be >= 1");
  if (window && *window == 0) throw ConfigError("window must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (embed_dim == 0) throw ConfigError("embedder.embed_dim must be >= 1");
  if (!(probe_threshold >= 0.0)) throw ConfigError("probe_threshold must be >= 0");
}

Runtime Runtime::build(const RunConfig& cfg) {
  cfg.validate();
  Runtime rt;
  if (cfg.vocab_path) {
    rt.tokenizer = std::make_unique<VocabTokenizer>(VocabTokenizer::from_file(*cfg.vocab_path));
  } else {
    rt.tokenizer = std::make_unique<ByteTokenizer>();
  }
  ModelSpec spec = cfg.model;
  if (spec.vocab_size == 0) spec.vocab_size = rt.tokenizer->vocab_size();
  if (spec.vocab_size != rt.tokenizer->vocab_size()) {
    throw ConfigError("model.vocab_size " + std::to_string(spec.vocab_size) +
                      " does not match tokenizer vocabulary " +
                      std::to_string(rt.tokenizer->vocab_size()));
  }
  spec.seed = cfg.seed;
  rt.model = std::make_unique<ToyTransformer>(ToyTransformer::init(spec));
  if (cfg.embedding_table_path) {
    rt.embedder = std::make_unique<ToyEmbedder>(
        ToyEmbedder::from_file(*cfg.embedding_table_path, spec.vocab_size));
  } else {
    rt.embedder = std::make_unique<ToyEmbedder>(ToyEmbedder::seeded(spec.vocab_size, cfg.embed_dim, cfg.seed));
  }
  return rt;
}

std::vector<Prompt> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open prompts file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("prompts file " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw ParseError("prompts file must hold a JSON list");
  std::vector<Prompt> out;
  std::set<std::string> seen;
  for (const auto& p : j) {
    if (!p.is_object() || !p.contains("prompt_id") || !p.contains("text") ||
        !p["prompt_id"].is_string() || !p["text"].is_string()) {
      throw ParseError("each prompt needs string fields prompt_id and text");
    }
    Prompt pr{p["prompt_id"].get<std::string>(), p["text"].get<std::string>()};
    if (!seen.insert(pr.prompt_id).second) throw ParseError("duplicate prompt_id '" + pr.prompt_id + "'");
    out.push_back(std::move(pr));
  }
  if (out.empty()) throw ParseError("prompts file is empty");
  return out;
}

json BranchRecord::to_json() const {
  json j = {{"prompt_id", prompt_id},
            {"branch_idx", branch_idx},
            {"text", text},
            {"tokens", tokens},
            {"config_fingerprint", config_fingerprint},
            {"truncated", truncated}};
  if (diagnostics) j["diagnostics"] = *diagnostics;
  return j;
}

BranchRecord BranchRecord::from_json(const json& j) {
  BranchRecord r;
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.branch_idx = j.at("branch_idx").get<std::size_t>();
  r.text = j.at("text").get<std::string>();
  if (j.contains("tokens")) r.tokens = j["tokens"].get<std::vector<TokenId>>();
  if (j.contains("config_fingerprint")) r.config_fingerprint = j["config_fingerprint"].get<std::string>();
  if (j.contains("truncated")) r.truncated = j["truncated"].get<bool>();
  if (j.contains("diagnostics")) r.diagnostics = j["diagnostics"];
  return r;
}

std::vector<BranchRecord> read_branches(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open branches file " + path.string());
  std::vector<BranchRecord> out;
  std::set<std::pair<std::string, std::size_t>> keys;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(BranchRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    if (!keys.emplace(out.back().prompt_id, out.back().branch_idx).second) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate (prompt_id, branch_idx)");
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines) {
  auto tmp = path;
  tmp += ".partial";
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write " + path.string());
      for (const auto& l : lines) out << dump_line(l) << '\n';
      out.flush();
      if (!out) throw Error("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

json step_to_json(const StepResult& step) {
  json cands = json::array();
  for (const auto& c : step.candidates) {
    cands.push_back({{"token", c.token},
                     {"prob", c.prob},
                     {"csp", c.csp_per_negative},
                     {"nsp", c.nsp_per_negative},
                     {"hybrid", c.hybrid_per_negative},
                     {"s_final", c.s_final},
                     {"score", c.final_score}});
  }
  return {{"token", step.token}, {"k", step.k},         {"alpha", step.alpha},
          {"gamma", step.gamma}, {"chosen", step.chosen}, {"candidates", cands}};
}

namespace {

BranchRecord make_record(const RunConfig& cfg, const Runtime& rt, const std::string& fp,
                         const std::string& prompt_id, std::size_t idx, const BranchResult& b) {
  BranchRecord r;
  r.prompt_id = prompt_id;
  r.branch_idx = idx;
  r.tokens = b.tokens;
  r.text = rt.tokenizer->decode(b.tokens);
  r.config_fingerprint = fp;
  r.truncated = b.truncated;
  if (cfg.diagnostics) {
    json steps = json::array();
    for (const auto& s : b.steps) steps.push_back(step_to_json(s));
    r.diagnostics = std::move(steps);
  }
  return r;
}

// Baseline branches for one prompt. Fills `probe` with per-branch step
// fractions when probing is requested.
std::vector<BranchResult> baseline_branches(const RunConfig& cfg, const Runtime& rt,
                                            const Prompt& prompt, std::size_t prompt_idx,
                                            const GenerateOptions& opts) {
  std::vector<BranchResult> out;
  std::vector<std::string> previous;
  const std::size_t room = rt.model->max_context() - 1;
  for (std::size_t b = 0; b < cfg.branches; ++b) {
    const std::string text = cfg.feedback_prompt ? feedback_prompt(prompt.text, previous) : prompt.text;
    auto tokens = rt.tokenizer->encode(text);
    bool clipped = false;
    if (tokens.size() > room) {
      // keep the most recent context
      tokens.erase(tokens.begin(), tokens.end() - static_cast<std::ptrdiff_t>(room));
      clipped = true;
    }
    BranchResult r = cfg.mode == BaselineMode::kGreedy
                         ? generate_greedy(*rt.model, tokens, opts)
                         : generate_sampled(*rt.model, tokens, cfg.temperature,
                                            derive_seed(cfg.seed, prompt_idx, b), opts);
    r.truncated = r.truncated || clipped;
    if (cfg.feedback_prompt) previous.push_back(rt.tokenizer->decode(r.tokens));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<BranchRecord> cmd_generate(const RunConfig& cfg) {
  const Runtime rt = Runtime::build(cfg);
  const auto prompts = require_prompts(cfg);
  const std::string fp = cfg.fingerprint();
  const AvoidanceDecoder decoder(*rt.model, *rt.embedder, cfg.penalty, cfg.policy);
  const auto opts = generate_options(cfg);

  std::vector<std::vector<BranchRecord>> per_prompt(prompts.size());
  for_each_prompt(prompts.size(), [&](std::size_t p) {
    const auto tokens = rt.tokenizer->encode(prompts[p].text);
    const auto branches = decoder.generate_branches(tokens, cfg.branches, opts, cfg.window);
    for (std::size_t b = 0; b < branches.size(); ++b) {
      per_prompt[p].push_back(make_record(cfg, rt, fp, prompts[p].prompt_id, b, branches[b]));
    }
  });
  auto records = flatten(per_prompt);
  write_records(cfg, records);
  return records;
}

std::vector<BranchRecord> cmd_baseline(const RunConfig& cfg) {
  const Runtime rt = Runtime::build(cfg);
  const auto prompts = require_prompts(cfg);
  const std::string fp = cfg.fingerprint();
  const auto opts = generate_options(cfg);

  std::vector<std::vector<BranchRecord>> per_prompt(prompts.size());
  for_each_prompt(prompts.size(), [&](std::size_t p) {
    const auto branches = baseline_branches(cfg, rt, prompts[p], p, opts);
    for (std::size_t b = 0; b < branches.size(); ++b) {
      per_prompt[p].push_back(make_record(cfg, rt, fp, prompts[p].prompt_id, b, branches[b]));
    }
  });
  auto records = flatten(per_prompt);
  write_records(cfg, records);
  return records;
}

json cmd_eval(const std::filesystem::path& branches_file,
              const std::vector<metrics::Metric>& metric_set, const RunConfig& cfg,
              judge::JudgeClient* judge) {
  auto groups = group_by_prompt(read_branches(branches_file));
  if (groups.empty()) throw ConfigError("branches file holds no records");
  const Runtime rt = Runtime::build(cfg);

  std::vector<metrics::PromptBranches> prompts;
  for (auto& [id, recs] : groups) {
    metrics::PromptBranches pb{id, {}};
    for (auto& r : recs) {
      auto tokens = r.tokens.empty() ? rt.tokenizer->encode(r.text) : r.tokens;
      pb.branches.push_back({r.text, std::move(tokens)});
    }
    prompts.push_back(std::move(pb));
  }
  json out = metrics::report(prompts, metric_set, rt.embedder.get()).to_json(100.0);
  if (judge != nullptr) out["judge"] = cmd_judge(branches_file, *judge, true, true);
  return out;
}

std::vector<json> ProbeReport::jsonl() const {
  std::vector<json> lines;
  for (const auto& e : entries) {
    json j = {{"branch_idx", e.branch_idx}, {"dormant_ratio", e.dormant_ratio}};
    if (!e.prompt_id.empty()) j["prompt_id"] = e.prompt_id;
    lines.push_back(std::move(j));
  }
  return lines;
}

json ProbeReport::slope_json() const { return {{"slope", slope}, {"per_branch_mean", per_branch_mean}}; }

ProbeReport probe_trace(const std::filesystem::path& trace_file, double threshold) {
  std::ifstream in(trace_file);
  if (!in) throw ConfigError("cannot open trace file " + trace_file.string());
  std::vector<ProbeReport::Entry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      std::vector<double> fractions;
      for (const auto& step : j.at("steps")) {
        fractions.push_back(dormant_ratio(step.get<std::vector<float>>(), threshold));
      }
      if (fractions.empty()) {
        throw ConfigError(trace_file.string() + ":" + std::to_string(lineno) + ": missing traces");
      }
      ProbeReport::Entry e;
      e.branch_idx = j.at("branch_idx").get<std::size_t>();
      if (j.contains("prompt_id")) e.prompt_id = j["prompt_id"].get<std::string>();
      e.dormant_ratio = branch_dormant_ratio(fractions);
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ParseError(trace_file.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (entries.empty()) throw ConfigError("trace file holds no branches");
  return finish_probe(std::move(entries));
}

ProbeReport probe_branches(const std::filesystem::path& branches_file, const RunConfig& cfg) {
  const Runtime rt = Runtime::build(cfg);
  std::map<std::string, std::string> prompt_text;
  for (auto& p : require_prompts(cfg)) prompt_text.emplace(p.prompt_id, p.text);

  std::vector<ProbeReport::Entry> entries;
  for (const auto& r : read_branches(branches_file)) {
    auto it = prompt_text.find(r.prompt_id);
    if (it == prompt_text.end()) throw ConfigError("prompt '" + r.prompt_id + "' not in prompts file");
    if (r.tokens.empty()) {
      throw ConfigError("missing traces: branch " + std::to_string(r.branch_idx) + " of '" +
                        r.prompt_id + "' has no tokens");
    }
    auto seq = rt.tokenizer->encode(it->second);
    const std::size_t start = seq.size();
    seq.insert(seq.end(), r.tokens.begin(), r.tokens.end());
    const auto outs = rt.model->forward_sequence(seq);
    std::vector<double> fractions;
    for (std::size_t p = start; p < outs.size(); ++p) {
      fractions.push_back(dormant_fraction(outs[p].ffn_activations, cfg.probe_threshold));
    }
    entries.push_back({r.prompt_id, r.branch_idx, branch_dormant_ratio(fractions)});
  }
  if (entries.empty()) throw ConfigError("branches file holds no records");
  return finish_probe(std::move(entries));
}

ProbeReport probe_live(const RunConfig& cfg, bool avoidance) {
  const Runtime rt = Runtime::build(cfg);
  const auto prompts = require_prompts(cfg);
  auto opts = generate_options(cfg);
  opts.probe_threshold = cfg.probe_threshold;

  std::vector<std::vector<ProbeReport::Entry>> per_prompt(prompts.size());
  for_each_prompt(prompts.size(), [&](std::size_t p) {
    std::vector<BranchResult> branches;
    if (avoidance) {
      const AvoidanceDecoder decoder(*rt.model, *rt.embedder, cfg.penalty, cfg.policy);
      branches = decoder.generate_branches(rt.tokenizer->encode(prompts[p].text), cfg.branches,
                                           opts, cfg.window);
    } else {
      branches = baseline_branches(cfg, rt, prompts[p], p, opts);
    }
    for (std::size_t b = 0; b < branches.size(); ++b) {
      if (branches[b].dormant_fractions.empty()) {
        throw ConfigError("missing traces: branch " + std::to_string(b) + " generated no tokens");
      }
      per_prompt[p].push_back(
          {prompts[p].prompt_id, b, branch_dormant_ratio(branches[b].dormant_fractions)});
    }
  });
  std::vector<ProbeReport::Entry> entries;
  for (auto& v : per_prompt) entries.insert(entries.end(), v.begin(), v.end());
  return finish_probe(std::move(entries));
}

json cmd_judge(const std::filesystem::path& branches_file, judge::JudgeClient& client,
               bool degeneration, bool diversity) {
  const auto groups = group_by_prompt(read_branches(branches_file));
  if (groups.empty()) throw ConfigError("branches file holds no records");
  json out = json::object();
  if (degeneration) {
    std::vector<judge::DegenVerdict> verdicts;
    json per_branch = json::array();
    for (const auto& [id, recs] : groups) {
      for (const auto& r : recs) {
        verdicts.push_back(client.judge_degeneration(r.text));
        const auto& v = verdicts.back();
        per_branch.push_back(
            {{"prompt_id", id},
             {"branch_idx", r.branch_idx},
             {"degeneration_score", v.degeneration_score},
             {"label", v.label == judge::DegenVerdict::Label::kOk ? "OK" : "DEGENERATED"},
             {"issues", v.issues}});
      }
    }
    const auto summary = judge::batch_degen_mean(verdicts);
    out["degeneration"] = {{"per_branch", per_branch},
                           {"mean", summary.mean},
                           {"exceeds_threshold", summary.exceeds_threshold}};
  }
  if (diversity) {
    json per_prompt = json::object();
    for (const auto& [id, recs] : groups) {
      std::vector<std::string> texts;
      for (const auto& r : recs) texts.push_back(r.text);
      const auto v = client.judge_diversity(texts, texts.size());
      per_prompt[id] = {{"diversity_score", v.diversity_score}, {"justification", v.justification}};
    }
    out["diversity"] = per_prompt;
  }
  return out;
}

}  // namespace avoid::cli

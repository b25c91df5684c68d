// SPDX-License-Identifier: Apache-2.0
//
// avoidance: generate, baseline, eval, probe and judge subcommands.
// Exit codes: 0 ok, 1 usage or config error, 2 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "avoid/cli.hpp"

namespace {

using avoid::cli::RunConfig;
using json = nlohmann::json;

// Flags shared by the run-style subcommands. Each maps onto a config field
// and, when given, overrides the config file.
struct RunFlags {
  std::string config;
  std::string prompts;
  std::size_t branches = 0;
  std::size_t max_tokens = 0;
  double beta = 0, delta = 0;
  std::size_t t0 = 0;
  std::string schedule;
  std::string agg;
  std::size_t window = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool diagnostics = false;
  std::string mode;
  double temperature = 0;
  bool feedback_prompt = false;
  double threshold = 0;

  std::vector<std::pair<std::string, CLI::Option*>> opts;

  void add_common(CLI::App& app) {
    opts.emplace_back("config", app.add_option("--config", config, "JSON run config")->check(CLI::ExistingFile));
    opts.emplace_back("prompts", app.add_option("--prompts", prompts, "JSON list of {prompt_id, text}"));
    opts.emplace_back("branches", app.add_option("--branches", branches, "branches per prompt"));
    opts.emplace_back("max_tokens", app.add_option("--max-tokens", max_tokens, "tokens per branch"));
    opts.emplace_back("beta", app.add_option("--beta", beta, "penalty scale"));
    opts.emplace_back("delta", app.add_option("--delta", delta, "gamma floor"));
    opts.emplace_back("t0", app.add_option("--t0", t0, "gamma midpoint step"));
    opts.emplace_back("schedule", app.add_option("--schedule", schedule, "gamma schedule")
                                      ->check(CLI::IsMember({"prose", "verbatim"})));
    opts.emplace_back("aggregation", app.add_option("--agg", agg, "penalty aggregation")
                                         ->check(CLI::IsMember({"max", "sum"})));
    opts.emplace_back("window", app.add_option("--window", window, "keep only the last W negatives"));
    opts.emplace_back("seed", app.add_option("--seed", seed, "model, embedder and sampler seed"));
    opts.emplace_back("out", app.add_option("--out", out, "output file"));
    opts.emplace_back("diagnostics", app.add_flag("--diagnostics", diagnostics, "keep per-step scores"));
  }

  void add_baseline(CLI::App& app) {
    opts.emplace_back("mode", app.add_option("--mode", mode, "baseline decoding")
                                  ->check(CLI::IsMember({"greedy", "temperature"})));
    opts.emplace_back("temperature", app.add_option("--temperature", temperature, "sampling temperature"));
    opts.emplace_back("feedback_prompt",
                      app.add_flag("--feedback-prompt", feedback_prompt,
                                   "prepend earlier outputs with a do-not-resemble instruction"));
  }

  void add_threshold(CLI::App& app) {
    opts.emplace_back("probe_threshold",
                      app.add_option("--threshold", threshold, "dormant activation threshold"));
  }

  bool given(const std::string& key) const {
    for (const auto& [k, o] : opts) {
      if (k == key) return o->count() > 0;
    }
    return false;
  }

  // Config file first, then flags on top, validated as one JSON document so
  // the same rules apply to both.
  RunConfig resolve() const {
    json j = json::object();
    std::filesystem::path base;
    if (given("config")) {
      std::ifstream in(config);
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw avoid::ConfigError("config file " + config + " is not valid JSON: " + e.what());
      }
      base = std::filesystem::path(config).parent_path();
    }
    RunConfig cfg = RunConfig::from_json(j, base);
    if (given("prompts")) cfg.prompts_path = prompts;
    if (given("branches")) cfg.branches = branches;
    if (given("max_tokens")) cfg.max_tokens = max_tokens;
    if (given("beta")) cfg.penalty.beta = beta;
    if (given("delta")) cfg.penalty.delta = delta;
    if (given("t0")) cfg.penalty.t0 = t0;
    if (given("schedule")) {
      cfg.penalty.schedule_mode = schedule == "prose" ? avoid::ScheduleMode::kProse : avoid::ScheduleMode::kVerbatim;
    }
    if (given("aggregation")) {
      cfg.penalty.aggregation_mode = agg == "max" ? avoid::AggregationMode::kMax : avoid::AggregationMode::kSum;
    }
    if (given("window")) cfg.window = window;
    if (given("seed")) cfg.seed = seed;
    if (given("out")) cfg.out_path = out;
    if (given("diagnostics")) cfg.diagnostics = diagnostics;
    if (given("mode")) {
      cfg.mode = mode == "greedy" ? avoid::cli::BaselineMode::kGreedy : avoid::cli::BaselineMode::kTemperature;
    }
    if (given("temperature")) cfg.temperature = temperature;
    if (given("feedback_prompt")) cfg.feedback_prompt = feedback_prompt;
    if (given("probe_threshold")) cfg.probe_threshold = threshold;
    cfg.validate();
    return cfg;
  }
};

struct JudgeFlags {
  std::string fixtures;
  std::string record;
  std::string model;
  CLI::Option* fixtures_opt = nullptr;

  void add(CLI::App& app) {
    fixtures_opt = app.add_option("--fixtures", fixtures, "replay recorded judge exchanges from DIR")
                       ->check(CLI::ExistingDirectory);
    app.add_option("--record", record, "write judge exchanges to DIR");
    app.add_option("--judge-model", model, "judge model name (default $JUDGE_MODEL or gpt-4o)");
  }
};

// Owns whichever transports the flags ask for.
struct JudgeSetup {
  std::unique_ptr<avoid::judge::Transport> base;
  std::unique_ptr<avoid::judge::Transport> recorder;
  std::unique_ptr<avoid::judge::JudgeClient> client;
};

// Returns an empty setup when no judge is configured.
JudgeSetup make_judge(const JudgeFlags& f) {
  JudgeSetup s;
  const auto env = avoid::judge::EndpointConfig::from_env();
  if (f.fixtures_opt->count() > 0) {
    s.base = std::make_unique<avoid::judge::FixtureTransport>(f.fixtures);
  } else if (env) {
    s.base = std::make_unique<avoid::judge::HttpTransport>(env->url, env->api_key);
  } else {
    return s;
  }
  avoid::judge::Transport* t = s.base.get();
  if (!f.record.empty()) {
    s.recorder = std::make_unique<avoid::judge::RecordingTransport>(*t, f.record);
    t = s.recorder.get();
  }
  avoid::judge::ClientOptions opts;
  opts.model = !f.model.empty() ? f.model : (env && !env->model.empty() ? env->model : "gpt-4o");
  s.client = std::make_unique<avoid::judge::JudgeClient>(*t, opts);
  return s;
}

void emit(const json& j, const std::optional<std::filesystem::path>& out) {
  const std::string text = j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
  if (!out) {
    std::cout << text;
    return;
  }
  auto tmp = *out;
  tmp += ".partial";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw avoid::ConfigError("cannot write " + out->string());
    f << text;
    if (!f) throw avoid::Error("write failed for " + out->string());
  }
  std::filesystem::rename(tmp, *out);
}

void summarize(const std::vector<avoid::cli::BranchRecord>& records, const RunConfig& cfg) {
  std::cerr << "wrote " << records.size() << " branches";
  if (cfg.out_path) std::cerr << " to " << cfg.out_path->string();
  std::cerr << " (config " << cfg.fingerprint() << ")\n";
}

void print_records(const std::vector<avoid::cli::BranchRecord>& records) {
  for (const auto& r : records) {
    std::cout << r.to_json().dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Avoidance decoding on a toy transformer"};
  app.require_subcommand(1);

  RunFlags gen_flags;
  auto* gen = app.add_subcommand("generate", "avoidance-decode branches for every prompt");
  gen_flags.add_common(*gen);

  RunFlags base_flags;
  auto* base = app.add_subcommand("baseline", "greedy or temperature baseline branches");
  base_flags.add_common(*base);
  base_flags.add_baseline(*base);

  RunFlags eval_flags;
  JudgeFlags eval_judge;
  std::string eval_file;
  std::string metric_list = "bleu,rouge_l,meteor,sent_sim";
  auto* eval = app.add_subcommand("eval", "pairwise similarity report for a branches file");
  eval->add_option("branches_file", eval_file, "branches JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--metrics", metric_list, "comma-separated: bleu, rouge_l, meteor, sent_sim");
  eval_flags.add_common(*eval);
  eval_judge.add(*eval);

  RunFlags probe_flags;
  std::string probe_file;
  std::string trace_file;
  bool probe_baseline = false;
  auto* probe = app.add_subcommand("probe", "dormant-neuron ratios per branch and their trend");
  auto* probe_file_opt = probe->add_option("branches_file", probe_file, "branches JSONL to re-run")
                             ->check(CLI::ExistingFile);
  auto* trace_opt = probe->add_option("--trace", trace_file, "activation trace JSONL")
                        ->check(CLI::ExistingFile)
                        ->excludes(probe_file_opt);
  probe->add_flag("--baseline", probe_baseline, "live run with the baseline decoder instead");
  probe_flags.add_common(*probe);
  probe_flags.add_baseline(*probe);
  probe_flags.add_threshold(*probe);

  JudgeFlags judge_flags;
  std::string judge_file;
  bool only_degen = false, only_div = false;
  std::string judge_out;
  auto* judge = app.add_subcommand("judge", "LLM-judge degeneration and diversity verdicts");
  judge->add_option("branches_file", judge_file, "branches JSONL")->required()->check(CLI::ExistingFile);
  judge->add_flag("--degeneration", only_degen, "only degeneration verdicts");
  judge->add_flag("--diversity", only_div, "only diversity verdicts");
  auto* judge_out_opt = judge->add_option("--out", judge_out, "report file");
  judge_flags.add(*judge);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? avoid::cli::kOk : avoid::cli::kUsageError;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = gen_flags.resolve();
      const auto records = avoid::cli::cmd_generate(cfg);
      if (cfg.out_path) summarize(records, cfg);
      else print_records(records);
    } else if (base->parsed()) {
      const auto cfg = base_flags.resolve();
      const auto records = avoid::cli::cmd_baseline(cfg);
      if (cfg.out_path) summarize(records, cfg);
      else print_records(records);
    } else if (eval->parsed()) {
      auto cfg = eval_flags.resolve();
      std::vector<avoid::metrics::Metric> metric_set;
      std::stringstream ss(metric_list);
      for (std::string name; std::getline(ss, name, ',');) {
        if (!name.empty()) metric_set.push_back(avoid::metrics::parse_metric(name));
      }
      if (metric_set.empty()) throw avoid::ConfigError("--metrics names no metric");
      const auto js = make_judge(eval_judge);
      emit(avoid::cli::cmd_eval(eval_file, metric_set, cfg, js.client.get()), cfg.out_path);
    } else if (probe->parsed()) {
      const auto cfg = probe_flags.resolve();
      avoid::cli::ProbeReport rep;
      if (trace_opt->count() > 0) {
        rep = avoid::cli::probe_trace(trace_file, cfg.probe_threshold);
      } else if (probe_file_opt->count() > 0) {
        rep = avoid::cli::probe_branches(probe_file, cfg);
      } else {
        if (!cfg.prompts_path) {
          throw avoid::ConfigError("probe needs a branches file, --trace, or a config with prompts");
        }
        rep = avoid::cli::probe_live(cfg, !probe_baseline);
      }
      if (cfg.out_path) avoid::cli::write_jsonl(*cfg.out_path, rep.jsonl());
      json out = rep.slope_json();
      if (!cfg.out_path) out["branches"] = rep.jsonl();
      std::cout << out.dump(2) << '\n';
    } else if (judge->parsed()) {
      auto js = make_judge(judge_flags);
      if (!js.client) {
        throw avoid::ConfigError("no judge configured: set JUDGE_API_URL or pass --fixtures");
      }
      const bool degen = only_degen || !only_div;
      const bool div = only_div || !only_degen;
      std::optional<std::filesystem::path> out;
      if (judge_out_opt->count() > 0) out = judge_out;
      emit(avoid::cli::cmd_judge(judge_file, *js.client, degen, div), out);
    }
  } catch (const avoid::judge::MalformedResponseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return avoid::cli::kRuntimeError;
  } catch (const avoid::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return avoid::cli::kUsageError;
  } catch (const avoid::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return avoid::cli::kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return avoid::cli::kRuntimeError;
  }
  return avoid::cli::kOk;
}

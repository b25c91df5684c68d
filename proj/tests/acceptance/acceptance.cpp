// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avoid/cli.hpp"
#include "avoid/decoder.hpp"
#include "avoid/instrumentation.hpp"
#include "avoid/judge.hpp"
#include "avoid/metrics.hpp"
#include "avoid/penalty.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace avoid;
using json = nlohmann::json;
using avoid::testing::slurp;

namespace {

const std::filesystem::path kSource = AVOID_SOURCE_DIR;
const std::filesystem::path kFixtures = AVOID_TEST_FIXTURES;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

GenerateOptions opts(std::size_t n) {
  GenerateOptions o;
  o.max_tokens = n;
  return o;
}

cli::RunConfig toy64_config() { return cli::RunConfig::from_file(kSource / "configs/toy64.json"); }

std::filesystem::path one_prompt_file(const std::filesystem::path& dir) {
  const auto prompts = cli::load_prompts(kSource / "data/prompts.json");
  const auto path = dir / "one_prompt.json";
  std::ofstream(path) << json::array({{{"prompt_id", prompts[0].prompt_id}, {"text", prompts[0].text}}}).dump();
  return path;
}

// 1 --------------------------------------------------------------------------
Outcome greedy_reduction() {
  Timer timer;
  const auto model = ToyTransformer::init(avoid::testing::toy64_spec());
  const auto embedder = ToyEmbedder::seeded(64, 32, 7);
  const std::vector<TokenId> prompt{3, 1, 4, 1, 5};
  const auto greedy = generate_greedy(model, prompt, opts(64));
  if (greedy.tokens.size() != 64) return {false, "greedy produced fewer than 64 tokens"};

  const AvoidanceDecoder plain(model, embedder, {}, {});
  const bool empty_ok = plain.generate_branch(prompt, NegativeMemory{}, opts(64)).tokens == greedy.tokens;

  NegativeMemory mem;
  mem.add(plain.ingest_negative(prompt, greedy.tokens));
  PenaltyConfig zero_beta;
  zero_beta.beta = 0.0;
  const AvoidanceDecoder beta0(model, embedder, zero_beta, {});
  const bool beta_ok = beta0.generate_branch(prompt, mem, opts(64)).tokens == greedy.tokens;

  const double s = timer.seconds();
  std::string d = std::string("empty memory ") + (empty_ok ? "identical" : "DIFFERS") + ", beta=0 " +
                  (beta_ok ? "identical" : "DIFFERS") + fmt(", %.3f s", s);
  return {empty_ok && beta_ok && s < 1.0, d};
}

// 2 --------------------------------------------------------------------------
Outcome brute_force_oracle() {
  Timer timer;
  std::mt19937_64 gen(99);
  const int trials = 64;
  int agree = 0;
  for (int trial = 0; trial < trials; ++trial) {
    auto f = oracle::random_fixture(gen);
    f.gamma = 1.0;
    f.alpha = 0.5;
    f.beta = 2.0;
    f.k = 4;
    const auto expect = oracle::evaluate(f);

    avoid::testing::TableModel m(f.logits, {f.hidden.begin(), f.hidden.end()});
    const ToyEmbedder e(f.embed_dim, f.embed_table);
    PenaltyConfig pc;
    pc.beta = f.beta;
    pc.fixed_gamma = f.gamma;
    AdaptivePolicy pol;
    pol.fixed_k = f.k;
    pol.fixed_alpha = f.alpha;
    const AvoidanceDecoder dec(m, e, pc, pol);
    NegativeMemory mem;
    mem.add(NegativeSample("neg", f.negative_tokens, {f.negative.begin(), f.negative.end()},
                           e.embed(f.negative_tokens)));
    DecodeState st;
    st.prompt_tokens = {0};
    st.generated = f.generated;
    st.cache.tokens = st.prompt_tokens;
    st.cache.tokens.insert(st.cache.tokens.end(), f.generated.begin(), f.generated.end());
    st.logits = f.logits;
    if (dec.decode_step(st, mem).token == expect.chosen) ++agree;
  }
  const double s = timer.seconds();
  return {agree == trials && s < 1.0,
          std::to_string(agree) + "/" + std::to_string(trials) + " fixtures agree" + fmt(", %.3f s", s)};
}

// 3 --------------------------------------------------------------------------
Outcome divergence() {
  Timer timer;
  auto cfg = toy64_config();
  const auto rt = cli::Runtime::build(cfg);
  PenaltyConfig pc;
  pc.beta = 2.0;
  pc.delta = 0.5;
  pc.t0 = 25;
  pc.schedule_mode = ScheduleMode::kProse;
  const AvoidanceDecoder dec(*rt.model, *rt.embedder, pc, cfg.policy);

  std::string d;
  bool all = true;
  for (const auto& p : cli::load_prompts(*cfg.prompts_path)) {
    const auto prompt = rt.tokenizer->encode(p.text);
    const auto neg = generate_greedy(*rt.model, prompt, opts(50)).tokens;
    NegativeMemory mem;
    mem.add(dec.ingest_negative(prompt, neg));
    const auto branch = dec.generate_branch(prompt, mem, opts(50)).tokens;
    std::size_t first = 50;
    for (std::size_t i = 0; i < std::min(branch.size(), neg.size()); ++i) {
      if (branch[i] != neg[i]) {
        first = i;
        break;
      }
    }
    all = all && first < 50;
    d += p.prompt_id + ": first difference at " + (first < 50 ? std::to_string(first) : "none") + "; ";
  }
  const double s = timer.seconds();
  return {all && s < 5.0, d + fmt("%.2f s", s)};
}

// 4 --------------------------------------------------------------------------
Outcome diversity_effect() {
  Timer timer;
  auto cfg = toy64_config();
  cfg.branches = 5;
  const auto rt = cli::Runtime::build(cfg);

  auto tokens_by_prompt = [](const std::vector<cli::BranchRecord>& recs) {
    std::map<std::string, std::vector<std::vector<TokenId>>> out;
    for (const auto& r : recs) out[r.prompt_id].push_back(r.tokens);
    return out;
  };
  const auto avoid_sets = tokens_by_prompt(cli::cmd_generate(cfg));
  auto fb = cfg;
  fb.mode = cli::BaselineMode::kGreedy;
  fb.feedback_prompt = true;
  const auto feedback_sets = tokens_by_prompt(cli::cmd_baseline(fb));
  auto plain = fb;
  plain.feedback_prompt = false;
  const auto greedy_sets = tokens_by_prompt(cli::cmd_baseline(plain));

  bool all = true;
  std::string d;
  for (const auto& [id, branches] : avoid_sets) {
    const double a = metrics::mean_pairwise_cosine(branches, *rt.embedder);
    const double f = metrics::mean_pairwise_cosine(feedback_sets.at(id), *rt.embedder);
    const double g = metrics::mean_pairwise_cosine(greedy_sets.at(id), *rt.embedder);
    all = all && a < 1.0 && a < f && g == 1.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s avoid %.4f feedback %.4f greedy %.17g; ", id.c_str(), a, f, g);
    d += buf;
  }
  const double s = timer.seconds();
  return {all && s < 30.0, d + fmt("%.2f s", s)};
}

// 5 --------------------------------------------------------------------------
Outcome gamma_schedule() {
  PenaltyConfig prose;
  prose.delta = 0.5;
  prose.t0 = 25;
  PenaltyConfig verbatim = prose;
  verbatim.schedule_mode = ScheduleMode::kVerbatim;

  const bool mid = std::abs(gamma(25, prose) - 0.75) <= 1e-9 && std::abs(gamma(25, verbatim) - 0.75) <= 1e-9;
  const bool limits = std::abs(gamma(45, prose) - 0.5) <= 1e-6 && std::abs(gamma(45, verbatim) - 1.0) <= 1e-6;

  long prose_break = -1, verbatim_break = -1;
  for (std::size_t t = 1; t <= 200; ++t) {
    if (prose_break < 0 && !(gamma(t, prose) < gamma(t - 1, prose))) prose_break = long(t);
    if (verbatim_break < 0 && !(gamma(t, verbatim) > gamma(t - 1, verbatim))) verbatim_break = long(t);
  }
  const bool strict = prose_break < 0 && verbatim_break < 0;
  std::string d = std::string("midpoint ") + (mid ? "ok" : "WRONG") + ", limits " + (limits ? "ok" : "WRONG");
  if (strict) {
    d += ", strictly monotone on [0,200]";
  } else {
    d += ", strict monotonicity breaks at t=" + std::to_string(prose_break) + " (prose) and t=" +
         std::to_string(verbatim_break) +
         " (verbatim): the sigmoid term drops below half an ulp of the result in double precision";
  }
  return {mid && limits && strict, d};
}

// 6 --------------------------------------------------------------------------
Outcome aggregation() {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bad_order = 0, bad_linear = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> h(1 + gen() % 16);
    for (auto& x : h) x = u(gen);
    PenaltyConfig mx;
    mx.beta = 0.25 + 3.0 * u(gen);
    PenaltyConfig sm = mx;
    sm.aggregation_mode = AggregationMode::kSum;
    if (!(aggregate(h, mx) <= aggregate(h, sm))) ++bad_order;
    for (auto cfg : {mx, sm}) {
      const double once = aggregate(h, cfg);
      cfg.beta *= 2.0;
      if (std::abs(aggregate(h, cfg) - 2.0 * once) > 1e-12) ++bad_linear;
    }
  }
  PenaltyConfig mx;
  PenaltyConfig sm;
  sm.aggregation_mode = AggregationMode::kSum;
  const bool empty = aggregate({}, mx) == 0.0 && aggregate({}, sm) == 0.0;
  return {bad_order == 0 && bad_linear == 0 && empty,
          "max>sum violations " + std::to_string(bad_order) + ", beta-linearity violations " +
              std::to_string(bad_linear) + ", empty " + (empty ? "0" : "NONZERO")};
}

// 7 --------------------------------------------------------------------------
Outcome metric_oracles() {
  const std::string text = "the old keeper climbed the tower and found a letter .";
  const double b = metrics::bleu(text, text);
  const double r = metrics::rouge_l_f1(text, text);
  const double m = metrics::meteor_simple(text, text);
  const auto e = ToyEmbedder::seeded(64, 32, 7);
  const std::vector<TokenId> toks{5, 9, 33, 40, 12, 8};
  const double ss = metrics::sent_sim(toks, toks, e);
  const double hb = metrics::bleu("a b c d", "a b c d e");
  const double hr = metrics::rouge_l_f1("a c", "a b c");
  const double hm = metrics::meteor_simple("a b", "b a");
  const bool ok = b == 1.0 && r == 1.0 && m >= 0.99 && ss == 1.0 && std::abs(hb - std::exp(-0.25)) <= 1e-6 &&
                  std::abs(hr - 0.8) <= 1e-9 && std::abs(hm - 0.5) <= 1e-9;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "identity bleu %.17g rouge %.17g meteor %.6f sent_sim %.17g; hand bleu %.9f rouge %.12f meteor %.12f",
                b, r, m, ss, hb, hr, hm);
  return {ok, buf};
}

// 8 --------------------------------------------------------------------------
Outcome cache_hygiene() {
  const auto model = ToyTransformer::init(avoid::testing::toy64_spec());
  const auto embedder = ToyEmbedder::seeded(64, 32, 7);
  std::mt19937_64 gen(8);
  int steps = 0, bad = 0;
  while (steps < 100) {
    AdaptivePolicy pol;
    pol.fixed_k = 2 + gen() % 9;
    const AvoidanceDecoder dec(model, embedder, {}, pol);
    const auto prompt = avoid::testing::random_tokens(gen, 1 + gen() % 8, 64);
    NegativeMemory mem;
    for (std::size_t n = 1 + gen() % 3; n > 0; --n) {
      mem.add(dec.ingest_negative(prompt, avoid::testing::random_tokens(gen, 4 + gen() % 12, 64)));
    }
    auto st = start_decode(model, prompt);
    for (int i = 0; i < 10 && steps < 100; ++i, ++steps) {
      const auto before = st.cache;
      const auto r = dec.decode_step(st, mem);
      bool same = r.k >= 2 && st.cache.tokens == before.tokens;
      for (std::size_t l = 0; same && l < before.layers.size(); ++l) {
        same = st.cache.layers[l].keys == before.layers[l].keys && st.cache.layers[l].values == before.layers[l].values;
      }
      advance(model, st, r.token);
      std::vector<TokenId> full = prompt;
      full.insert(full.end(), st.generated.begin(), st.generated.end());
      if (!same || model.forward_sequence(full).back().logits != st.logits) ++bad;
    }
  }
  return {bad == 0, std::to_string(steps - bad) + "/" + std::to_string(steps) +
                        " steps reproduce uncached logits exactly"};
}

// 9 --------------------------------------------------------------------------
int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

std::vector<std::vector<TokenId>> branch_tokens(const std::filesystem::path& p) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& r : cli::read_branches(p)) out.push_back(r.tokens);
  return out;
}

Outcome determinism() {
  const auto dir = avoid::testing::scratch_dir("acceptance_determinism");
  const std::string base = std::string(AVOIDANCE_BIN) + " generate --config " +
                           (kSource / "configs/toy64.json").string() + " --branches 5 --max-tokens 80";
  const auto a = dir / "a.jsonl", b = dir / "b.jsonl", c = dir / "c.jsonl";
  if (run(base + " --out " + a.string()) != 0 || run(base + " --out " + b.string()) != 0 ||
      run(base + " --seed 8 --out " + c.string()) != 0) {
    return {false, "generate exited nonzero"};
  }
  const bool same = slurp(a) == slurp(b);
  const bool seed_matters = branch_tokens(a) != branch_tokens(c);
  return {same && seed_matters, std::string("repeat run ") + (same ? "byte-identical" : "DIFFERS") +
                                    ", seed change " + (seed_matters ? "changes branches" : "CHANGES NOTHING")};
}

// 10 -------------------------------------------------------------------------
Outcome dormant_machinery() {
  const std::vector<float> acts{1e-6f, 0.1f, 2e-5f, 0.3f};
  const bool ratio = dormant_ratio(acts, 5e-5) == 0.5;
  const std::vector<double> series{0, 1, 2, 3};
  const bool slope = std::abs(trend_slope(series) - 1.0) <= 1e-12;

  const auto dir = avoid::testing::scratch_dir("acceptance_probe");
  auto cfg = toy64_config();
  cfg.branches = 5;
  cfg.max_tokens = 40;
  cfg.prompts_path = one_prompt_file(dir);
  const auto rep = cli::probe_live(cfg, true);
  bool in_range = rep.entries.size() == 5;
  for (const auto& e : rep.entries) in_range = in_range && e.dormant_ratio >= 0.0 && e.dormant_ratio <= 1.0;
  std::string d = std::string("ratio ") + (ratio ? "0.5" : "WRONG") + ", slope " + (slope ? "1" : "WRONG") +
                  ", probe run emitted " + std::to_string(rep.entries.size()) + " ratios";
  for (const auto& e : rep.entries) d += fmt(" %.4f", e.dormant_ratio);
  return {ratio && slope && in_range, d};
}

// 11 -------------------------------------------------------------------------
Outcome judge_hermeticity() {
  using namespace avoid::judge;
  const auto golden = kFixtures / "judge/golden";
  const bool rubrics = degeneration_rubric() == slurp(golden / "degeneration_rubric.txt") &&
                       diversity_rubric() == slurp(golden / "diversity_rubric_15.txt");
  std::vector<std::string> samples;
  for (int i = 0; i < 15; ++i) samples.push_back("Story number " + std::to_string(i + 1) + " about a different place.");
  const bool bodies =
      chat_request("gpt-4o", degeneration_rubric(), "The fox ran home before the storm.").dump() ==
          slurp(golden / "degeneration_request.json") &&
      chat_request("gpt-4o", diversity_rubric(), numbered_samples(samples)).dump() ==
          slurp(golden / "diversity_request.json");

  FixtureTransport replay(kFixtures / "judge/replay");
  ClientOptions o;
  o.model = "gpt-4o";
  o.max_retries = 0;
  JudgeClient client(replay, o);
  const bool parsed = client.judge_degeneration("The fox ran home before the storm.").degeneration_score == 0.0 &&
                      client.judge_diversity(samples).diversity_score == 1.0;

  // an endpoint that cannot answer must not be touched when fixtures are given
  const auto dir = avoid::testing::scratch_dir("acceptance_judge");
  const auto out = dir / "verdicts.json";
  const int rc = run("env JUDGE_API_URL=http://192.0.2.1:9/v1 " + std::string(AVOIDANCE_BIN) + " judge " +
                     (kFixtures / "cli/judge_branches.jsonl").string() + " --fixtures " +
                     (kFixtures / "cli/judge_replay").string() + " --out " + out.string());
  const bool offline = rc == 0 && std::filesystem::exists(out);
  return {rubrics && bodies && parsed && offline,
          std::string("rubrics ") + (rubrics ? "golden" : "DIFFER") + ", request bodies " +
              (bodies ? "golden" : "DIFFER") + ", replay " + (parsed ? "parsed" : "FAILED") + ", cli offline " +
              (offline ? "ok" : "FAILED")};
}

// 12 -------------------------------------------------------------------------
Outcome desk_runtime() {
  Timer timer;
  const auto dir = avoid::testing::scratch_dir("acceptance_runtime");
  cli::RunConfig cfg;
  cfg.prompts_path = one_prompt_file(dir);
  const auto recs = cli::cmd_generate(cfg);
  const double s = timer.seconds();
  bool full = recs.size() == 15;
  for (const auto& r : recs) full = full && r.tokens.size() == 200;
  return {full && s < 120.0, std::to_string(recs.size()) + " branches" + (full ? " x 200 tokens" : " (SHORT)") +
                                 fmt(" in %.2f s", s)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"greedy reduction", greedy_reduction},
      {"brute-force decode step", brute_force_oracle},
      {"divergence from greedy negative", divergence},
      {"diversity effect", diversity_effect},
      {"gamma schedule", gamma_schedule},
      {"aggregation properties", aggregation},
      {"metric oracles", metric_oracles},
      {"cache hygiene", cache_hygiene},
      {"determinism", determinism},
      {"dormant machinery", dormant_machinery},
      {"judge hermeticity", judge_hermeticity},
      {"desk-scale runtime", desk_runtime},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

// SPDX-License-Identifier: Apache-2.0

#include "avoid/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "avoid/kernels.hpp"

namespace avoid {

namespace {

constexpr float kLayerNormEps = 1e-5F;

void layer_norm(std::span<const float> x, std::span<const float> g, std::span<const float> b,
                std::span<float> out) {
  const auto n = static_cast<float>(x.size());
  float mean = 0.0F;
  for (float v : x) mean += v;
  mean /= n;
  float var = 0.0F;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= n;
  const float inv = 1.0F / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * g[i] + b[i];
}

float gelu(float x) {
  return 0.5F * x * (1.0F + std::erf(x * 0.70710678118654752F));
}

// Causal multi-head attention for one query over the first `count` cached
// positions. Keys and values are [count * dim] row-major.
void attend(std::span<const float> q, std::span<const float> keys, std::span<const float> values,
            std::size_t count, std::size_t num_heads, std::span<float> out) {
  const std::size_t dim = q.size();
  const std::size_t hd = dim / num_heads;
  const float scale = 1.0F / std::sqrt(static_cast<float>(hd));
  std::vector<float> scores(count);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const auto qh = q.subspan(h * hd, hd);
    float mx = -INFINITY;
    for (std::size_t j = 0; j < count; ++j) {
      scores[j] = kernels::dot(qh, keys.subspan(j * dim + h * hd, hd)) * scale;
      mx = std::max(mx, scores[j]);
    }
    float denom = 0.0F;
    for (std::size_t j = 0; j < count; ++j) {
      scores[j] = std::exp(scores[j] - mx);
      denom += scores[j];
    }
    for (std::size_t c = 0; c < hd; ++c) {
      float acc = 0.0F;
      for (std::size_t j = 0; j < count; ++j) acc += scores[j] * values[j * dim + h * hd + c];
      out[h * hd + c] = acc / denom;
    }
  }
}

// Everything after attention for one position of one layer: output projection,
// residual, feed-forward and its residual. Writes post-GELU activations.
void finish_layer(const ToyWeights::Layer& w, std::span<const float> attn, std::span<float> x,
                  std::vector<float>& ffn_act) {
  const std::size_t dim = x.size();
  std::vector<float> tmp(dim);
  kernels::matvec(w.wo, attn, tmp);
  for (std::size_t i = 0; i < dim; ++i) x[i] += tmp[i];

  std::vector<float> normed(dim);
  layer_norm(x, w.ln2_g, w.ln2_b, normed);
  ffn_act.resize(w.b_ff1.size());
  kernels::matvec_bias(w.w_ff1, normed, w.b_ff1, ffn_act);
  for (float& a : ffn_act) a = gelu(a);
  kernels::matvec_bias(w.w_ff2, ffn_act, w.b_ff2, tmp);
  for (std::size_t i = 0; i < dim; ++i) x[i] += tmp[i];
}

void embed_into(const ToyWeights& w, std::size_t dim, TokenId token, std::size_t pos,
                std::span<float> x) {
  const auto t = static_cast<std::size_t>(token);
  for (std::size_t i = 0; i < dim; ++i) x[i] = w.tok_emb[t * dim + i] + w.pos_emb[pos * dim + i];
}

void head(const ToyWeights& w, std::span<const float> x, ForwardOutput& out) {
  out.last_hidden.resize(x.size());
  layer_norm(x, w.ln_f_g, w.ln_f_b, out.last_hidden);
  out.logits.resize(w.unembed.size() / x.size());
  kernels::matvec(w.unembed, out.last_hidden, out.logits);
}

std::vector<float> uniform_tensor(std::uint64_t seed, std::uint32_t index, std::size_t n,
                                  float scale) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    index};
  std::mt19937_64 gen(seq);
  std::vector<float> t(n);
  for (float& v : t) {
    // Top 24 bits -> [0, 1), exact in float.
    const float u = static_cast<float>(gen() >> 40) * 0x1.0p-24F;
    v = (2.0F * u - 1.0F) * scale;
  }
  return t;
}

void expect_size(const std::vector<float>& t, std::size_t n, const std::string& name) {
  if (t.size() != n) {
    throw ConfigError("tensor " + name + " has " + std::to_string(t.size()) +
                      " values, expected " + std::to_string(n));
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (model_dim == 0 || num_layers == 0 || num_heads == 0 || ffn_dim == 0 || max_context == 0) {
    throw ConfigError("model dimensions must all be >= 1");
  }
  if (model_dim % num_heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
}

void KvCache::truncate(std::size_t length) {
  if (length >= tokens.size()) return;
  const std::size_t keep = layers.empty() || tokens.empty()
                               ? 0
                               : layers.front().keys.size() / tokens.size() * length;
  tokens.resize(length);
  for (auto& l : layers) {
    l.keys.resize(keep);
    l.values.resize(keep);
  }
}

std::vector<HiddenVector> LanguageModel::hidden_states_of(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw ConfigError("hidden_states_of: empty sequence");
  auto outs = forward_sequence(tokens);
  std::vector<HiddenVector> hs;
  hs.reserve(outs.size());
  for (auto& o : outs) hs.push_back(std::move(o.last_hidden));
  return hs;
}

ToyWeights ToyWeights::generate(const ModelSpec& spec) {
  spec.validate();
  const std::size_t d = spec.model_dim;
  const std::size_t f = spec.ffn_dim;
  const std::size_t v = spec.vocab_size;
  const auto inv_sqrt = [](std::size_t n) { return 1.0F / std::sqrt(static_cast<float>(n)); };
  std::uint32_t index = 0;
  auto next = [&](std::size_t n, float scale) { return uniform_tensor(spec.seed, index++, n, scale); };

  ToyWeights w;
  w.tok_emb = next(v * d, 1.0F);
  w.pos_emb = next(spec.max_context * d, 0.5F);
  w.layers.resize(spec.num_layers);
  for (auto& l : w.layers) {
    l.wq = next(d * d, inv_sqrt(d));
    l.wk = next(d * d, inv_sqrt(d));
    l.wv = next(d * d, inv_sqrt(d));
    l.wo = next(d * d, inv_sqrt(d));
    l.w_ff1 = next(f * d, inv_sqrt(d));
    l.w_ff2 = next(d * f, inv_sqrt(f));
    l.b_ff1.assign(f, 0.0F);
    l.b_ff2.assign(d, 0.0F);
    l.ln1_g.assign(d, 1.0F);
    l.ln1_b.assign(d, 0.0F);
    l.ln2_g.assign(d, 1.0F);
    l.ln2_b.assign(d, 0.0F);
  }
  w.ln_f_g.assign(d, 1.0F);
  w.ln_f_b.assign(d, 0.0F);
  w.unembed = next(v * d, 3.0F * inv_sqrt(d));
  return w;
}

void ToyWeights::check_shapes(const ModelSpec& spec) const {
  const std::size_t d = spec.model_dim;
  const std::size_t f = spec.ffn_dim;
  expect_size(tok_emb, spec.vocab_size * d, "tok_emb");
  expect_size(pos_emb, spec.max_context * d, "pos_emb");
  if (layers.size() != spec.num_layers) {
    throw ConfigError("weights have " + std::to_string(layers.size()) + " layers, expected " +
                      std::to_string(spec.num_layers));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    expect_size(l.wq, d * d, p + "wq");
    expect_size(l.wk, d * d, p + "wk");
    expect_size(l.wv, d * d, p + "wv");
    expect_size(l.wo, d * d, p + "wo");
    expect_size(l.w_ff1, f * d, p + "w_ff1");
    expect_size(l.b_ff1, f, p + "b_ff1");
    expect_size(l.w_ff2, d * f, p + "w_ff2");
    expect_size(l.b_ff2, d, p + "b_ff2");
    expect_size(l.ln1_g, d, p + "ln1_g");
    expect_size(l.ln1_b, d, p + "ln1_b");
    expect_size(l.ln2_g, d, p + "ln2_g");
    expect_size(l.ln2_b, d, p + "ln2_b");
  }
  expect_size(ln_f_g, d, "ln_f_g");
  expect_size(ln_f_b, d, "ln_f_b");
  expect_size(unembed, spec.vocab_size * d, "unembed");
}

ToyTransformer ToyTransformer::init(const ModelSpec& spec) {
  spec.validate();
  if (spec.weights_path) return ToyTransformer(spec, load_weights(*spec.weights_path, spec));
  return ToyTransformer(spec, ToyWeights::generate(spec));
}

ToyTransformer::ToyTransformer(ModelSpec spec, ToyWeights weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  spec_.validate();
  weights_.check_shapes(spec_);
}

void ToyTransformer::check_token(TokenId token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= spec_.vocab_size) {
    throw ConfigError("token id " + std::to_string(token) + " outside vocabulary of " +
                      std::to_string(spec_.vocab_size));
  }
}

KvCache ToyTransformer::new_cache() const {
  KvCache c;
  c.layers.resize(spec_.num_layers);
  c.tokens.reserve(spec_.max_context);
  for (auto& l : c.layers) {
    l.keys.reserve(spec_.max_context * spec_.model_dim);
    l.values.reserve(spec_.max_context * spec_.model_dim);
  }
  return c;
}

ForwardOutput ToyTransformer::forward_step(TokenId token, KvCache& cache) const {
  check_token(token);
  const std::size_t pos = cache.prefix_length();
  if (pos >= spec_.max_context) {
    throw ContextOverflowError("context overflow: " + std::to_string(pos) + " tokens already in a " +
                               std::to_string(spec_.max_context) + "-token context");
  }
  if (cache.layers.size() != spec_.num_layers) throw ConfigError("cache does not match model");

  const std::size_t d = spec_.model_dim;
  std::vector<float> x(d), a(d), q(d), k(d), v(d), attn(d);
  embed_into(weights_, d, token, pos, x);

  ForwardOutput out;
  out.ffn_activations.resize(spec_.num_layers);
  for (std::size_t l = 0; l < spec_.num_layers; ++l) {
    const auto& w = weights_.layers[l];
    auto& lc = cache.layers[l];
    layer_norm(x, w.ln1_g, w.ln1_b, a);
    kernels::matvec(w.wq, a, q);
    kernels::matvec(w.wk, a, k);
    kernels::matvec(w.wv, a, v);
    lc.keys.insert(lc.keys.end(), k.begin(), k.end());
    lc.values.insert(lc.values.end(), v.begin(), v.end());
    attend(q, lc.keys, lc.values, pos + 1, spec_.num_heads, attn);
    finish_layer(w, attn, x, out.ffn_activations[l]);
  }
  cache.tokens.push_back(token);
  head(weights_, x, out);
  return out;
}

std::vector<ForwardOutput> ToyTransformer::forward_sequence(std::span<const TokenId> tokens) const {
  const std::size_t n = tokens.size();
  if (n > spec_.max_context) {
    throw ContextOverflowError("sequence of " + std::to_string(n) + " tokens exceeds context of " +
                               std::to_string(spec_.max_context));
  }
  for (TokenId t : tokens) check_token(t);

  const std::size_t d = spec_.model_dim;
  std::vector<float> xs(n * d), qs(n * d), ks(n * d), vs(n * d), a(d), attn(d);
  for (std::size_t p = 0; p < n; ++p) embed_into(weights_, d, tokens[p], p, std::span(xs).subspan(p * d, d));

  std::vector<ForwardOutput> outs(n);
  for (auto& o : outs) o.ffn_activations.resize(spec_.num_layers);

  for (std::size_t l = 0; l < spec_.num_layers; ++l) {
    const auto& w = weights_.layers[l];
    for (std::size_t p = 0; p < n; ++p) {
      layer_norm(std::span(xs).subspan(p * d, d), w.ln1_g, w.ln1_b, a);
      kernels::matvec(w.wq, a, std::span(qs).subspan(p * d, d));
      kernels::matvec(w.wk, a, std::span(ks).subspan(p * d, d));
      kernels::matvec(w.wv, a, std::span(vs).subspan(p * d, d));
    }
    for (std::size_t p = 0; p < n; ++p) {
      attend(std::span(qs).subspan(p * d, d), ks, vs, p + 1, spec_.num_heads, attn);
      finish_layer(w, attn, std::span(xs).subspan(p * d, d), outs[p].ffn_activations[l]);
    }
  }
  for (std::size_t p = 0; p < n; ++p) head(weights_, std::span(xs).subspan(p * d, d), outs[p]);
  return outs;
}

void save_weights(const std::filesystem::path& path, const ModelSpec& spec,
                  const ToyWeights& weights) {
  weights.check_shapes(spec);
  nlohmann::json j;
  j["header"] = {{"vocab_size", spec.vocab_size}, {"model_dim", spec.model_dim},
                 {"num_layers", spec.num_layers}, {"num_heads", spec.num_heads},
                 {"ffn_dim", spec.ffn_dim},       {"max_context", spec.max_context}};
  auto& t = j["tensors"];
  t["tok_emb"] = weights.tok_emb;
  t["pos_emb"] = weights.pos_emb;
  t["layers"] = nlohmann::json::array();
  for (const auto& l : weights.layers) {
    t["layers"].push_back({{"wq", l.wq},       {"wk", l.wk},       {"wv", l.wv},
                           {"wo", l.wo},       {"w_ff1", l.w_ff1}, {"b_ff1", l.b_ff1},
                           {"w_ff2", l.w_ff2}, {"b_ff2", l.b_ff2}, {"ln1_g", l.ln1_g},
                           {"ln1_b", l.ln1_b}, {"ln2_g", l.ln2_g}, {"ln2_b", l.ln2_b}});
  }
  t["ln_f_g"] = weights.ln_f_g;
  t["ln_f_b"] = weights.ln_f_b;
  t["unembed"] = weights.unembed;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write weights file " + path.string());
  out << j.dump();
}

ToyWeights load_weights(const std::filesystem::path& path, const ModelSpec& spec) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open weights file " + path.string());
  ToyWeights w;
  try {
    nlohmann::json j;
    in >> j;
    const auto& h = j.at("header");
    const auto check = [&](const char* key, std::size_t expected) {
      const auto got = h.at(key).get<std::size_t>();
      if (got != expected) {
        throw ConfigError(std::string("weights file ") + key + "=" + std::to_string(got) +
                          " does not match spec " + key + "=" + std::to_string(expected));
      }
    };
    check("vocab_size", spec.vocab_size);
    check("model_dim", spec.model_dim);
    check("num_layers", spec.num_layers);
    check("num_heads", spec.num_heads);
    check("ffn_dim", spec.ffn_dim);
    check("max_context", spec.max_context);
    const auto& t = j.at("tensors");
    t.at("tok_emb").get_to(w.tok_emb);
    t.at("pos_emb").get_to(w.pos_emb);
    for (const auto& lj : t.at("layers")) {
      ToyWeights::Layer l;
      lj.at("wq").get_to(l.wq);
      lj.at("wk").get_to(l.wk);
      lj.at("wv").get_to(l.wv);
      lj.at("wo").get_to(l.wo);
      lj.at("w_ff1").get_to(l.w_ff1);
      lj.at("b_ff1").get_to(l.b_ff1);
      lj.at("w_ff2").get_to(l.w_ff2);
      lj.at("b_ff2").get_to(l.b_ff2);
      lj.at("ln1_g").get_to(l.ln1_g);
      lj.at("ln1_b").get_to(l.ln1_b);
      lj.at("ln2_g").get_to(l.ln2_g);
      lj.at("ln2_b").get_to(l.ln2_b);
      w.layers.push_back(std::move(l));
    }
    t.at("ln_f_g").get_to(w.ln_f_g);
    t.at("ln_f_b").get_to(w.ln_f_b);
    t.at("unembed").get_to(w.unembed);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed weights file " + path.string() + ": " + e.what());
  }
  w.check_shapes(spec);
  return w;
}

std::vector<double> softmax(std::span<const float> logits, double temperature) {
  if (logits.empty()) throw ConfigError("softmax: empty logits");
  if (!(temperature > 0.0)) throw ConfigError("softmax: temperature must be > 0");
  double mx = -INFINITY;
  for (float l : logits) mx = std::max(mx, static_cast<double>(l));
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((static_cast<double>(logits[i]) - mx) / temperature);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

}  // namespace avoid

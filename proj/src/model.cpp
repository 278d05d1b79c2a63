// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "catbert/error.hpp"
#include "catbert/util.hpp"

namespace catbert {

using nlohmann::json;

namespace {

constexpr double kInitStd = 0.02;

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::size_t ModelConfig::num_transformers() const {
  return static_cast<std::size_t>(std::count(plan.begin(), plan.end(), BlockKind::transformer));
}

std::size_t ModelConfig::num_adapters() const {
  return static_cast<std::size_t>(std::count(plan.begin(), plan.end(), BlockKind::adapter));
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };
  require(vocab_size > 0, "vocab_size must be positive");
  require(hidden > 0, "hidden must be positive");
  require(ffn > 0, "ffn must be positive");
  require(heads > 0, "heads must be positive");
  require(hidden % heads == 0,
          "hidden (" + std::to_string(hidden) + ") is not divisible by heads (" + std::to_string(heads) + ")");
  require(max_positions > 0, "max_positions must be positive");
  require(!plan.empty(), "block plan is empty");
  require(layer_norm_eps > 0.0, "layer_norm_eps must be positive");
  require(readout != Readout::last_transformer || num_transformers() > 0,
          "readout 'last_transformer' needs at least one transformer block");
}

ModelConfig ModelConfig::preset(std::string_view name) {
  ModelConfig c;
  if (name == "paper") {
    c.vocab_size = 119547;
    c.plan = {BlockKind::transformer, BlockKind::adapter, BlockKind::transformer,
              BlockKind::adapter,     BlockKind::transformer, BlockKind::adapter};
  } else if (name == "distilbert") {
    c.vocab_size = 119547;
    c.plan.assign(6, BlockKind::transformer);
    c.context_dim = 0;
  } else if (name == "tiny") {
    c.vocab_size = 100;
    c.hidden = 8;
    c.ffn = 16;
    c.heads = 2;
    c.max_positions = 16;
    c.plan = {BlockKind::transformer, BlockKind::adapter};
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "' (known: paper, distilbert, tiny)");
  }
  return c;
}

std::vector<BlockKind> parse_plan(const json& j) {
  std::vector<BlockKind> plan;
  if (j.is_string()) {
    for (char c : j.get<std::string>()) {
      if (c == 'T' || c == 't') {
        plan.push_back(BlockKind::transformer);
      } else if (c == 'A' || c == 'a') {
        plan.push_back(BlockKind::adapter);
      } else {
        throw ConfigError(std::string("plan letter '") + c + "' is not T or A");
      }
    }
    return plan;
  }
  if (!j.is_array()) throw ConfigError("plan must be a string like \"TATATA\" or a list");
  for (const auto& e : j) {
    const std::string s = e.is_string() ? e.get<std::string>() : "";
    if (s == "transformer") {
      plan.push_back(BlockKind::transformer);
    } else if (s == "adapter") {
      plan.push_back(BlockKind::adapter);
    } else {
      throw ConfigError("plan entry " + e.dump() + " is not \"transformer\" or \"adapter\"");
    }
  }
  return plan;
}

std::string plan_to_string(std::span<const BlockKind> plan) {
  std::string s;
  for (auto k : plan) s.push_back(k == BlockKind::transformer ? 'T' : 'A');
  return s;
}

json config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"hidden", c.hidden},
              {"ffn", c.ffn},
              {"heads", c.heads},
              {"max_positions", c.max_positions},
              {"plan", plan_to_string(c.plan)},
              {"context_dim", c.context_dim},
              {"classifier_hidden", c.classifier_hidden},
              {"use_context", c.use_context},
              {"readout", c.readout == Readout::last_block ? "last_block" : "last_transformer"},
              {"layer_norm_eps", c.layer_norm_eps},
              {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  if (const auto p = j.find("preset"); p != j.end()) c = ModelConfig::preset(p->get<std::string>());
  static const std::vector<std::string> known = {"preset",      "vocab_size", "hidden",      "ffn",
                                                 "heads",       "max_positions", "plan",     "context_dim",
                                                 "classifier_hidden", "use_context", "readout", "layer_norm_eps",
                                                 "seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      std::string list;
      for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError("unknown model config key '" + key + "' (known: " + list + ")");
    }
  }
  try {
    auto get_size = [&](const char* key, std::size_t& dst) {
      if (const auto it = j.find(key); it != j.end()) dst = it->get<std::size_t>();
    };
    get_size("vocab_size", c.vocab_size);
    get_size("hidden", c.hidden);
    get_size("ffn", c.ffn);
    get_size("heads", c.heads);
    get_size("max_positions", c.max_positions);
    get_size("context_dim", c.context_dim);
    get_size("classifier_hidden", c.classifier_hidden);
    if (const auto it = j.find("plan"); it != j.end()) c.plan = parse_plan(*it);
    if (const auto it = j.find("use_context"); it != j.end()) c.use_context = it->get<bool>();
    if (const auto it = j.find("layer_norm_eps"); it != j.end()) c.layer_norm_eps = it->get<double>();
    if (const auto it = j.find("seed"); it != j.end()) c.seed = it->get<std::uint64_t>();
    if (const auto it = j.find("readout"); it != j.end()) {
      const auto r = it->get<std::string>();
      if (r == "last_block") {
        c.readout = Readout::last_block;
      } else if (r == "last_transformer") {
        c.readout = Readout::last_transformer;
      } else {
        throw ConfigError("readout must be last_block or last_transformer, got '" + r + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (j.contains("model")) j = j["model"];
  return config_from_json(j);
}

ParamReport count_params(const ModelConfig& c) {
  const std::size_t d = c.hidden, f = c.ffn, dh = c.head_hidden();
  ParamReport r;
  r.embedding = c.vocab_size * d + c.max_positions * d + 2 * d;
  r.per_transformer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d;
  r.per_adapter = 2 * (d * d + d);
  r.transformers = r.per_transformer * c.num_transformers();
  r.adapters = r.per_adapter * c.num_adapters();
  r.classifier = (d + c.context_dim) * dh + dh + dh + 1;
  r.total = r.embedding + r.transformers + r.adapters + r.classifier;
  return r;
}

json report_to_json(const ParamReport& r) {
  return json{{"embedding", r.embedding},         {"per_transformer", r.per_transformer},
              {"per_adapter", r.per_adapter},     {"transformers", r.transformers},
              {"adapters", r.adapters},           {"classifier", r.classifier},
              {"non_embedding", r.non_embedding()}, {"total", r.total}};
}

std::string block_prefix(std::size_t index) { return "block." + std::to_string(index); }

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
  const std::size_t d = c.hidden, f = c.ffn;
  std::vector<std::pair<std::string, Shape>> out = {
      {"embeddings.token.weight", {c.vocab_size, d}},
      {"embeddings.position.weight", {c.max_positions, d}},
      {"embeddings.norm.gain", {d}},
      {"embeddings.norm.bias", {d}},
  };
  for (std::size_t i = 0; i < c.plan.size(); ++i) {
    const std::string b = block_prefix(i);
    if (c.plan[i] == BlockKind::transformer) {
      for (const char* proj : {"query", "key", "value", "output"}) {
        out.push_back({b + ".attention." + proj + ".weight", {d, d}});
        out.push_back({b + ".attention." + proj + ".bias", {d}});
      }
      out.push_back({b + ".attention.norm.gain", {d}});
      out.push_back({b + ".attention.norm.bias", {d}});
      out.push_back({b + ".ffn.dense1.weight", {d, f}});
      out.push_back({b + ".ffn.dense1.bias", {f}});
      out.push_back({b + ".ffn.dense2.weight", {f, d}});
      out.push_back({b + ".ffn.dense2.bias", {d}});
      out.push_back({b + ".ffn.norm.gain", {d}});
      out.push_back({b + ".ffn.norm.bias", {d}});
    } else {
      out.push_back({b + ".adapter.dense1.weight", {d, d}});
      out.push_back({b + ".adapter.dense1.bias", {d}});
      out.push_back({b + ".adapter.dense2.weight", {d, d}});
      out.push_back({b + ".adapter.dense2.bias", {d}});
    }
  }
  out.push_back({"classifier.fusion.weight", {d + c.context_dim, c.head_hidden()}});
  out.push_back({"classifier.fusion.bias", {c.head_hidden()}});
  out.push_back({"classifier.output.weight", {c.head_hidden(), 1}});
  out.push_back({"classifier.output.bias", {1}});
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicCatBert<T>::BasicCatBert(ModelConfig config) : BasicCatBert(config, config.seed) {}

template <typename T>
BasicCatBert<T>::BasicCatBert(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  config_.seed = seed;
  for (auto& [name, shape] : parameter_layout(config_)) {
    Tensor<T> value(shape);
    if (ends_with(name, ".gain")) {
      value.fill(T{1});
    } else if (ends_with(name, ".weight")) {
      std::mt19937_64 rng(mix_seed(seed, fnv1a64(name)));
      std::normal_distribution<double> normal(0.0, kInitStd);
      for (auto& x : value.data()) {
        double v;
        do {
          v = normal(rng);
        } while (std::abs(v) > 2.0 * kInitStd);
        x = static_cast<T>(v);
      }
    }
    params_.push_back({name, std::move(value), true, {}});
  }
  build_index();
}

template <typename T>
BasicCatBert<T>::BasicCatBert(ModelConfig config, std::vector<Parameter<T>> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto layout = parameter_layout(config_);
  if (layout.size() != params_.size()) {
    throw ContractError("model expects " + std::to_string(layout.size()) + " parameters, got " +
                        std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params_[i].name != layout[i].first) {
      throw ContractError("parameter " + std::to_string(i) + " is '" + params_[i].name + "', expected '" +
                          layout[i].first + "'");
    }
    if (params_[i].value.shape() != layout[i].second) {
      throw DimensionError("parameter '" + params_[i].name + "' has shape " +
                           shape_to_string(params_[i].value.shape()) + ", expected " +
                           shape_to_string(layout[i].second));
    }
  }
  build_index();
}

template <typename T>
void BasicCatBert<T>::build_index() {
  by_name_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!by_name_.emplace(params_[i].name, i).second) throw ContractError("duplicate parameter '" + params_[i].name + "'");
  }
  auto id = [&](const std::string& name) { return by_name_.at(name); };
  tok_ = id("embeddings.token.weight");
  pos_ = id("embeddings.position.weight");
  emb_g_ = id("embeddings.norm.gain");
  emb_b_ = id("embeddings.norm.bias");
  fuse_w_ = id("classifier.fusion.weight");
  fuse_b_ = id("classifier.fusion.bias");
  out_w_ = id("classifier.output.weight");
  out_b_ = id("classifier.output.bias");
  blocks_.clear();
  for (std::size_t i = 0; i < config_.plan.size(); ++i) {
    const std::string b = block_prefix(i);
    BlockIds ids{config_.plan[i]};
    if (ids.kind == BlockKind::transformer) {
      const std::string a = b + ".attention.";
      ids.t = {id(a + "query.weight"),  id(a + "query.bias"),  id(a + "key.weight"),   id(a + "key.bias"),
               id(a + "value.weight"),  id(a + "value.bias"),  id(a + "output.weight"), id(a + "output.bias"),
               id(a + "norm.gain"),     id(a + "norm.bias"),   id(b + ".ffn.dense1.weight"),
               id(b + ".ffn.dense1.bias"), id(b + ".ffn.dense2.weight"), id(b + ".ffn.dense2.bias"),
               id(b + ".ffn.norm.gain"), id(b + ".ffn.norm.bias")};
    } else {
      ids.a = {id(b + ".adapter.dense1.weight"), id(b + ".adapter.dense1.bias"), id(b + ".adapter.dense2.weight"),
               id(b + ".adapter.dense2.bias")};
    }
    blocks_.push_back(ids);
  }
}

template <typename T>
Parameter<T>* BasicCatBert<T>::find(std::string_view name) {
  const auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

template <typename T>
const Parameter<T>* BasicCatBert<T>::find(std::string_view name) const {
  const auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

template <typename T>
Parameter<T>& BasicCatBert<T>::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Parameter<T>& BasicCatBert<T>::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::size_t BasicCatBert<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void BasicCatBert<T>::zero_grad() {
  for (auto& p : params_) p.grad.reset();
}

template <typename T>
Var<T> BasicCatBert<T>::run(const Bind& bind, std::span<const std::int32_t> ids,
                            std::span<const std::uint8_t> mask, std::vector<Var<T>>* hidden) const {
  const std::size_t len = ids.size();
  if (len == 0) throw ContractError("empty token sequence");
  if (len > config_.max_positions) {
    throw ContractError("sequence length " + std::to_string(len) + " exceeds max positions " +
                        std::to_string(config_.max_positions));
  }
  if (!mask.empty() && mask.size() != len) {
    throw DimensionError("attention mask length " + std::to_string(mask.size()) + " != sequence length " +
                         std::to_string(len));
  }
  std::vector<std::int32_t> positions(len);
  std::iota(positions.begin(), positions.end(), 0);
  Var<T> h = add(embedding(bind(tok_), ids), embedding(bind(pos_), std::span<const std::int32_t>(positions)));
  h = layer_norm(h, bind(emb_g_), bind(emb_b_), config_.layer_norm_eps);
  if (hidden) hidden->push_back(h);

  std::size_t stop = blocks_.size();
  if (config_.readout == Readout::last_transformer) {
    while (stop > 0 && blocks_[stop - 1].kind != BlockKind::transformer) --stop;
  }
  for (std::size_t i = 0; i < stop; ++i) {
    const BlockIds& b = blocks_[i];
    if (b.kind == BlockKind::transformer) {
      const TransformerIds& t = b.t;
      Var<T> q = linear(h, bind(t.q_w), bind(t.q_b));
      Var<T> k = linear(h, bind(t.k_w), bind(t.k_b));
      Var<T> v = linear(h, bind(t.v_w), bind(t.v_b));
      Var<T> a = linear(attention(q, k, v, mask, config_.heads), bind(t.o_w), bind(t.o_b));
      h = layer_norm(add(h, a), bind(t.attn_g), bind(t.attn_b), config_.layer_norm_eps);
      Var<T> f = linear(gelu(linear(h, bind(t.f1_w), bind(t.f1_b))), bind(t.f2_w), bind(t.f2_b));
      h = layer_norm(add(h, f), bind(t.ffn_g), bind(t.ffn_b), config_.layer_norm_eps);
    } else {
      const AdapterIds& a = b.a;
      h = add(h, linear(relu(linear(h, bind(a.d1_w), bind(a.d1_b))), bind(a.d2_w), bind(a.d2_b)));
    }
    if (hidden) hidden->push_back(h);
  }
  return select_row(h, 0);
}

template <typename T>
Var<T> BasicCatBert<T>::context_constant(Tape<T>& tape, std::size_t rows, std::span<const float> flat) const {
  const std::size_t c = config_.context_dim;
  Tensor<T> ctx({rows, c});
  if (config_.use_context) {
    if (flat.size() != rows * c) {
      throw DimensionError("context has " + std::to_string(flat.size()) + " values, expected " +
                           std::to_string(rows * c));
    }
    for (std::size_t i = 0; i < flat.size(); ++i) ctx[i] = static_cast<T>(flat[i]);
  }
  return tape.constant(std::move(ctx));
}

template <typename T>
Var<T> BasicCatBert<T>::head(const Bind& bind, Var<T> cls_rows, Var<T> context_rows) const {
  Var<T> x = config_.context_dim > 0 ? concat_cols(cls_rows, context_rows) : cls_rows;
  Var<T> hdn = relu(linear(x, bind(fuse_w_), bind(fuse_b_)));
  return sigmoid(linear(hdn, bind(out_w_), bind(out_b_)));
}

namespace {

// Binds each parameter at most once per tape so a batch shares one leaf.
template <typename T>
std::function<Var<T>(std::size_t)> caching_binder(Tape<T>& tape, std::vector<Parameter<T>>& params,
                                                  std::vector<std::optional<Var<T>>>& cache) {
  cache.assign(params.size(), std::nullopt);
  return [&tape, &params, &cache](std::size_t i) {
    if (!cache[i]) cache[i] = tape.parameter(params[i]);
    return *cache[i];
  };
}

template <typename T>
std::function<Var<T>(std::size_t)> view_binder(Tape<T>& tape, const std::vector<Parameter<T>>& params,
                                               std::vector<std::optional<Var<T>>>& cache) {
  cache.assign(params.size(), std::nullopt);
  return [&tape, &params, &cache](std::size_t i) {
    if (!cache[i]) cache[i] = tape.view(params[i].value);
    return *cache[i];
  };
}

}  // namespace

template <typename T>
Var<T> BasicCatBert<T>::forward(Tape<T>& tape, std::span<const std::int32_t> ids, std::span<const std::uint8_t> mask,
                                std::span<const float> context, std::vector<Var<T>>* hidden) {
  std::vector<std::optional<Var<T>>> cache;
  const auto bind = caching_binder(tape, params_, cache);
  Var<T> cls = run(bind, ids, mask, hidden);
  return head(bind, cls, context_constant(tape, 1, config_.context_dim > 0 ? context : std::span<const float>{}));
}

template <typename T>
Var<T> BasicCatBert<T>::forward_batch(Tape<T>& tape, std::span<const TokenSequence> sequences,
                                      std::span<const std::array<float, ContextFeatures::kDim>> contexts) {
  if (sequences.empty()) throw ContractError("empty batch");
  if (sequences.size() != contexts.size()) {
    throw DimensionError("batch has " + std::to_string(sequences.size()) + " sequences but " +
                         std::to_string(contexts.size()) + " context rows");
  }
  if (config_.context_dim != 0 && config_.context_dim != ContextFeatures::kDim) {
    throw ContractError("forward_batch needs context_dim " + std::to_string(ContextFeatures::kDim));
  }
  std::vector<std::optional<Var<T>>> cache;
  const auto bind = caching_binder(tape, params_, cache);
  std::vector<Var<T>> rows;
  rows.reserve(sequences.size());
  for (const auto& s : sequences) rows.push_back(run(bind, s.ids, s.attention_mask, nullptr));
  std::vector<float> flat;
  if (config_.context_dim > 0) {
    for (const auto& c : contexts) flat.insert(flat.end(), c.begin(), c.end());
  }
  return head(bind, concat_rows(std::span<const Var<T>>(rows)), context_constant(tape, sequences.size(), flat));
}

template <typename T>
T BasicCatBert<T>::predict(const TokenSequence& tokens, std::span<const float> context) const {
  Tape<T> tape(false);
  std::vector<std::optional<Var<T>>> cache;
  const auto bind = view_binder(tape, params_, cache);
  Var<T> cls = run(bind, tokens.ids, tokens.attention_mask, nullptr);
  return head(bind, cls, context_constant(tape, 1, config_.context_dim > 0 ? context : std::span<const float>{}))
      .value()[0];
}

template <typename T>
T BasicCatBert<T>::predict(const TokenSequence& tokens, const ContextFeatures& context) const {
  const auto v = context.to_vector();
  return predict(tokens, std::span<const float>(v));
}

template <typename T>
std::vector<Tensor<T>> BasicCatBert<T>::hidden_states(const TokenSequence& tokens, std::span<const float>) const {
  Tape<T> tape(false);
  std::vector<std::optional<Var<T>>> cache;
  const auto bind = view_binder(tape, params_, cache);
  std::vector<Var<T>> vars;
  run(bind, tokens.ids, tokens.attention_mask, &vars);
  std::vector<Tensor<T>> out;
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

template class BasicCatBert<float>;
template class BasicCatBert<double>;

// ---------------------------------------------------------------------------

FreezeMask FreezeMask::preset(std::string_view name, const ModelConfig& config) {
  FreezeMask mask;
  if (name == "none" || name.empty()) return mask;
  if (name != "partial-finetune") {
    throw ConfigError("unknown freeze preset '" + std::string(name) + "' (known: none, partial-finetune)");
  }
  mask.prefixes.push_back("embeddings");
  std::size_t frozen = 0;
  for (std::size_t i = 0; i < config.plan.size() && frozen < 2; ++i) {
    if (config.plan[i] == BlockKind::transformer) {
      mask.prefixes.push_back(block_prefix(i));
      ++frozen;
    }
  }
  return mask;
}

bool FreezeMask::matches(std::string_view name) const {
  for (const auto& p : prefixes) {
    if (name == p) return true;
    if (name.size() > p.size() && name.substr(0, p.size()) == p && name[p.size()] == '.') return true;
  }
  return false;
}

template <typename T>
void set_trainable(BasicCatBert<T>& model, const FreezeMask& mask) {
  for (const auto& prefix : mask.prefixes) {
    const FreezeMask single{{prefix}};
    const bool resolves = std::any_of(model.parameters().begin(), model.parameters().end(),
                                      [&](const Parameter<T>& p) { return single.matches(p.name); });
    if (!resolves) {
      std::vector<std::string> known = {"embeddings", "classifier"};
      for (std::size_t i = 0; i < model.config().plan.size(); ++i) known.push_back(block_prefix(i));
      std::string list;
      for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError("freeze prefix '" + prefix + "' matches no parameter (known prefixes: " + list + ")");
    }
  }
  for (auto& p : model.parameters()) p.trainable = !mask.matches(p.name);
}

template void set_trainable(BasicCatBert<float>&, const FreezeMask&);
template void set_trainable(BasicCatBert<double>&, const FreezeMask&);

}  // namespace catbert

// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "catbert/autograd.hpp"
#include "catbert/mail.hpp"
#include "catbert/tensor.hpp"
#include "catbert/tokenizer.hpp"

namespace catbert {

enum class BlockKind { transformer, adapter };

/// Where the classifier reads the [CLS] hidden state.
enum class Readout {
  last_block,        // after the final plan entry, adapter or not
  last_transformer,  // after the last transformer; trailing adapters skipped
};

struct ModelConfig {
  std::size_t vocab_size = 30522;
  std::size_t hidden = 768;
  std::size_t ffn = 3072;
  std::size_t heads = 12;
  std::size_t max_positions = 512;
  std::vector<BlockKind> plan;
  /// Width of the context vector fused into the classifier. 0 gives a plain
  /// two-dense head on the [CLS] state alone.
  std::size_t context_dim = ContextFeatures::kDim;
  /// 0 means "same as hidden".
  std::size_t classifier_hidden = 0;
  /// When false the context input is fed as zeros (ablation runs).
  bool use_context = true;
  Readout readout = Readout::last_block;
  double layer_norm_eps = 1e-12;
  std::uint64_t seed = 0;

  std::size_t head_hidden() const { return classifier_hidden == 0 ? hidden : classifier_hidden; }
  std::size_t num_transformers() const;
  std::size_t num_adapters() const;

  /// Throws ConfigError on an invalid combination.
  void validate() const;

  /// "paper" (3T+3A at 768 dims, multilingual vocab), "distilbert"
  /// (6 transformers, no context), "tiny" (test-sized).
  static ModelConfig preset(std::string_view name);

  bool operator==(const ModelConfig&) const = default;
};

/// Parses "TATATA" or ["transformer", "adapter", ...].
std::vector<BlockKind> parse_plan(const nlohmann::json& j);
std::string plan_to_string(std::span<const BlockKind> plan);

nlohmann::json config_to_json(const ModelConfig& config);
/// Missing keys take ModelConfig defaults; a "preset" key seeds them.
ModelConfig config_from_json(const nlohmann::json& j);
ModelConfig load_config(const std::filesystem::path& path);

struct ParamReport {
  std::size_t embedding = 0;
  std::size_t per_transformer = 0;
  std::size_t per_adapter = 0;
  std::size_t transformers = 0;  // all transformer blocks
  std::size_t adapters = 0;      // all adapter blocks
  std::size_t classifier = 0;
  std::size_t total = 0;

  std::size_t non_embedding() const { return total - embedding; }
};

/// Closed-form parameter counts.
ParamReport count_params(const ModelConfig& config);
nlohmann::json report_to_json(const ParamReport& report);

/// Parameter names are dotted paths: "embeddings.token.weight",
/// "block.3.adapter.dense1.weight", "classifier.fusion.bias", ...
std::string block_prefix(std::size_t index);

/// Post-norm encoder with adapters standing in for removed transformer
/// blocks and a classifier that fuses [CLS] with context features.
template <typename T>
class BasicCatBert {
 public:
  /// Random init: weights ~ N(0, 0.02) truncated at 2 sigma, biases 0,
  /// layer-norm gain 1. Each tensor draws from a stream keyed by
  /// (seed, name), so init does not depend on construction order.
  explicit BasicCatBert(ModelConfig config);
  BasicCatBert(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;
  /// Throws ContractError for an unknown name.
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;

  std::size_t parameter_count() const;
  void zero_grad();

  /// Records one sequence on `tape`; returns a [1 x 1] probability. When
  /// `hidden` is given it receives the embedding output then one entry per
  /// executed block. Throws ContractError if the sequence exceeds max
  /// positions, IndexError for an id outside the vocabulary.
  Var<T> forward(Tape<T>& tape, std::span<const std::int32_t> ids, std::span<const std::uint8_t> mask,
                 std::span<const float> context, std::vector<Var<T>>* hidden = nullptr);
  /// [B x 1] probabilities for a batch; sequences may differ in length.
  Var<T> forward_batch(Tape<T>& tape, std::span<const TokenSequence> sequences,
                       std::span<const std::array<float, ContextFeatures::kDim>> contexts);

  /// Inference without gradient bookkeeping. Safe to call concurrently.
  T predict(const TokenSequence& tokens, std::span<const float> context) const;
  T predict(const TokenSequence& tokens, const ContextFeatures& context) const;
  std::vector<Tensor<T>> hidden_states(const TokenSequence& tokens, std::span<const float> context) const;

  /// Same weights in another precision; gradients are not copied.
  template <typename U>
  BasicCatBert<U> cast() const {
    std::vector<Parameter<U>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back({p.name, p.value.template cast<U>(), p.trainable, {}});
    return BasicCatBert<U>(config_, std::move(out));
  }

  /// Takes ownership of an externally built parameter list (checkpoint
  /// loading). The list must match the config's layout exactly.
  BasicCatBert(ModelConfig config, std::vector<Parameter<T>> params);

 private:
  using Bind = std::function<Var<T>(std::size_t)>;
  Var<T> run(const Bind& bind, std::span<const std::int32_t> ids, std::span<const std::uint8_t> mask,
             std::vector<Var<T>>* hidden) const;
  Var<T> head(const Bind& bind, Var<T> cls_rows, Var<T> context_rows) const;
  Var<T> context_constant(Tape<T>& tape, std::size_t rows, std::span<const float> flat) const;
  void build_index();

  struct TransformerIds {
    std::size_t q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b, attn_g, attn_b;
    std::size_t f1_w, f1_b, f2_w, f2_b, ffn_g, ffn_b;
  };
  struct AdapterIds {
    std::size_t d1_w, d1_b, d2_w, d2_b;
  };
  struct BlockIds {
    BlockKind kind;
    TransformerIds t{};
    AdapterIds a{};
  };

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
  std::size_t tok_, pos_, emb_g_, emb_b_, fuse_w_, fuse_b_, out_w_, out_b_;
  std::vector<BlockIds> blocks_;
};

using CatBertModel = BasicCatBert<float>;

extern template class BasicCatBert<float>;
extern template class BasicCatBert<double>;

/// Shape every parameter of `config` must have, in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);

/// Parameter-name prefixes to freeze. A prefix matches a name equal to it
/// or starting with prefix + ".".
struct FreezeMask {
  std::vector<std::string> prefixes;

  /// "none" or "partial-finetune": embeddings plus the first two
  /// transformer blocks in plan order.
  static FreezeMask preset(std::string_view name, const ModelConfig& config);
  bool matches(std::string_view name) const;
};

/// Marks every parameter matched by `mask` non-trainable and all others
/// trainable. Throws ConfigError naming any prefix that matches nothing.
template <typename T>
void set_trainable(BasicCatBert<T>& model, const FreezeMask& mask);

}  // namespace catbert

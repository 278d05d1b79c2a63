// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "catbert/mail.hpp"
#include "catbert/model.hpp"
#include "catbert/optim.hpp"
#include "catbert/tokenizer.hpp"

namespace catbert {

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 128;
  bool balanced = true;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Extra weight multiplied into records tagged group "bec".
  double bec_weight = 100.0;
  std::string freeze = "none";
  std::size_t max_len = 128;
  Truncation truncation = Truncation::keep_head;
  /// Keep the epoch with the best validation AUC instead of the last one.
  bool restore_best = true;
  std::size_t threads = 1;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Missing keys keep defaults; unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Mean of w_i * -[y_i log f_i + (1 - y_i) log(1 - f_i)] with f clamped to
/// [1e-7, 1 - 1e-7]. Throws ContractError on length mismatch.
double bce_loss(std::span<const double> probs, std::span<const int> labels, std::span<const double> weights);

struct SplitSpec {
  double train = 0.7;
  double validation = 0.15;
  double test = 0.15;

  /// "0.7,0.15,0.15"
  static SplitSpec parse(std::string_view text);
  void validate() const;
};

struct DataSplits {
  std::vector<EmailRecord> train;
  std::vector<EmailRecord> validation;
  std::vector<EmailRecord> test;
};

/// Stable sort by first_seen (records without one go last), then cut:
/// floor(n * train), floor(n * validation), remainder to test.
DataSplits split_by_time(const std::vector<EmailRecord>& records, const SplitSpec& spec);

/// Index batches with exactly batch_size / 2 of each class. Each class is
/// drawn from a fresh shuffle; a class that runs out is reshuffled and
/// drawn again, so the minority repeats while an epoch of
/// max(1, 2 * majority / batch_size) batches never repeats a majority
/// sample.
class BalancedSampler {
 public:
  BalancedSampler(std::span<const int> labels, std::size_t batch_size, std::uint64_t seed);

  std::size_t batches_per_epoch() const { return batches_; }
  std::vector<std::vector<std::size_t>> epoch(std::size_t index) const;

 private:
  std::vector<std::size_t> negatives_;
  std::vector<std::size_t> positives_;
  std::size_t batch_size_;
  std::size_t batches_;
  std::uint64_t seed_;
};

/// Shuffled fixed-size batches over all samples; the last may be short.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

/// A record turned into model inputs.
struct Example {
  TokenSequence tokens;  // trailing padding removed
  std::array<float, ContextFeatures::kDim> context{};
  int label = 0;
  double weight = 1.0;
};

/// weight = record.weight, times bec_weight for group "bec".
std::vector<Example> make_examples(const std::vector<EmailRecord>& records, const Vocabulary& vocab,
                                   std::size_t max_len, Truncation truncation, double bec_weight,
                                   std::size_t threads = 1);

std::vector<double> score_examples(const CatBertModel& model, std::span<const Example> examples,
                                   std::size_t threads = 1);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean over batches
  std::size_t batches = 0;
  std::optional<double> val_auc;
};

struct TrainingHistory {
  std::vector<EpochStats> epochs;
  std::optional<std::size_t> best_epoch;
  std::optional<double> best_val_auc;
};

nlohmann::json history_to_json(const TrainingHistory& h);

using EpochCallback = std::function<void(const EpochStats&, const CatBertModel&)>;

/// Adam over weighted BCE. Applies the config's freeze preset, tracks
/// validation AUC when the validation set has both classes, and (with
/// restore_best) leaves the best epoch's weights in `model`. Throws
/// TrainingError with batch details on a non-finite loss.
TrainingHistory train(CatBertModel& model, std::span<const Example> train_set, std::span<const Example> validation,
                      const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace catbert

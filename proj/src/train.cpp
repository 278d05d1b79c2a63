// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "catbert/error.hpp"
#include "catbert/metrics.hpp"
#include "catbert/util.hpp"

namespace catbert {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (balanced && batch_size % 2 != 0) {
    throw ConfigError("balanced batches need an even batch size, got " + std::to_string(batch_size));
  }
  if (!(adam.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(bec_weight > 0.0)) throw ConfigError("bec_weight must be positive");
  if (max_len < 3) throw ConfigError("max_len must be at least 3");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"balanced", c.balanced},
              {"learning_rate", c.adam.learning_rate},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"adam_epsilon", c.adam.epsilon},
              {"seed", c.seed},
              {"bec_weight", c.bec_weight},
              {"freeze", c.freeze},
              {"max_len", c.max_len},
              {"truncate", std::string(to_string(c.truncation))},
              {"restore_best", c.restore_best},
              {"threads", c.threads}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "epochs") {
        c.epochs = v.get<std::size_t>();
      } else if (key == "batch_size") {
        c.batch_size = v.get<std::size_t>();
      } else if (key == "balanced") {
        c.balanced = v.get<bool>();
      } else if (key == "learning_rate") {
        c.adam.learning_rate = v.get<double>();
      } else if (key == "beta1") {
        c.adam.beta1 = v.get<double>();
      } else if (key == "beta2") {
        c.adam.beta2 = v.get<double>();
      } else if (key == "adam_epsilon") {
        c.adam.epsilon = v.get<double>();
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "bec_weight") {
        c.bec_weight = v.get<double>();
      } else if (key == "freeze") {
        c.freeze = v.get<std::string>();
      } else if (key == "max_len") {
        c.max_len = v.get<std::size_t>();
      } else if (key == "truncate") {
        c.truncation = parse_truncation(v.get<std::string>());
      } else if (key == "restore_best") {
        c.restore_best = v.get<bool>();
      } else if (key == "threads") {
        c.threads = v.get<std::size_t>();
      } else {
        throw ConfigError("unknown training config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

double bce_loss(std::span<const double> probs, std::span<const int> labels, std::span<const double> weights) {
  if (probs.size() != labels.size() || probs.size() != weights.size()) {
    throw ContractError("bce_loss: " + std::to_string(probs.size()) + " probs, " + std::to_string(labels.size()) +
                        " labels, " + std::to_string(weights.size()) + " weights");
  }
  if (probs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double f = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    total += weights[i] * -(labels[i] * std::log(f) + (1 - labels[i]) * std::log(1.0 - f));
  }
  return total / static_cast<double>(probs.size());
}

SplitSpec SplitSpec::parse(std::string_view text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw ConfigError("fractions must be three comma-separated numbers, got '" + std::string(text) + "'");
  SplitSpec s;
  try {
    s.train = std::stod(parts[0]);
    s.validation = std::stod(parts[1]);
    s.test = std::stod(parts[2]);
  } catch (const std::exception&) {
    throw ConfigError("fractions must be numbers, got '" + std::string(text) + "'");
  }
  s.validate();
  return s;
}

void SplitSpec::validate() const {
  if (train < 0 || validation < 0 || test < 0) throw ConfigError("split fractions must be non-negative");
  if (std::abs(train + validation + test - 1.0) > 1e-6) throw ConfigError("split fractions must sum to 1");
}

DataSplits split_by_time(const std::vector<EmailRecord>& records, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::pair<std::optional<double>, std::size_t>> keyed;
  keyed.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) keyed.emplace_back(records[i].first_seen_seconds(), i);
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first.has_value() != b.first.has_value()) return a.first.has_value();
    return a.first.has_value() && *a.first < *b.first;
  });
  const std::size_t n = records.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train + 1e-9));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.validation + 1e-9)));
  DataSplits out;
  for (std::size_t i = 0; i < n; ++i) {
    const EmailRecord& r = records[keyed[i].second];
    if (i < n_train) {
      out.train.push_back(r);
    } else if (i < n_train + n_val) {
      out.validation.push_back(r);
    } else {
      out.test.push_back(r);
    }
  }
  return out;
}

BalancedSampler::BalancedSampler(std::span<const int> labels, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ContractError("balanced batches need an even batch size, got " + std::to_string(batch_size));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? positives_ : negatives_).push_back(i);
  if (positives_.empty() || negatives_.empty()) {
    throw DatasetError("balanced sampling needs both classes (benign=" + std::to_string(negatives_.size()) +
                       ", malicious=" + std::to_string(positives_.size()) + ")");
  }
  const std::size_t majority = std::max(positives_.size(), negatives_.size());
  batches_ = std::max<std::size_t>(1, 2 * majority / batch_size);
}

std::vector<std::vector<std::size_t>> BalancedSampler::epoch(std::size_t index) const {
  std::mt19937_64 rng(mix_seed(seed_, index));
  const std::size_t half = batch_size_ / 2;
  auto draw = [&](const std::vector<std::size_t>& pool) {
    std::vector<std::size_t> out;
    out.reserve(batches_ * half);
    std::vector<std::size_t> order = pool;
    while (out.size() < batches_ * half) {
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t take = std::min(order.size(), batches_ * half - out.size());
      out.insert(out.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return out;
  };
  const auto neg = draw(negatives_);
  const auto pos = draw(positives_);
  std::vector<std::vector<std::size_t>> batches(batches_);
  for (std::size_t b = 0; b < batches_; ++b) {
    batches[b].assign(neg.begin() + static_cast<std::ptrdiff_t>(b * half),
                      neg.begin() + static_cast<std::ptrdiff_t>((b + 1) * half));
    batches[b].insert(batches[b].end(), pos.begin() + static_cast<std::ptrdiff_t>(b * half),
                      pos.begin() + static_cast<std::ptrdiff_t>((b + 1) * half));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

std::vector<Example> make_examples(const std::vector<EmailRecord>& records, const Vocabulary& vocab,
                                   std::size_t max_len, Truncation truncation, double bec_weight,
                                   std::size_t threads) {
  std::vector<Example> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const EmailRecord& r = records[i];
    Example& e = out[i];
    e.tokens = encode_text(build_content(r), vocab, max_len, truncation).trimmed();
    const auto ctx = extract_context(r);
    e.context = ctx.features.to_vector();
    e.label = r.label;
    e.weight = r.weight * (r.group && *r.group == "bec" ? bec_weight : 1.0);
  });
  return out;
}

std::vector<double> score_examples(const CatBertModel& model, std::span<const Example> examples, std::size_t threads) {
  std::vector<double> out(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    out[i] = model.predict(examples[i].tokens, std::span<const float>(examples[i].context));
  });
  return out;
}

json history_to_json(const TrainingHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"batches", e.batches},
                      {"val_auc", e.val_auc ? json(*e.val_auc) : json(nullptr)}});
  }
  return json{{"epochs", epochs},
              {"best_epoch", h.best_epoch ? json(*h.best_epoch) : json(nullptr)},
              {"best_val_auc", h.best_val_auc ? json(*h.best_val_auc) : json(nullptr)}};
}

namespace {

std::optional<double> validation_auc(const CatBertModel& model, std::span<const Example> validation,
                                     std::size_t threads) {
  ScoreSet s;
  for (const auto& e : validation) s.labels.push_back(e.label);
  if (s.positives() == 0 || s.negatives() == 0) return std::nullopt;
  s.scores = score_examples(model, validation, threads);
  return roc_auc(s);
}

}  // namespace

TrainingHistory train(CatBertModel& model, std::span<const Example> train_set, std::span<const Example> validation,
                      const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw DatasetError("training set is empty");
  set_trainable(model, FreezeMask::preset(config.freeze, model.config()));
  Adam<float> adam(config.adam);

  std::vector<int> labels;
  labels.reserve(train_set.size());
  for (const auto& e : train_set) labels.push_back(e.label);
  std::optional<BalancedSampler> sampler;
  if (config.balanced) sampler.emplace(labels, config.batch_size, mix_seed(config.seed, 1));

  TrainingHistory history;
  std::vector<Tensor<float>> best;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = sampler ? sampler->epoch(epoch)
                                 : shuffled_batches(train_set.size(), config.batch_size, mix_seed(config.seed, 2 + epoch));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      std::vector<TokenSequence> seqs;
      std::vector<std::array<float, ContextFeatures::kDim>> contexts;
      std::vector<double> ys, ws;
      for (std::size_t i : batch) {
        seqs.push_back(train_set[i].tokens);
        contexts.push_back(train_set[i].context);
        ys.push_back(train_set[i].label);
        ws.push_back(train_set[i].weight);
      }
      model.zero_grad();
      Tape<float> tape;
      Var<float> probs = model.forward_batch(tape, seqs, contexts);
      Var<float> loss = bce(probs, std::span<const double>(ys), std::span<const double>(ws));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "non-finite loss " << value << " at epoch " << epoch + 1 << " batch " << b + 1 << " (samples";
        for (std::size_t i : batch) os << ' ' << i;
        os << ")";
        throw TrainingError(os.str());
      }
      tape.backward(loss);
      for (auto& p : model.parameters()) {
        if (p.trainable && !p.grad) p.grad.emplace(p.value.shape());
      }
      adam.step(model.parameters());
      loss_sum += value;
    }
    EpochStats stats{epoch + 1, loss_sum / static_cast<double>(batches.size()), batches.size(),
                     validation_auc(model, validation, config.threads)};
    spdlog::info("epoch {}: loss {:.6f}, val auc {}", stats.epoch, stats.train_loss,
                 stats.val_auc ? std::to_string(*stats.val_auc) : "n/a");
    if (stats.val_auc && (!history.best_val_auc || *stats.val_auc > *history.best_val_auc)) {
      history.best_val_auc = stats.val_auc;
      history.best_epoch = stats.epoch;
      if (config.restore_best) {
        best.clear();
        for (const auto& p : model.parameters()) best.push_back(p.value);
      }
    }
    history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats, model);
  }
  if (config.restore_best && !best.empty()) {
    for (std::size_t i = 0; i < best.size(); ++i) model.parameters()[i].value = std::move(best[i]);
  }
  model.zero_grad();
  return history;
}

}  // namespace catbert

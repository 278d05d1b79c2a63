// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "catbert/attack.hpp"
#include "catbert/bench.hpp"
#include "catbert/checkpoint.hpp"
#include "catbert/error.hpp"
#include "catbert/explain.hpp"
#include "catbert/mail.hpp"
#include "catbert/metrics.hpp"
#include "catbert/model.hpp"
#include "catbert/surgery.hpp"
#include "catbert/synthetic.hpp"
#include "catbert/tfidf.hpp"
#include "catbert/tokenizer.hpp"
#include "catbert/train.hpp"
#include "catbert/util.hpp"

namespace catbert {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Run manifest

RunManifest::RunManifest(std::string subcommand, std::uint64_t seed)
    : subcommand_(std::move(subcommand)), seed_(seed), start_(std::chrono::steady_clock::now()) {}

void RunManifest::add_input(const fs::path& path) { inputs_.push_back(path); }
void RunManifest::add_output(const fs::path& path) { outputs_.push_back(path); }

namespace {

json checksums(const std::vector<fs::path>& paths, const fs::path& skip) {
  json out = json::object();
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        const std::string name = e.path().filename().string();
        // Earlier run manifests carry timings; never fold them into a checksum.
        const bool manifest = name == "run_manifest.json" || name.ends_with(".run.json");
        if (e.is_regular_file() && !manifest && e.path() != skip) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      json dir = json::object();
      for (const auto& f : files) dir[fs::relative(f, p).generic_string()] = file_checksum(f);
      out[p.generic_string()] = dir;
    } else if (fs::exists(p)) {
      out[p.generic_string()] = file_checksum(p);
    } else {
      out[p.generic_string()] = nullptr;
    }
  }
  return out;
}

}  // namespace

json RunManifest::to_json() const {
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return json{{"tool", "catbert"},
              {"version", kToolVersion},
              {"subcommand", subcommand_},
              {"seed", seed_},
              {"config", config_},
              {"inputs", checksums(inputs_, {})},
              {"outputs", checksums(outputs_, {})},
              {"duration_seconds", seconds}};
}

void RunManifest::write(const fs::path& path) const {
  json j = to_json();
  // A manifest inside an output directory must not checksum itself.
  j["outputs"] = checksums(outputs_, path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write run manifest " + path.string());
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string manifest;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  sub->add_option("--threads", c.threads, "Upper bound on worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--manifest", c.manifest, "Where to write the run manifest (default: next to the outputs)");
}

fs::path manifest_path(const Common& c, const fs::path& fallback) {
  return c.manifest.empty() ? fallback : fs::path(c.manifest);
}

fs::path sibling_manifest(const fs::path& output) { return fs::path(output.string() + ".run.json"); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

std::vector<EmailRecord> read_records(const fs::path& path, bool strict, std::ostream& err) {
  auto load = load_dataset(path, strict);
  for (const auto& e : load.errors) err << path.string() << ":" << e.line << ": skipped: " << e.message << "\n";
  return std::move(load.records);
}

struct TokenizerSettings {
  std::size_t max_len = 128;
  Truncation truncation = Truncation::keep_head;
};

json tokenizer_json(const TokenizerSettings& t) {
  return json{{"max_len", t.max_len}, {"truncate", std::string(to_string(t.truncation))}};
}

TokenizerSettings tokenizer_from(const json& extra) {
  TokenizerSettings t;
  if (const auto it = extra.find("tokenizer"); it != extra.end()) {
    t.max_len = it->value("max_len", t.max_len);
    t.truncation = parse_truncation(it->value("truncate", std::string("head")));
  }
  return t;
}

struct LoadedModel {
  Checkpoint checkpoint;
  Vocabulary vocab;
  TokenizerSettings tokenizer;

  double score(const EmailRecord& r) const {
    const TokenSequence t = encode_text(build_content(r), vocab, tokenizer.max_len, tokenizer.truncation).trimmed();
    return checkpoint.model.predict(t, extract_context(r).features);
  }
};

LoadedModel load_model(const fs::path& dir, const std::string& vocab_flag) {
  Checkpoint ckpt = load_checkpoint(dir);
  const fs::path vocab_path = vocab_flag.empty() ? dir / "vocab.txt" : fs::path(vocab_flag);
  if (!fs::exists(vocab_path)) throw VocabularyError("no vocabulary at " + vocab_path.string() + "; pass --vocab");
  Vocabulary vocab = Vocabulary::load(vocab_path);
  if (vocab.size() > ckpt.model.config().vocab_size) {
    throw VocabularyError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model embeds only " +
                          std::to_string(ckpt.model.config().vocab_size));
  }
  TokenizerSettings tok = tokenizer_from(ckpt.extra);
  return {std::move(ckpt), std::move(vocab), tok};
}

std::vector<double> score_records(const LoadedModel& m, const std::vector<EmailRecord>& records, std::size_t threads) {
  std::vector<double> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) { out[i] = m.score(records[i]); });
  return out;
}

std::string with_commas(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

ModelConfig model_config_from_file(const std::string& path) {
  const json j = read_json_file(path);
  return config_from_json(j.contains("model") ? j.at("model") : j);
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestOptions {
  Common common;
  std::string in, out;
  bool strict = false;
};

int run_ingest(const IngestOptions& o, std::ostream&, std::ostream& err) {
  RunManifest manifest("ingest", o.common.seed);
  manifest.add_input(o.in);
  const auto records = read_records(o.in, o.strict, err);
  std::vector<std::string> lines(records.size());
  parallel_for(records.size(), o.common.threads, [&](std::size_t i) {
    const EmailRecord& r = records[i];
    const auto ctx = extract_context(r);
    const auto v = ctx.features.to_vector();
    json j = {{"id", r.id ? json(*r.id) : json(nullptr)},
              {"content", build_content(r)},
              {"internal", ctx.features.internal},
              {"external", ctx.features.external},
              {"n_recipients", ctx.features.n_recipients},
              {"n_cc", ctx.features.n_cc},
              {"context", std::vector<float>(v.begin(), v.end())},
              {"label", r.label},
              {"group", r.group ? json(*r.group) : json(nullptr)},
              {"weight", r.weight},
              {"first_seen", r.first_seen ? json(*r.first_seen) : json(nullptr)},
              {"warnings", ctx.warnings}};
    lines[i] = j.dump();
  });
  std::ofstream out(o.out, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error("cannot write " + o.out);
  out.close();
  manifest.set_config({{"strict", o.strict}});
  manifest.add_output(o.out);
  manifest.write(manifest_path(o.common, sibling_manifest(o.out)));
  return 0;
}

struct SplitOptions {
  Common common;
  std::string in, out_dir, fractions = "0.7,0.15,0.15";
};

int run_split(const SplitOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("split", o.common.seed);
  manifest.add_input(o.in);
  const SplitSpec spec = SplitSpec::parse(o.fractions);
  const auto splits = split_by_time(read_records(o.in, false, err), spec);
  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  write_dataset(dir / "train.jsonl", splits.train);
  write_dataset(dir / "validation.jsonl", splits.validation);
  write_dataset(dir / "test.jsonl", splits.test);
  out << "train " << splits.train.size() << ", validation " << splits.validation.size() << ", test "
      << splits.test.size() << "\n";
  manifest.set_config({{"fractions", {spec.train, spec.validation, spec.test}}});
  for (const char* f : {"train.jsonl", "validation.jsonl", "test.jsonl"}) manifest.add_output(dir / f);
  manifest.write(manifest_path(o.common, dir / "run_manifest.json"));
  return 0;
}

struct TrainOptions {
  Common common;
  std::string data, validation, vocab, config, out, init, fractions = "0.85,0.15,0";
  std::optional<std::size_t> epochs, batch_size, max_len;
  std::optional<double> lr, bec_weight;
  std::optional<std::string> freeze, truncate;
};

int run_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  if (o.config.empty() && o.init.empty()) throw ConfigError("train needs --config or --init");
  RunManifest manifest("train", o.common.seed);
  const Vocabulary vocab = Vocabulary::load(o.vocab);
  manifest.add_input(o.vocab);

  json file = o.config.empty() ? json::object() : read_json_file(o.config);
  if (!o.config.empty()) manifest.add_input(o.config);
  TrainConfig tc = file.contains("train") ? train_config_from_json(file.at("train")) : TrainConfig{};
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (o.max_len) tc.max_len = *o.max_len;
  if (o.lr) tc.adam.learning_rate = *o.lr;
  if (o.bec_weight) tc.bec_weight = *o.bec_weight;
  if (o.freeze) tc.freeze = *o.freeze;
  if (o.truncate) tc.truncation = parse_truncation(*o.truncate);
  tc.seed = o.common.seed;
  tc.threads = o.common.threads;
  tc.validate();

  std::optional<CatBertModel> model;
  Provenance provenance;
  if (!o.init.empty()) {
    Checkpoint init = load_checkpoint(o.init);
    manifest.add_input(o.init);
    model.emplace(std::move(init.model));
    provenance = std::move(init.provenance);
  } else {
    json mj = file.contains("model") ? file.at("model") : json::object();
    if (!mj.contains("vocab_size") && !mj.contains("preset")) mj["vocab_size"] = vocab.size();
    ModelConfig mc = config_from_json(mj);
    model.emplace(mc, o.common.seed);
  }
  const ModelConfig& mc = model->config();
  if (vocab.size() > mc.vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model embeds " +
                      std::to_string(mc.vocab_size));
  }
  if (tc.max_len > mc.max_positions) {
    throw ConfigError("max_len " + std::to_string(tc.max_len) + " exceeds the model's " +
                      std::to_string(mc.max_positions) + " positions");
  }

  auto records = read_records(o.data, false, err);
  manifest.add_input(o.data);
  std::vector<EmailRecord> train_records, val_records;
  if (!o.validation.empty()) {
    train_records = std::move(records);
    val_records = read_records(o.validation, false, err);
    manifest.add_input(o.validation);
  } else {
    auto splits = split_by_time(records, SplitSpec::parse(o.fractions));
    train_records = std::move(splits.train);
    val_records = std::move(splits.validation);
  }
  const auto train_set = make_examples(train_records, vocab, tc.max_len, tc.truncation, tc.bec_weight, tc.threads);
  const auto val_set = make_examples(val_records, vocab, tc.max_len, tc.truncation, tc.bec_weight, tc.threads);

  const TrainingHistory history = train(*model, train_set, val_set, tc);
  for (const auto& e : history.epochs) {
    out << "epoch " << e.epoch << " loss " << std::setprecision(6) << e.train_loss;
    if (e.val_auc) out << " val_auc " << *e.val_auc;
    out << "\n";
  }

  const fs::path dir(o.out);
  const json extra = {{"tokenizer", tokenizer_json({tc.max_len, tc.truncation})},
                      {"training", train_config_to_json(tc)},
                      {"history", history_to_json(history)}};
  save_checkpoint(dir, *model, provenance, extra);
  vocab.save(dir / "vocab.txt");
  write_json_file(dir / "history.json", history_to_json(history));
  manifest.set_config({{"model", config_to_json(mc)}, {"train", train_config_to_json(tc)}, {"fractions", o.fractions}});
  manifest.add_output(dir);
  manifest.write(manifest_path(o.common, dir / "run_manifest.json"));
  return 0;
}

struct SurgeryCliOptions {
  Common common;
  std::string donor, keep = "0,2,4", out, config;
  bool zero_adapters = false;
};

int run_surgery(const SurgeryCliOptions& o, std::ostream& out, std::ostream&) {
  RunManifest manifest("surgery", o.common.seed);
  const Checkpoint donor = load_checkpoint(o.donor);
  manifest.add_input(o.donor);
  SurgeryOptions so;
  so.keep = parse_index_list(o.keep);
  so.seed = o.common.seed;
  so.zero_adapter_output = o.zero_adapters;
  if (!o.config.empty()) {
    so.target = model_config_from_file(o.config);
    manifest.add_input(o.config);
  }
  const SurgeryResult result = surgery_from_donor(donor.model, so);
  json extra = {{"surgery",
                 {{"donor", fs::path(o.donor).generic_string()},
                  {"keep", so.keep},
                  {"zero_adapter_output", so.zero_adapter_output}}}};
  if (donor.extra.contains("tokenizer")) extra["tokenizer"] = donor.extra.at("tokenizer");
  const fs::path dir(o.out);
  save_checkpoint(dir, result.model, result.provenance, extra);
  if (fs::exists(fs::path(o.donor) / "vocab.txt")) {
    fs::copy_file(fs::path(o.donor) / "vocab.txt", dir / "vocab.txt", fs::copy_options::overwrite_existing);
  }
  std::size_t copied = 0;
  for (const auto& [name, src] : result.provenance) copied += src.copied;
  out << "copied " << copied << " tensors, initialized " << result.provenance.size() - copied << " fresh; plan "
      << plan_to_string(result.model.config().plan) << "\n";
  manifest.set_config({{"keep", so.keep}, {"zero_adapters", o.zero_adapters}, {"target", config_to_json(result.model.config())}});
  manifest.add_output(dir);
  manifest.write(manifest_path(o.common, dir / "run_manifest.json"));
  return 0;
}

struct ParamsOptions {
  Common common;
  std::string config, preset;
  bool as_json = false;
};

int run_params(const ParamsOptions& o, std::ostream& out, std::ostream&) {
  if (o.config.empty() == o.preset.empty()) throw ConfigError("params needs exactly one of --config or --preset");
  const ModelConfig c = o.config.empty() ? ModelConfig::preset(o.preset) : model_config_from_file(o.config);
  c.validate();
  const ParamReport r = count_params(c);
  if (o.as_json) {
    json j = report_to_json(r);
    j["config"] = config_to_json(c);
    out << j.dump(2) << "\n";
  } else {
    auto line = [&](const std::string& label, std::size_t n) {
      out << "  " << std::left << std::setw(24) << label << std::right << std::setw(14) << with_commas(n)
          << std::setw(10) << std::fixed << std::setprecision(1) << static_cast<double>(n) / 1e6 << "M\n";
    };
    out << "model: vocab " << c.vocab_size << ", hidden " << c.hidden << ", ffn " << c.ffn << ", heads " << c.heads
        << ", positions " << c.max_positions << ", plan " << plan_to_string(c.plan) << "\n";
    line("embedding", r.embedding);
    line("transformers x" + std::to_string(c.num_transformers()), r.transformers);
    line("adapters x" + std::to_string(c.num_adapters()), r.adapters);
    line("classifier", r.classifier);
    line("non-embedding", r.non_embedding());
    line("total", r.total);
    out << "  millions (truncated): total " << r.total / 1000000 << ", embedding " << r.embedding / 1000000
        << ", non-embedding " << r.non_embedding() / 1000000 << "\n";
  }
  if (!o.common.manifest.empty()) {
    RunManifest manifest("params", o.common.seed);
    if (!o.config.empty()) manifest.add_input(o.config);
    manifest.set_config(config_to_json(c));
    manifest.write(o.common.manifest);
  }
  return 0;
}

struct EvalOptions {
  Common common;
  std::vector<std::string> models;
  std::string data, vocab, out, roc;
  std::vector<double> fprs = kDefaultFprs;
};

int run_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("eval", o.common.seed);
  const auto records = read_records(o.data, false, err);
  manifest.add_input(o.data);
  std::vector<json> runs;
  for (const auto& m : o.models) {
    const LoadedModel model = load_model(m, o.vocab);
    manifest.add_input(m);
    ScoreSet s;
    s.scores = score_records(model, records, o.common.threads);
    for (const auto& r : records) {
      s.labels.push_back(r.label);
      s.groups.push_back(r.group.value_or(""));
    }
    json run = metrics_to_json(s, o.fprs);
    run["model"] = fs::path(m).generic_string();
    if (runs.empty() && !o.roc.empty()) {
      std::ofstream csv(o.roc, std::ios::trunc);
      write_roc_csv(csv, roc_curve(s));
      if (!csv) throw Error("cannot write " + o.roc);
    }
    runs.push_back(std::move(run));
  }

  // Top level holds the mean over runs; "summary" adds the spread.
  auto collect = [&](auto getter) {
    std::vector<double> v;
    for (const auto& r : runs) {
      if (const auto x = getter(r)) v.push_back(*x);
    }
    return summarize_runs(v);
  };
  auto summary_json = [](const RunSummary& s) { return json{{"mean", s.mean}, {"stddev", s.stddev}, {"runs", s.runs}}; };
  json result;
  json summary;
  const RunSummary auc = collect([](const json& r) { return std::optional<double>(r.at("auc").get<double>()); });
  result["auc"] = auc.mean;
  summary["auc"] = summary_json(auc);
  json tpr = json::object(), tpr_summary = json::object();
  for (double f : o.fprs) {
    const std::string key = fpr_key(f);
    const RunSummary s = collect([&](const json& r) { return std::optional<double>(r.at("tpr_at_fpr").at(key).get<double>()); });
    tpr[key] = s.mean;
    tpr_summary[key] = summary_json(s);
  }
  result["tpr_at_fpr"] = tpr;
  summary["tpr_at_fpr"] = tpr_summary;
  json groups = json::object();
  for (const auto& [name, unused] : runs.front().at("groups").items()) {
    const RunSummary s = collect([&](const json& r) -> std::optional<double> {
      if (!r.at("groups").contains(name)) return std::nullopt;
      return r.at("groups").at(name).at("auc").get<double>();
    });
    json g = runs.front().at("groups").at(name);
    g["auc"] = s.mean;
    g["auc_stddev"] = s.stddev;
    groups[name] = g;
  }
  result["groups"] = groups;
  result["runs"] = runs;
  result["summary"] = summary;

  write_json_file(o.out, result);
  out << "auc " << std::setprecision(6) << auc.mean;
  if (auc.runs > 1) out << " +- " << auc.stddev << " over " << auc.runs << " runs";
  out << "\n";
  json fprs_json = json::array();
  for (double f : o.fprs) fprs_json.push_back(f);
  manifest.set_config({{"fprs", fprs_json}});
  manifest.add_output(o.out);
  if (!o.roc.empty()) manifest.add_output(o.roc);
  manifest.write(manifest_path(o.common, sibling_manifest(o.out)));
  return 0;
}

struct PredictOptions {
  Common common;
  std::string model, in, vocab, out;
};

int run_predict(const PredictOptions& o, std::ostream& out, std::ostream& err) {
  const LoadedModel model = load_model(o.model, o.vocab);
  const auto records = read_records(o.in, false, err);
  const auto scores = score_records(model, records, o.common.threads);
  std::ofstream file;
  if (!o.out.empty()) file.open(o.out, std::ios::trunc);
  std::ostream& dst = o.out.empty() ? out : file;
  for (std::size_t i = 0; i < records.size(); ++i) {
    dst << json{{"index", i}, {"id", records[i].id ? json(*records[i].id) : json(nullptr)}, {"prob", scores[i]}}.dump()
        << "\n";
  }
  if (!o.out.empty() || !o.common.manifest.empty()) {
    RunManifest manifest("predict", o.common.seed);
    manifest.add_input(o.model);
    manifest.add_input(o.in);
    if (!o.out.empty()) {
      file.close();
      manifest.add_output(o.out);
    }
    manifest.write(manifest_path(o.common, sibling_manifest(o.out)));
  }
  return 0;
}

struct AttackCliOptions {
  Common common;
  std::string kind = "typo", in, out, synonyms, homoglyphs, model, vocab, report, validation;
  double rate = 0.5;
  double threshold = 0.5;
  std::optional<double> threshold_fpr;
  bool all = false;
};

int run_attack(const AttackCliOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("attack", o.common.seed);
  AttackSpec spec;
  spec.kind = parse_attack_kind(o.kind);
  spec.rate = o.rate;
  spec.seed = o.common.seed;
  spec.synonyms = o.synonyms.empty() ? synthetic_synonyms() : synonyms_from_json(read_json_file(o.synonyms));
  if (!o.homoglyphs.empty()) spec.homoglyphs = homoglyphs_from_json(read_json_file(o.homoglyphs));
  spec.validate();
  const auto records = read_records(o.in, false, err);
  manifest.add_input(o.in);
  if (!o.synonyms.empty()) manifest.add_input(o.synonyms);
  if (!o.homoglyphs.empty()) manifest.add_input(o.homoglyphs);

  if (o.threshold_fpr && (o.validation.empty() || o.model.empty())) {
    throw ConfigError("--threshold-fpr needs --validation and --model");
  }
  double threshold = o.threshold;

  std::vector<EmailRecord> attacked(records.size());
  parallel_for(records.size(), o.common.threads, [&](std::size_t i) {
    attacked[i] = (o.all || records[i].label == 1) ? attack_record(records[i], spec, i) : records[i];
  });
  write_dataset(o.out, attacked);
  manifest.add_output(o.out);

  if (!o.model.empty()) {
    const LoadedModel model = load_model(o.model, o.vocab);
    manifest.add_input(o.model);
    if (o.threshold_fpr) {
      const auto held_out = read_records(o.validation, false, err);
      manifest.add_input(o.validation);
      ScoreSet s;
      s.scores = score_records(model, held_out, o.common.threads);
      for (const auto& r : held_out) s.labels.push_back(r.label);
      threshold = threshold_at_fpr(s, *o.threshold_fpr);
      spdlog::info("threshold {} for FPR {} on {}", threshold, *o.threshold_fpr, o.validation);
    }
    const AttackReport report = accuracy_under_attack(
        records, spec, threshold, [&](const EmailRecord& r) { return model.score(r); }, o.common.threads);
    const json j = report_to_json(report);
    out << j.dump() << "\n";
    if (!o.report.empty()) {
      write_json_file(o.report, j);
      manifest.add_output(o.report);
    }
  }
  manifest.set_config({{"kind", o.kind},
                       {"rate", o.rate},
                       {"all", o.all},
                       {"threshold", threshold},
                       {"threshold_fpr", o.threshold_fpr ? json(*o.threshold_fpr) : json(nullptr)}});
  manifest.write(manifest_path(o.common, sibling_manifest(o.out)));
  return 0;
}

struct ExplainOptions {
  Common common;
  std::string model, data, vocab, record_id, out;
  std::size_t samples = 1000;
  std::size_t top_k = 5;
};

int run_explain(const ExplainOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("explain", o.common.seed);
  const LoadedModel model = load_model(o.model, o.vocab);
  const auto records = read_records(o.data, false, err);
  manifest.add_input(o.model);
  manifest.add_input(o.data);
  const EmailRecord* record = nullptr;
  for (const auto& r : records) {
    if (r.id && *r.id == o.record_id) record = &r;
  }
  if (!record) {
    const bool numeric = !o.record_id.empty() && std::all_of(o.record_id.begin(), o.record_id.end(), ::isdigit);
    if (numeric && std::stoull(o.record_id) < records.size()) record = &records[std::stoull(o.record_id)];
  }
  if (!record) throw DatasetError("no record with id or index '" + o.record_id + "'");

  const TokenSequence tokens =
      encode_text(build_content(*record), model.vocab, model.tokenizer.max_len, model.tokenizer.truncation).trimmed();
  const ContextFeatures context = extract_context(*record).features;
  LimeOptions lo;
  lo.samples = o.samples;
  lo.seed = o.common.seed;
  lo.threads = o.common.threads;
  lo.top_k = o.top_k;
  const Attribution a = lime_explain(
      tokens, model.vocab, [&](const TokenSequence& t) { return model.checkpoint.model.predict(t, context); }, lo);
  json j = a.to_json();
  j["record"] = record->id ? json(*record->id) : json(o.record_id);
  j["score"] = model.checkpoint.model.predict(tokens, context);
  if (!o.out.empty()) {
    write_json_file(o.out, j);
    manifest.add_output(o.out);
  }
  out << "score " << std::setprecision(6) << j["score"].get<double>() << ", r2 " << a.r2 << "\n";
  for (const auto& w : a.top_positive) out << "  + " << w << " " << a.weight(w) << "\n";
  for (const auto& w : a.top_negative) out << "  - " << w << " " << a.weight(w) << "\n";
  manifest.set_config({{"samples", o.samples}, {"record", o.record_id}, {"kernel_width", a.kernel_width}});
  if (!o.out.empty() || !o.common.manifest.empty()) manifest.write(manifest_path(o.common, sibling_manifest(o.out)));
  return 0;
}

struct BenchCliOptions {
  Common common;
  std::string config, preset, model, compare, compare_preset, out;
  std::vector<std::size_t> batch_sizes = {1};
  std::size_t repetitions = 10;
  std::size_t warmup = 3;
  std::size_t seq_len = 128;
};

int run_bench(const BenchCliOptions& o, std::ostream& out, std::ostream&) {
  RunManifest manifest("bench", o.common.seed);
  auto build = [&](const std::string& config, const std::string& preset, const std::string& ckpt) -> std::optional<CatBertModel> {
    if (!ckpt.empty()) return load_checkpoint(ckpt).model;
    if (!config.empty()) return CatBertModel(model_config_from_file(config), o.common.seed);
    if (!preset.empty()) return CatBertModel(ModelConfig::preset(preset), o.common.seed);
    return std::nullopt;
  };
  std::vector<std::pair<std::string, CatBertModel>> models;
  if (auto m = build(o.config, o.preset, o.model)) {
    models.emplace_back(!o.model.empty() ? o.model : (!o.config.empty() ? o.config : o.preset), std::move(*m));
  } else {
    throw ConfigError("bench needs --config, --preset or --model");
  }
  if (auto m = build(o.compare, o.compare_preset, "")) {
    models.emplace_back(!o.compare.empty() ? o.compare : o.compare_preset, std::move(*m));
  }
  BenchOptions bo;
  bo.batch_sizes = o.batch_sizes;
  bo.repetitions = o.repetitions;
  bo.warmup = o.warmup;
  bo.seq_len = o.seq_len;
  bo.seed = o.common.seed;
  json result = {{"models", json::array()}};
  std::vector<std::vector<LatencyStats>> stats;
  for (const auto& [name, model] : models) {
    stats.push_back(time_inference(model, bo));
    json lat = json::array();
    for (const auto& s : stats.back()) lat.push_back(latency_to_json(s));
    result["models"].push_back({{"name", name},
                                {"plan", plan_to_string(model.config().plan)},
                                {"params", report_to_json(count_params(model.config()))},
                                {"latency", lat}});
    out << name << " (" << plan_to_string(model.config().plan) << ", " << with_commas(model.parameter_count())
        << " params)\n";
    for (const auto& s : stats.back()) {
      out << "  batch " << s.batch_size << ": mean " << std::fixed << std::setprecision(2) << s.mean_ms << " ms, p50 "
          << s.p50_ms << " ms, p95 " << s.p95_ms << " ms\n";
    }
  }
  if (stats.size() == 2) {
    json speedups = json::array();
    for (std::size_t i = 0; i < stats[0].size(); ++i) {
      const double ratio = stats[1][i].mean_ms / stats[0][i].mean_ms;
      speedups.push_back({{"batch_size", stats[0][i].batch_size}, {"speedup", ratio}});
      out << "speedup at batch " << stats[0][i].batch_size << ": " << std::setprecision(2) << ratio << "x\n";
    }
    result["speedup"] = speedups;
  }
  if (!o.out.empty()) {
    write_json_file(o.out, result);
    manifest.add_output(o.out);
    manifest.write(manifest_path(o.common, sibling_manifest(o.out)));
  } else if (!o.common.manifest.empty()) {
    manifest.write(o.common.manifest);
  }
  return 0;
}

struct SynthOptions {
  Common common;
  std::string out, vocab_out, synonyms_out;
  std::size_t records = 2000;
  double malicious_fraction = 0.1;
  bool context_dependent = false;
};

int run_synth(const SynthOptions& o, std::ostream& out, std::ostream&) {
  RunManifest manifest("synth", o.common.seed);
  SyntheticOptions so;
  so.records = o.records;
  so.malicious_fraction = o.malicious_fraction;
  so.context_dependent = o.context_dependent;
  so.seed = o.common.seed;
  const auto records = synthetic_corpus(so);
  write_dataset(o.out, records);
  manifest.add_output(o.out);
  if (!o.vocab_out.empty()) {
    synthetic_vocabulary().save(o.vocab_out);
    manifest.add_output(o.vocab_out);
  }
  if (!o.synonyms_out.empty()) {
    json j = json::object();
    for (const auto& [w, list] : synthetic_synonyms()) j[w] = list;
    write_json_file(o.synonyms_out, j);
    manifest.add_output(o.synonyms_out);
  }
  out << "wrote " << records.size() << " records\n";
  manifest.set_config({{"records", o.records}, {"malicious_fraction", o.malicious_fraction},
                       {"context_dependent", o.context_dependent}});
  manifest.write(manifest_path(o.common, sibling_manifest(o.out)));
  return 0;
}

struct BaselineOptions {
  Common common;
  std::string data, out, test, metrics;
  std::size_t iterations = 300;
  double lr = 2.0;
  double bec_weight = 100.0;
};

int run_baseline(const BaselineOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("baseline", o.common.seed);
  const auto records = read_records(o.data, false, err);
  manifest.add_input(o.data);
  std::vector<std::string> docs;
  std::vector<int> labels;
  std::vector<double> weights;
  for (const auto& r : records) {
    docs.push_back(build_content(r));
    labels.push_back(r.label);
    weights.push_back(r.weight * (r.group && *r.group == "bec" ? o.bec_weight : 1.0));
  }
  TfidfConfig tc;
  tc.iterations = o.iterations;
  tc.learning_rate = o.lr;
  const auto lr = TfidfLogisticRegression::fit(docs, labels, weights, tc);
  write_json_file(o.out, lr.to_json());
  manifest.add_output(o.out);
  out << "vocabulary " << lr.vocabulary_size() << " n-grams\n";
  if (!o.test.empty()) {
    const auto test = read_records(o.test, false, err);
    manifest.add_input(o.test);
    ScoreSet s;
    for (const auto& r : test) {
      s.scores.push_back(lr.predict(build_content(r)));
      s.labels.push_back(r.label);
      s.groups.push_back(r.group.value_or(""));
    }
    const json m = metrics_to_json(s, kDefaultFprs);
    out << "test auc " << std::setprecision(6) << m.at("auc").get<double>() << "\n";
    if (!o.metrics.empty()) {
      write_json_file(o.metrics, m);
      manifest.add_output(o.metrics);
    }
  }
  manifest.set_config({{"iterations", o.iterations}, {"learning_rate", o.lr}, {"bec_weight", o.bec_weight}});
  manifest.write(manifest_path(o.common, sibling_manifest(o.out)));
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"catbert: compact transformer phishing detector with context features", "catbert"};
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Extract content text and context features from a JSONL dataset");
  add_common(s_ingest, ingest.common);
  s_ingest->add_option("--in", ingest.in, "Input dataset (JSON Lines)")->required()->check(CLI::ExistingFile);
  s_ingest->add_option("--out", ingest.out, "Output feature file (JSON Lines)")->required();
  s_ingest->add_flag("--strict", ingest.strict, "Fail on the first malformed line");

  SplitOptions split_o;
  auto* s_split = app.add_subcommand("split", "Split a dataset by first-seen time");
  add_common(s_split, split_o.common);
  s_split->add_option("--in", split_o.in, "Input dataset")->required()->check(CLI::ExistingFile);
  s_split->add_option("--out-dir", split_o.out_dir, "Directory for train/validation/test.jsonl")->required();
  s_split->add_option("--fractions", split_o.fractions, "train,validation,test fractions")->capture_default_str();

  TrainOptions train_o;
  auto* s_train = app.add_subcommand("train", "Train a model with balanced batches and weighted BCE");
  add_common(s_train, train_o.common);
  s_train->add_option("--data", train_o.data, "Training dataset")->required()->check(CLI::ExistingFile);
  s_train->add_option("--validation", train_o.validation, "Validation dataset (default: time split of --data)")
      ->check(CLI::ExistingFile);
  s_train->add_option("--fractions", train_o.fractions, "Split of --data when --validation is absent")
      ->capture_default_str();
  s_train->add_option("--vocab", train_o.vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  s_train->add_option("--config", train_o.config, "JSON config with \"model\" and \"train\" sections")
      ->check(CLI::ExistingFile);
  s_train->add_option("--init", train_o.init, "Start from this checkpoint (e.g. a surgery output)")
      ->check(CLI::ExistingDirectory);
  s_train->add_option("--out", train_o.out, "Checkpoint directory")->required();
  s_train->add_option("--epochs", train_o.epochs, "Override epochs");
  s_train->add_option("--batch-size", train_o.batch_size, "Override batch size");
  s_train->add_option("--lr", train_o.lr, "Override learning rate");
  s_train->add_option("--bec-weight", train_o.bec_weight, "Override the weight of group=bec records");
  s_train->add_option("--freeze", train_o.freeze, "Freeze preset: none | partial-finetune");
  s_train->add_option("--max-len", train_o.max_len, "Override token limit");
  s_train->add_option("--truncate", train_o.truncate, "Truncation side: head | tail");

  SurgeryCliOptions surgery_o;
  auto* s_surgery = app.add_subcommand("surgery", "Build a compressed model from a donor checkpoint");
  add_common(s_surgery, surgery_o.common);
  s_surgery->add_option("--donor", surgery_o.donor, "Donor checkpoint")->required()->check(CLI::ExistingDirectory);
  s_surgery->add_option("--keep", surgery_o.keep, "Donor blocks to keep")->capture_default_str();
  s_surgery->add_option("--out", surgery_o.out, "Output checkpoint directory")->required();
  s_surgery->add_option("--config", surgery_o.config, "Target model config (default: T,A per kept block)")
      ->check(CLI::ExistingFile);
  s_surgery->add_flag("--zero-adapters", surgery_o.zero_adapters, "Start adapters as identity maps");

  ParamsOptions params_o;
  auto* s_params = app.add_subcommand("params", "Print the parameter report for a model config");
  add_common(s_params, params_o.common);
  s_params->add_option("--config", params_o.config, "Model config file")->check(CLI::ExistingFile);
  s_params->add_option("--preset", params_o.preset, "paper | distilbert | tiny");
  s_params->add_flag("--json", params_o.as_json, "Print JSON");

  EvalOptions eval_o;
  auto* s_eval = app.add_subcommand("eval", "AUC, TPR at fixed FPRs and per-group metrics");
  add_common(s_eval, eval_o.common);
  s_eval->add_option("--model", eval_o.models, "Checkpoint (repeat for several runs)")->required();
  s_eval->add_option("--data", eval_o.data, "Test dataset")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--vocab", eval_o.vocab, "Vocabulary (default: the checkpoint's)");
  s_eval->add_option("--fprs", eval_o.fprs, "Target false-positive rates")->delimiter(',')->capture_default_str();
  s_eval->add_option("--out", eval_o.out, "Metrics JSON")->required();
  s_eval->add_option("--roc", eval_o.roc, "ROC curve CSV for the first model");

  PredictOptions predict_o;
  auto* s_predict = app.add_subcommand("predict", "Score records, one JSON line each");
  add_common(s_predict, predict_o.common);
  s_predict->add_option("--model", predict_o.model, "Checkpoint")->required()->check(CLI::ExistingDirectory);
  s_predict->add_option("--in", predict_o.in, "Records to score")->required()->check(CLI::ExistingFile);
  s_predict->add_option("--vocab", predict_o.vocab, "Vocabulary (default: the checkpoint's)");
  s_predict->add_option("--out", predict_o.out, "Write scores here instead of standard output");

  AttackCliOptions attack_o;
  auto* s_attack = app.add_subcommand("attack", "Perturb malicious records with synonyms, typos or homoglyphs");
  add_common(s_attack, attack_o.common);
  s_attack->add_option("--kind", attack_o.kind, "synonym | typo | homoglyph")->capture_default_str();
  s_attack->add_option("--rate", attack_o.rate, "Share of eligible words perturbed")->capture_default_str();
  s_attack->add_option("--in", attack_o.in, "Input dataset")->required()->check(CLI::ExistingFile);
  s_attack->add_option("--out", attack_o.out, "Attacked dataset")->required();
  s_attack->add_option("--synonyms", attack_o.synonyms, "Synonym table JSON (default: built-in)")
      ->check(CLI::ExistingFile);
  s_attack->add_option("--homoglyphs", attack_o.homoglyphs, "Homoglyph map JSON")->check(CLI::ExistingFile);
  s_attack->add_flag("--all", attack_o.all, "Attack benign records too");
  s_attack->add_option("--model", attack_o.model, "Report accuracy under attack for this checkpoint")
      ->check(CLI::ExistingDirectory);
  s_attack->add_option("--vocab", attack_o.vocab, "Vocabulary (default: the checkpoint's)");
  auto* threshold_opt =
      s_attack->add_option("--threshold", attack_o.threshold, "Detection threshold")->capture_default_str();
  s_attack->add_option("--threshold-fpr", attack_o.threshold_fpr, "Derive the threshold from this FPR on --validation")
      ->excludes(threshold_opt);
  s_attack->add_option("--validation", attack_o.validation, "Held-out records for --threshold-fpr")
      ->check(CLI::ExistingFile);
  s_attack->add_option("--report", attack_o.report, "Accuracy report JSON");

  ExplainOptions explain_o;
  auto* s_explain = app.add_subcommand("explain", "Local linear explanation of one record's score");
  add_common(s_explain, explain_o.common);
  s_explain->add_option("--model", explain_o.model, "Checkpoint")->required()->check(CLI::ExistingDirectory);
  s_explain->add_option("--data", explain_o.data, "Dataset holding the record")->required()->check(CLI::ExistingFile);
  s_explain->add_option("--record-id", explain_o.record_id, "Record id, or 0-based index")->required();
  s_explain->add_option("--samples", explain_o.samples, "Neighbourhood size")->capture_default_str();
  s_explain->add_option("--top-k", explain_o.top_k, "Tokens listed per sign")->capture_default_str();
  s_explain->add_option("--vocab", explain_o.vocab, "Vocabulary (default: the checkpoint's)");
  s_explain->add_option("--out", explain_o.out, "Attribution JSON");

  BenchCliOptions bench_o;
  auto* s_bench = app.add_subcommand("bench", "Time CPU inference, optionally against a second config");
  add_common(s_bench, bench_o.common);
  s_bench->add_option("--config", bench_o.config, "Model config file")->check(CLI::ExistingFile);
  s_bench->add_option("--preset", bench_o.preset, "paper | distilbert | tiny");
  s_bench->add_option("--model", bench_o.model, "Checkpoint")->check(CLI::ExistingDirectory);
  s_bench->add_option("--compare", bench_o.compare, "Second model config file")->check(CLI::ExistingFile);
  s_bench->add_option("--compare-preset", bench_o.compare_preset, "Second model preset");
  s_bench->add_option("--batch-sizes", bench_o.batch_sizes, "Batch sizes")->delimiter(',')->capture_default_str();
  s_bench->add_option("--repetitions", bench_o.repetitions, "Timed runs per batch size")->capture_default_str();
  s_bench->add_option("--warmup", bench_o.warmup, "Untimed runs (at least 3)")->capture_default_str();
  s_bench->add_option("--seq-len", bench_o.seq_len, "Tokens per sequence")->capture_default_str();
  s_bench->add_option("--out", bench_o.out, "Timing JSON");

  SynthOptions synth_o;
  auto* s_synth = app.add_subcommand("synth", "Generate the planted-token synthetic corpus");
  add_common(s_synth, synth_o.common);
  s_synth->add_option("--out", synth_o.out, "Dataset path")->required();
  s_synth->add_option("--records", synth_o.records, "Number of records")->capture_default_str();
  s_synth->add_option("--malicious-fraction", synth_o.malicious_fraction, "Share of malicious records")
      ->capture_default_str();
  s_synth->add_flag("--context-dependent", synth_o.context_dependent, "Tie the label to the external flag");
  s_synth->add_option("--vocab-out", synth_o.vocab_out, "Write the matching vocabulary");
  s_synth->add_option("--synonyms-out", synth_o.synonyms_out, "Write the matching synonym table");

  BaselineOptions baseline_o;
  auto* s_baseline = app.add_subcommand("baseline", "Fit the TF-IDF logistic regression baseline");
  add_common(s_baseline, baseline_o.common);
  s_baseline->add_option("--data", baseline_o.data, "Training dataset")->required()->check(CLI::ExistingFile);
  s_baseline->add_option("--out", baseline_o.out, "Model JSON")->required();
  s_baseline->add_option("--test", baseline_o.test, "Test dataset to score")->check(CLI::ExistingFile);
  s_baseline->add_option("--metrics", baseline_o.metrics, "Test metrics JSON");
  s_baseline->add_option("--iterations", baseline_o.iterations, "Gradient descent steps")->capture_default_str();
  s_baseline->add_option("--lr", baseline_o.lr, "Step size")->capture_default_str();
  s_baseline->add_option("--bec-weight", baseline_o.bec_weight, "Weight of group=bec records")->capture_default_str();

  if (args.empty()) {
    err << app.help();
    return 1;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (s_ingest->parsed()) return run_ingest(ingest, out, err);
    if (s_split->parsed()) return run_split(split_o, out, err);
    if (s_train->parsed()) return run_train(train_o, out, err);
    if (s_surgery->parsed()) return run_surgery(surgery_o, out, err);
    if (s_params->parsed()) return run_params(params_o, out, err);
    if (s_eval->parsed()) return run_eval(eval_o, out, err);
    if (s_predict->parsed()) return run_predict(predict_o, out, err);
    if (s_attack->parsed()) return run_attack(attack_o, out, err);
    if (s_explain->parsed()) return run_explain(explain_o, out, err);
    if (s_bench->parsed()) return run_bench(bench_o, out, err);
    if (s_synth->parsed()) return run_synth(synth_o, out, err);
    if (s_baseline->parsed()) return run_baseline(baseline_o, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace catbert

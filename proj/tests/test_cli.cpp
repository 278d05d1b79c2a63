#include <doctest.h>

#include <fstream>
#include <sstream>

#include "catbert/cli.hpp"
#include "helpers.hpp"

using namespace catbert;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

// A corpus, a small config and a trained checkpoint shared by the cases.
const std::filesystem::path& workspace() {
  static const std::filesystem::path dir = [] {
    const auto d = testing::scratch_dir("cli");
    REQUIRE(run({"synth", "--out", (d / "data.jsonl").string(), "--records", "300", "--seed", "1", "--vocab-out",
                 (d / "vocab.txt").string()})
                .code == 0);
    std::ofstream(d / "config.json") << R"({"model": {"hidden": 16, "ffn": 32, "heads": 2, "max_positions": 64,
      "plan": "TATA"}, "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.001, "max_len": 48}})";
    REQUIRE(run({"train", "--data", (d / "data.jsonl").string(), "--vocab", (d / "vocab.txt").string(), "--config",
                 (d / "config.json").string(), "--out", (d / "model").string(), "--seed", "2"})
                .code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 1") {
    CHECK(run({}).code == 1);
    const auto bad = run({"params", "--no-such-flag"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("--no-such-flag") != std::string::npos);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"eval", "--model", "/does/not/exist", "--data", "x"}).code == 1);
    CHECK(run({"params", "--preset", "huge"}).code == 1);
  }

  TEST_CASE("help and version") {
    const auto v = run({"--version"});
    CHECK(v.code == 0);
    CHECK(v.out.find(kToolVersion) != std::string::npos);
    CHECK(run({"--help"}).code == 0);
  }

  TEST_CASE("params for the paper preset") {
    const auto r = run({"params", "--preset", "paper", "--json"});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["total"] == 117608449);
    CHECK(j["embedding"] == 92206848);
    CHECK(run({"params", "--preset", "paper"}).out.find("117") != std::string::npos);
  }

  TEST_CASE("train writes a checkpoint, history and manifest") {
    const auto& d = workspace();
    CHECK(std::filesystem::exists(d / "model" / "manifest.json"));
    CHECK(std::filesystem::exists(d / "model" / "vocab.txt"));
    const auto history = json::parse(slurp(d / "model" / "history.json"));
    CHECK(history["epochs"].size() == 2);
    const auto manifest = json::parse(slurp(d / "model" / "run_manifest.json"));
    CHECK(manifest["subcommand"] == "train");
    CHECK(manifest["seed"] == 2);
    CHECK(manifest["duration_seconds"].is_number());
    CHECK_FALSE(manifest["outputs"].empty());
  }

  TEST_CASE("predict gives probabilities") {
    const auto& d = workspace();
    const auto r = run({"predict", "--model", (d / "model").string(), "--in", (d / "data.jsonl").string()});
    REQUIRE(r.code == 0);
    const auto rows = json_lines(r.out);
    REQUIRE(rows.size() == 300);
    for (const auto& row : rows) {
      CHECK(row["prob"].get<double>() > 0.0);
      CHECK(row["prob"].get<double>() < 1.0);
    }
    CHECK(rows[0]["id"] == "syn-000000");
  }

  TEST_CASE("eval writes metrics and a roc curve") {
    const auto& d = workspace();
    const auto r = run({"eval", "--model", (d / "model").string(), "--data", (d / "data.jsonl").string(), "--out",
                        (d / "metrics.json").string(), "--roc", (d / "roc.csv").string()});
    REQUIRE(r.code == 0);
    const auto m = json::parse(slurp(d / "metrics.json"));
    CHECK(m["auc"].get<double>() >= 0.0);
    CHECK(m["auc"].get<double>() <= 1.0);
    CHECK(m["tpr_at_fpr"].size() == 4);
    CHECK(slurp(d / "roc.csv").rfind("fpr,tpr,threshold", 0) == 0);
  }

  TEST_CASE("attack and explain") {
    const auto& d = workspace();
    const auto a = run({"attack", "--kind", "typo", "--rate", "0.5", "--in", (d / "data.jsonl").string(), "--out",
                        (d / "typo.jsonl").string(), "--model", (d / "model").string()});
    REQUIRE(a.code == 0);
    const auto report = json::parse(a.out);
    CHECK(report.contains("delta"));
    CHECK(json_lines(slurp(d / "typo.jsonl")).size() == 300);

    const auto f = run({"attack", "--kind", "typo", "--in", (d / "data.jsonl").string(), "--out",
                        (d / "typo2.jsonl").string(), "--model", (d / "model").string(), "--threshold-fpr", "0.05",
                        "--validation", (d / "data.jsonl").string()});
    CHECK(f.code == 0);
    CHECK(run({"attack", "--in", (d / "data.jsonl").string(), "--out", (d / "x.jsonl").string(), "--threshold-fpr",
               "0.05"})
              .code == 1);

    const auto e = run({"explain", "--model", (d / "model").string(), "--data", (d / "data.jsonl").string(),
                        "--record-id", "syn-000003", "--samples", "100", "--out", (d / "lime.json").string()});
    REQUIRE(e.code == 0);
    CHECK(json::parse(slurp(d / "lime.json"))["record"] == "syn-000003");
    CHECK(run({"explain", "--model", (d / "model").string(), "--data", (d / "data.jsonl").string(), "--record-id",
               "nope"})
              .code == 2);
  }

  TEST_CASE("surgery and bench") {
    const auto& d = workspace();
    const auto s = run({"surgery", "--donor", (d / "model").string(), "--keep", "0,2", "--out",
                        (d / "cut").string()});
    REQUIRE(s.code == 0);
    CHECK(std::filesystem::exists(d / "cut" / "vocab.txt"));
    CHECK(run({"surgery", "--donor", (d / "model").string(), "--keep", "9", "--out", (d / "bad").string()}).code != 0);
    const auto b = run({"bench", "--model", (d / "cut").string(), "--repetitions", "3", "--seq-len", "16"});
    CHECK(b.code == 0);
  }

  TEST_CASE("split and baseline") {
    const auto& d = workspace();
    REQUIRE(run({"split", "--in", (d / "data.jsonl").string(), "--out-dir", (d / "parts").string()}).code == 0);
    CHECK(json_lines(slurp(d / "parts" / "train.jsonl")).size() == 210);
    CHECK(json_lines(slurp(d / "parts" / "test.jsonl")).size() == 45);
    const auto b = run({"baseline", "--data", (d / "parts" / "train.jsonl").string(), "--out",
                        (d / "lr.json").string(), "--test", (d / "parts" / "test.jsonl").string(), "--metrics",
                        (d / "lr_metrics.json").string()});
    CHECK(b.code == 0);
    CHECK(json::parse(slurp(d / "lr_metrics.json")).contains("auc"));
  }

  TEST_CASE("bad input lines are reported with their numbers") {
    const auto d = testing::scratch_dir("cli-bad");
    std::ofstream(d / "raw.jsonl") << R"({"subject":"a","from":"x@y.z","to":["q@y.z"],"label":0})" "\n"
                                   << "{broken\n";
    const auto r = run({"ingest", "--in", (d / "raw.jsonl").string(), "--out", (d / "f.jsonl").string()});
    CHECK(r.code == 0);
    CHECK(r.err.find(":2:") != std::string::npos);
    CHECK(run({"ingest", "--in", (d / "raw.jsonl").string(), "--out", (d / "g.jsonl").string(), "--strict"}).code ==
          2);
  }
}

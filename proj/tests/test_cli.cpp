#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lpcaps/cli.hpp"
#include "lpcaps/corpus.hpp"
#include "lpcaps/io.hpp"
#include "support/fixtures.hpp"

namespace {

using lpcaps::cli::run;
using nlohmann::json;
namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

std::string slurp(const fs::path& p) { return lpcaps::io::read_file(p); }

const char* kThree =
    "{\"track_id\":\"a\",\"tags\":[\"rock\",\"electric guitar\"]}\n"
    "{\"track_id\":\"b\",\"tags\":[\"jazz\",\"piano\",\"mellow\"]}\n"
    "{\"track_id\":\"c\",\"tags\":[\"ambient\"]}\n";

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"stats"}).code, 2);
  EXPECT_EQ(invoke({"--version"}).code, 0);
}

TEST(Cli, GenerateIsByteReproducible) {
  fixtures::TempDir dir;
  write(dir / "in.jsonl", kThree);
  const auto gen = [&](const std::string& name) {
    return invoke({"--seed", "5", "generate", "--input", (dir / "in.jsonl").string(), "--out",
                   (dir / name).string()});
  };
  ASSERT_EQ(gen("one.jsonl").code, 0);
  ASSERT_EQ(gen("two.jsonl").code, 0);
  const auto one = slurp(dir / "one.jsonl");
  EXPECT_EQ(one, slurp(dir / "two.jsonl"));
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 3);

  const auto m1 = json::parse(slurp(dir / "one.jsonl.manifest.json"));
  const auto m2 = json::parse(slurp(dir / "two.jsonl.manifest.json"));
  EXPECT_EQ(m1["seed"], 5);
  EXPECT_EQ(m1["command"], "generate");
  EXPECT_EQ(m1["outputs"][0]["sha256"], m2["outputs"][0]["sha256"]);
  EXPECT_TRUE(m1.contains("started_at"));
  EXPECT_TRUE(m1.contains("tool_version"));

  EXPECT_EQ(invoke({"--seed", "5", "generate", "--input", (dir / "in.jsonl").string(), "--out",
                    (dir / "one.jsonl").string()})
                .code,
            0);
  const auto m3 = json::parse(slurp(dir / "one.jsonl.manifest.json"));
  EXPECT_EQ(m3["fingerprint"], m1["fingerprint"]);
}

TEST(Cli, WritingOnlyGivesOneCaptionPerAudio) {
  fixtures::TempDir dir;
  write(dir / "in.jsonl", kThree);
  ASSERT_EQ(invoke({"generate", "--input", (dir / "in.jsonl").string(), "--kinds", "writing",
                    "--out", (dir / "ds.jsonl").string()})
                .code,
            0);
  const auto r = invoke({"stats", "--dataset", (dir / "ds.jsonl").string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_DOUBLE_EQ(json::parse(r.out)["captions_per_audio"].get<double>(), 1.0);
}

TEST(Cli, UnreachableProviderFailsEveryItem) {
  fixtures::TempDir dir;
  write(dir / "in.jsonl", kThree);
  const int port = fixtures::closed_port();
  const std::string url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  ::setenv("LLM_API_KEY", "test", 1);
  ::setenv("LLM_BASE_URL", url.c_str(), 1);
  const auto r = invoke({"generate", "--provider", "http", "--max-retries", "0", "--input",
                         (dir / "in.jsonl").string(), "--out", (dir / "ds.jsonl").string()});
  ::unsetenv("LLM_API_KEY");
  ::unsetenv("LLM_BASE_URL");
  EXPECT_EQ(r.code, 1);
  const auto report = json::parse(slurp(dir / "ds.jsonl.failures.json"));
  EXPECT_EQ(report["failures"].size(), 12u);
  for (const auto& f : report["failures"]) EXPECT_EQ(f["code"], "provider_unreachable");
  EXPECT_TRUE(fs::exists(dir / "ds.jsonl"));
}

TEST(Cli, IngestAssembleRoundTrip) {
  fixtures::TempDir dir;
  write(dir / "mc.csv",
        "ytid,start_s,end_s,aspect_list,caption\n"
        "x1,0,10,\"['Rock', 'guitar']\",\"A rock song with guitar.\"\n");
  ASSERT_EQ(invoke({"ingest", "--input", (dir / "mc.csv").string(), "--out",
                    (dir / "rec.jsonl").string()})
                .code,
            0);
  const auto recs = lpcaps::corpus::ingest_jsonl(dir / "rec.jsonl");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].tags, (std::vector<std::string>{"rock", "guitar"}));
  ASSERT_EQ(invoke({"generate", "--input", (dir / "rec.jsonl").string(), "--out",
                    (dir / "ds.jsonl").string(), "--captions-out", (dir / "caps.jsonl").string()})
                .code,
            0);
  ASSERT_EQ(invoke({"assemble", "--records", (dir / "rec.jsonl").string(), "--captions",
                    (dir / "caps.jsonl").string(), "--out", (dir / "ds2.jsonl").string()})
                .code,
            0);
  EXPECT_EQ(slurp(dir / "ds.jsonl"), slurp(dir / "ds2.jsonl"));
}

TEST(Cli, EvalIdentityAndErrors) {
  fixtures::TempDir dir;
  write(dir / "c.txt", "a slow jazz piece with soft piano\nan energetic rock anthem\n");
  write(dir / "empty.txt", "");
  const auto r = invoke({"eval", "--candidates", (dir / "c.txt").string(), "--references",
                         (dir / "c.txt").string(), "--out", (dir / "m.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(slurp(dir / "m.json"));
  for (const char* k : {"b1", "b2", "b3", "b4", "rouge_l"}) EXPECT_DOUBLE_EQ(j[k].get<double>(), 1.0);
  for (const char* k : {"meteor", "bert_s", "vocab", "novel_v", "avg_token"}) EXPECT_TRUE(j.contains(k));
  EXPECT_TRUE(fs::exists(dir / "m.json.manifest.json"));

  EXPECT_EQ(invoke({"eval", "--candidates", (dir / "empty.txt").string(), "--references",
                    (dir / "c.txt").string()})
                .code,
            2);
  const auto missing = invoke({"eval", "--candidates", (dir / "c.txt").string(), "--references",
                               (dir / "c.txt").string(), "--cand-embeddings",
                               (dir / "nope.jsonl").string(), "--ref-embeddings",
                               (dir / "nope.jsonl").string()});
  EXPECT_NE(missing.code, 0);
  EXPECT_NE(missing.err.find("missing_embedding"), std::string::npos);
}

TEST(Cli, ConfigFileMergesUnderFlags) {
  fixtures::TempDir dir;
  write(dir / "in.jsonl", kThree);
  write(dir / "run.conf", "seed = 9\nkinds = summary\nmodel = cfg-model\n");
  ASSERT_EQ(invoke({"--config", (dir / "run.conf").string(), "generate", "--input",
                    (dir / "in.jsonl").string(), "--model", "flag-model", "--out",
                    (dir / "ds.jsonl").string()})
                .code,
            0);
  const auto m = json::parse(slurp(dir / "ds.jsonl.manifest.json"));
  EXPECT_EQ(m["seed"], 9);
  EXPECT_EQ(m["config"]["kinds"], "summary");
  EXPECT_EQ(m["config"]["model"], "flag-model");

  write(dir / "bad.conf", "colour = blue\n");
  EXPECT_EQ(invoke({"--config", (dir / "bad.conf").string(), "generate", "--input",
                    (dir / "in.jsonl").string(), "--out", (dir / "x.jsonl").string()})
                .code,
            2);
}

TEST(Cli, SampleIsSeeded) {
  fixtures::TempDir dir;
  write(dir / "in.jsonl", kThree);
  const auto a = invoke({"--seed", "3", "sample", "--input", (dir / "in.jsonl").string(), "--n", "50"});
  const auto b = invoke({"--seed", "3", "sample", "--input", (dir / "in.jsonl").string(), "--n", "50"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 50);
}

TEST(Cli, AbtestBuildAndReport) {
  fixtures::TempDir dir;
  std::string gt;
  std::vector<std::string> method_files;
  for (int s = 0; s < 240; ++s) {
    gt += json{{"id", "clip" + std::to_string(s)}, {"caption", "truth " + std::to_string(s)}}.dump() + "\n";
  }
  write(dir / "gt.jsonl", gt);
  std::vector<std::string> args{"--seed", "4", "abtest", "build", "--ground-truth",
                                (dir / "gt.jsonl").string(), "--out", (dir / "study").string(),
                                "--study-id", "mc"};
  for (int m = 0; m < 5; ++m) {
    std::string body;
    for (int s = 0; s < 240; ++s) {
      body += json{{"id", "clip" + std::to_string(s)}, {"caption", "m" + std::to_string(m)}}.dump() + "\n";
    }
    const auto path = dir / ("m" + std::to_string(m) + ".jsonl");
    write(path, body);
    args.push_back("--method");
    args.push_back("m" + std::to_string(m) + "=" + path.string());
  }
  const auto built = invoke(args);
  ASSERT_EQ(built.code, 0) << built.err;
  const auto study = json::parse(slurp(dir / "study" / "study.json"));
  EXPECT_EQ(study["questions"].size(), 1200u);

  const auto report = invoke({"abtest", "report", "--study", (dir / "study").string(), "--json"});
  ASSERT_EQ(report.code, 0);
  EXPECT_EQ(json::parse(report.out)["methods"]["m0"]["q1"]["total"], 0);
  EXPECT_EQ(invoke({"abtest", "report", "--study", (dir / "absent").string()}).code, 2);
}

}  // namespace

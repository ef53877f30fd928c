#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "rchat/cli.hpp"
#include "rchat/benchmark.hpp"
#include "rchat/text.hpp"
#include "sheets.hpp"
#include "support.hpp"

using namespace rchat;
using rchat::testing::TempDir;
using rchat::testing::fixtures;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::filesystem::path& out_dir, std::vector<std::string> args,
               std::map<std::string, std::string> env = {}, bool mock = true) {
  std::vector<std::string> argv = {"rchat", "--config", (fixtures() / "config.toml").string(), "--out",
                                   out_dir.string()};
  if (mock) {
    argv.push_back("--mock-script");
    argv.push_back((fixtures() / "mock_script.json").string());
  }
  argv.insert(argv.end(), args.begin(), args.end());
  std::ostringstream out, err;
  const int code = cli::run(argv, out, err, [env](const std::string& k) -> std::optional<std::string> {
    const auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  });
  return {code, out.str(), err.str()};
}

std::string corpus() { return (fixtures() / "corpus").string(); }

std::string dataset() { return (rchat::testing::data_dir() / "benchmark" / "mcq.json").string(); }

}  // namespace

TEST(Cli, UsageErrors) {
  TempDir dir;
  EXPECT_EQ(run_cli(dir.path(), {}).code, cli::kUsage);
  EXPECT_EQ(run_cli(dir.path(), {"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run_cli(dir.path(), {"query", "x", "--mode", "sideways"}).code, cli::kUsage);
  EXPECT_EQ(run_cli(dir.path(), {"ingest", corpus(), "--size", "100", "--overlap", "100"}).code, cli::kUsage);
  EXPECT_EQ(run_cli(dir.path(), {"bench", "run", "--dataset", dataset(), "--target", "provider", "--key", "K2"}).code, cli::kUsage);
  EXPECT_EQ(run_cli(dir.path(), {"--version"}).code, cli::kOk);
}

TEST(Cli, IngestBuildQuery) {
  TempDir dir;
  const auto ingest = run_cli(dir.path(), {"ingest", corpus()});
  ASSERT_EQ(ingest.code, cli::kOk) << ingest.err;
  EXPECT_EQ(ingest.out, "ingested 3 documents into 3 chunks (2 Q&A pairs)\n");
  const auto first = text::read_file((dir / "chunks.csv").string());
  ASSERT_EQ(run_cli(dir.path(), {"ingest", corpus()}).code, cli::kOk);
  EXPECT_EQ(text::read_file((dir / "chunks.csv").string()), first);

  // Global search before any graph exists is a typed outcome.
  const auto early = run_cli(dir.path(), {"query", "What are the main themes?", "--mode", "global"});
  EXPECT_EQ(early.code, cli::kOutcome);
  EXPECT_NE(early.err.find("NoRelevantCommunities"), std::string::npos);

  const auto build = run_cli(dir.path(), {"build-graph"});
  ASSERT_EQ(build.code, cli::kOk) << build.err;
  EXPECT_EQ(build.out.rfind("graph: 10 entities, 10 relationships, 3 communities", 0), 0u) << build.out;

  const auto local = run_cli(dir.path(), {"query", "What is the spectral radius?"});
  ASSERT_EQ(local.code, cli::kOk) << local.err;
  EXPECT_EQ(local.out, "The spectral radius scales the recurrent weights of the reservoir and sets how long inputs echo.\n");
  EXPECT_NE(local.err.find("trace: entity SPECTRAL RADIUS"), std::string::npos);
  EXPECT_NE(local.err.find("mode: local (knowledge)"), std::string::npos);

  const auto global = run_cli(dir.path(), {"query", "What are the main themes?", "--mode", "global"});
  EXPECT_EQ(global.code, cli::kOk) << global.err;

  const auto faq = run_cli(dir.path(), {"query", "zebra quantum marmalade", "--mode", "faq"});
  EXPECT_EQ(faq.code, cli::kOutcome);
  EXPECT_NE(faq.err.find("NoMatch"), std::string::npos);

  const auto exported = run_cli(dir.path(), {"prompts", "export"});
  EXPECT_EQ(exported.code, cli::kOk);
  EXPECT_TRUE(std::filesystem::exists(dir / "prompts"));
}

TEST(Cli, QueryBeforeIngestIsNotBuilt) {
  TempDir dir;
  const auto r = run_cli(dir.path(), {"query", "anything"});
  EXPECT_EQ(r.code, cli::kOutcome);
  EXPECT_NE(r.err.find("NotBuilt"), std::string::npos);
}

TEST(Cli, UnreachableProviderExitsThree) {
  TempDir dir;
  const std::map<std::string, std::string> env = {{"RCHAT_PROVIDER_KIND", "http"},
                                                  {"RCHAT_PROVIDER_BASE_URL", "http://127.0.0.1:1"},
                                                  {"RCHAT_PROVIDER_MAX_RETRIES", "0"},
                                                  {"RCHAT_PROVIDER_TIMEOUT_SECONDS", "2"}};
  const auto r = run_cli(dir.path(), {"ingest", corpus()}, env, false);
  EXPECT_EQ(r.code, cli::kProviderFailure) << r.err;
}

TEST(Cli, BenchRunAndReport) {
  TempDir dir;
  const auto run = run_cli(dir.path(), {"bench", "run", "--dataset", dataset(), "--target", "provider", "--name", "mock", "--reps", "2"});
  ASSERT_EQ(run.code, cli::kOk) << run.err;
  EXPECT_NE(run.err.find("K2"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "bench" / "mock" / "attempts.jsonl"));

  write_results(sheets::reported_sheet("ours"), dir / "ours");
  write_results(sheets::baseline_sheet("baseline"), dir / "baseline");
  const auto report = run_cli(dir.path(), {"bench", "report", "--results", (dir / "ours").string(),
                                           (dir / "baseline").string()});
  ASSERT_EQ(report.code, cli::kOk) << report.err;
  EXPECT_NE(report.out.find("+73.20%"), std::string::npos);
  EXPECT_NE(report.out.find("-6.70%"), std::string::npos);
  EXPECT_NE(text::read_file((dir / "report" / "percentage_code.csv").string()).find("+73.20%"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "report" / "pearson_correctness.csv"));
  EXPECT_NE(text::read_file((dir / "report" / "variability.csv").string()).find("ours,code,3,14,21.4%"),
            std::string::npos);

  const auto exact = run_cli(dir.path(), {"bench", "report", "--basis", "exact", "--results",
                                          (dir / "ours").string(), (dir / "baseline").string()});
  EXPECT_NE(exact.out.find("+73.33%"), std::string::npos);

  // The mock run used 2 repetitions; mixing it with 3-repetition sheets is rejected.
  const auto mixed = run_cli(dir.path(), {"bench", "report", "--results", (dir / "ours").string(),
                                          (dir / "bench" / "mock").string()});
  EXPECT_EQ(mixed.code, cli::kOutcome);
  EXPECT_NE(mixed.err.find("MismatchedQuestionSets"), std::string::npos);
}

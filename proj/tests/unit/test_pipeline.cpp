#include <gtest/gtest.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "rchat/errors.hpp"
#include "rchat/pipeline.hpp"
#include "rchat/text.hpp"
#include "support.hpp"

using namespace rchat;
using rchat::testing::TempDir;

namespace {

const std::vector<std::string> kGraphFiles = {"entities.json", "relationships.json", "communities.json",
                                              "reports.json"};

std::filesystem::path golden_dir() { return rchat::testing::fixtures() / "golden"; }

std::string read(const std::filesystem::path& p) { return text::read_file(p.string()); }

}  // namespace

TEST(Pipeline, IngestSummaryAndArtifacts) {
  TempDir out;
  auto mock = rchat::testing::fixture_mock();
  const auto cfg = rchat::testing::fixture_config();
  IngestOptions opts;
  opts.corpus_root = rchat::testing::fixtures() / "corpus";
  opts.chunking = cfg.corpus.chunking;
  const auto s = run_ingest(opts, *mock, out.path());
  EXPECT_EQ(s.documents, 3u);
  EXPECT_EQ(s.chunks, 3u);
  EXPECT_EQ(s.qa_pairs, 2u);
  EXPECT_EQ(s.kinds.at(DocumentKind::code), 1u);
  for (const char* f : {artifact::kChunks, artifact::kCorpusManifest, artifact::kQaPairs, artifact::kQaIndex}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  const auto chunks = load_chunks(out.path());
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].chunk_id, "codes.md#0..501");
  EXPECT_EQ(chunks[0].doc_id, "codes.md");
}

TEST(Pipeline, GoldenSnapshotAndDeterminism) {
  TempDir first, second;
  auto mock_a = rchat::testing::fixture_mock();
  auto mock_b = rchat::testing::fixture_mock();
  rchat::testing::build_fixture(first.path(), *mock_a);
  rchat::testing::build_fixture(second.path(), *mock_b);

  std::vector<std::string> files = kGraphFiles;
  files.insert(files.end(), {artifact::kChunks, artifact::kBuildManifest, artifact::kEntityEmbeddings});
  for (const auto& f : files) EXPECT_EQ(read(first / f), read(second / f)) << f;

  if (std::getenv("RCHAT_UPDATE_GOLDEN") != nullptr) {
    std::filesystem::create_directories(golden_dir());
    for (const auto& f : kGraphFiles) text::write_file((golden_dir() / f).string(), read(first / f));
  }
  for (const auto& f : kGraphFiles) {
    ASSERT_TRUE(std::filesystem::exists(golden_dir() / f)) << f;
    EXPECT_EQ(read(first / f), read(golden_dir() / f)) << f;
  }
}

TEST(Pipeline, GoldenCommunitiesAreModularityOptimal) {
  using nlohmann::json;
  const auto entities = json::parse(read(golden_dir() / "entities.json"));
  std::map<std::string, std::size_t> index;
  for (const auto& e : entities) index.emplace(e.at("name").get<std::string>(), index.size());
  oracle::Graph g;
  g.n = index.size();
  for (const auto& r : json::parse(read(golden_dir() / "relationships.json"))) {
    g.edges.push_back({index.at(r.at("source").get<std::string>()), index.at(r.at("target").get<std::string>()),
                       r.at("weight").get<double>()});
  }
  std::vector<std::size_t> labels(g.n, g.n);
  for (const auto& c : json::parse(read(golden_dir() / "communities.json"))) {
    if (c.at("level") != 0) continue;
    for (const auto& m : c.at("members")) labels[index.at(m.get<std::string>())] = c.at("community_id").get<std::size_t>();
  }
  for (auto l : labels) ASSERT_LT(l, g.n);
  const auto [best, best_labels] = oracle::exhaustive_optimum(g, 1.0);
  EXPECT_NEAR(oracle::naive_modularity(g, labels, 1.0), best, 1e-12);
  EXPECT_TRUE(oracle::communities_connected(g, labels));
}

TEST(Pipeline, BuildManifestRecordsRun) {
  TempDir out;
  auto mock = rchat::testing::fixture_mock();
  rchat::testing::build_fixture(out.path(), *mock);
  const auto m = nlohmann::json::parse(read(out / artifact::kBuildManifest));
  EXPECT_EQ(m.at("seed"), 42);
  EXPECT_EQ(m.at("prompt_version"), PromptSet::defaults().version());
  EXPECT_EQ(m.at("entities"), 10);
  EXPECT_EQ(m.at("relationships"), 10);
  EXPECT_EQ(m.at("stub_entities"), nlohmann::json::array({"WARMUP"}));
  EXPECT_FALSE(m.at("quality_log").empty());
  EXPECT_FALSE(m.contains("timestamp"));
}

TEST(Pipeline, LocalAnswerCitesExpectedSources) {
  TempDir out;
  auto mock = rchat::testing::fixture_mock();
  rchat::testing::build_fixture(out.path(), *mock);
  const auto state = rchat::testing::fixture_state(out.path(), mock);
  const auto answer = state->engine->ask("What is the spectral radius?", {}, ChatMode::local);
  ASSERT_EQ(answer.kind, OutcomeKind::answer);
  bool chunk = false, entity = false;
  for (const auto& t : answer.turn.trace) {
    chunk |= t.kind == SourceKind::chunk && t.id == "esn.md#0..610";
    entity |= t.kind == SourceKind::entity && t.id == "SPECTRAL RADIUS";
  }
  EXPECT_TRUE(chunk);
  EXPECT_TRUE(entity);
  EXPECT_EQ(state->seed, 42u);
  EXPECT_EQ(state->prompt_version, PromptSet::defaults().version());
  EXPECT_EQ(state->kb->code_chunk_ids, std::set<std::string>{"codes.md#0..501"});
}

TEST(Pipeline, ErrorsBeforeIngestAndOnEmptyCorpus) {
  TempDir out;
  auto mock = rchat::testing::fixture_mock();
  try {
    run_build_graph(out.path(), *mock, PromptSet::defaults(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_built);
  }
  EXPECT_THROW(load_knowledge_base(out.path()), Error);

  text::write_file((out / artifact::kChunks).string(), "item_id,text,dim,v0\n");
  try {
    run_build_graph(out.path(), *mock, PromptSet::defaults(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_corpus);
  }
}

TEST(Pipeline, ExtractionFailurePropagates) {
  class Broken final : public Provider {
   public:
    explicit Broken(std::shared_ptr<ScriptedMock> m) : m_(std::move(m)) {}
    std::string complete_chat(const CompletionRequest&) override {
      throw ProviderFailure(ErrorCode::provider_error, 400, "bad", 1);
    }
    std::vector<Vector> embed_texts(std::span<const std::string> t) override { return m_->embed_texts(t); }
    std::string name() const override { return "broken"; }

   private:
    std::shared_ptr<ScriptedMock> m_;
  };
  TempDir out;
  auto mock = rchat::testing::fixture_mock();
  const auto cfg = rchat::testing::fixture_config();
  IngestOptions opts;
  opts.corpus_root = rchat::testing::fixtures() / "corpus";
  run_ingest(opts, *mock, out.path());
  Broken broken(mock);
  EXPECT_THROW(run_build_graph(out.path(), broken, PromptSet::defaults(), rchat::testing::build_options(cfg)), Error);
}

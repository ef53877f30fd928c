#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "rchat/config.hpp"
#include "rchat/model_client.hpp"
#include "rchat/pipeline.hpp"

namespace rchat::testing {

inline std::filesystem::path fixtures() { return RCHAT_FIXTURES_DIR; }
inline std::filesystem::path data_dir() { return RCHAT_DATA_DIR; }

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("rchat-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

inline AppConfig fixture_config() {
  auto cfg = load_config(fixtures() / "config.toml", [](const std::string&) { return std::nullopt; });
  cfg.provider.kind = "mock";
  cfg.provider.mock_script = (fixtures() / "mock_script.json").string();
  return cfg;
}

inline std::shared_ptr<ScriptedMock> fixture_mock() {
  return std::make_shared<ScriptedMock>(load_mock_script((fixtures() / "mock_script.json").string()));
}

inline BuildOptions build_options(const AppConfig& cfg) {
  BuildOptions opts;
  opts.extraction = cfg.graph.extraction;
  opts.merge = cfg.graph.merge;
  opts.leiden = cfg.graph.leiden;
  opts.summarize = cfg.graph.summarize;
  return opts;
}

// Ingests and builds the fixture corpus into `out` with the scripted mock.
inline void build_fixture(const std::filesystem::path& out, Provider& provider) {
  const auto cfg = fixture_config();
  IngestOptions ingest;
  ingest.corpus_root = fixtures() / "corpus";
  ingest.chunking = cfg.corpus.chunking;
  ingest.code_patterns = cfg.corpus.code_patterns;
  run_ingest(ingest, provider, out);
  run_build_graph(out, provider, PromptSet::defaults(), build_options(cfg));
}

// Engine over an already built output directory, using the fixture query options.
inline std::shared_ptr<const EngineState> fixture_state(const std::filesystem::path& out,
                                                        std::shared_ptr<Provider> provider) {
  return load_engine_state(out, std::move(provider), PromptSet::defaults(), fixture_config().query);
}

}  // namespace rchat::testing

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rchat/corpus.hpp"
#include "rchat/knowledge_graph.hpp"
#include "rchat/model_client.hpp"
#include "rchat/query_engine.hpp"

namespace rchat {

struct ProviderSettings {
  std::string kind = "http";  // http or mock
  ProviderConfig http;
  std::string mock_script;  // JSON script for kind = mock; empty uses the default reply only
};

struct CorpusSettings {
  std::string root;
  std::string manifest;
  ChunkParams chunking;
  std::vector<std::string> code_patterns = {"codes.md", "*.py", "*.ipynb"};
};

struct GraphSettings {
  ExtractionOptions extraction;
  MergeOptions merge;
  LeidenOptions leiden;
  SummarizeOptions summarize;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string sessions_db = "sessions.db";
  double session_ttl_hours = 24.0;
  std::string usage_log = "usage.jsonl";
  std::string static_dir;
  double rate_per_second = 2.0;
  double rate_burst = 20.0;
};

struct BenchSettings {
  int repetitions = 3;
  double temperature = 0.1;
  std::string dataset = "data/benchmark/mcq.json";
};

struct AppConfig {
  std::string out = "out";
  std::string prompts_dir;
  ProviderSettings provider;
  CorpusSettings corpus;
  GraphSettings graph;
  EngineOptions query;
  ServiceSettings service;
  BenchSettings bench;
};

// Returns the value of an environment variable, or nullopt.
using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

EnvLookup process_env();

// Defaults, then the TOML text, then RCHAT_<SECTION>_<KEY> variables
// (RCHAT_<KEY> for top-level keys). Unknown keys and wrong types throw
// ConfigError.
AppConfig parse_config(std::string_view toml_text, const EnvLookup& env);
AppConfig load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env = process_env());

// "section.key" names accepted by the loader.
std::vector<std::string> config_keys();

std::unique_ptr<Provider> make_provider(const ProviderSettings& settings);

}  // namespace rchat

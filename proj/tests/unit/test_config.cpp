#include <gtest/gtest.h>

#include <map>

#include "rchat/config.hpp"
#include "rchat/errors.hpp"
#include "rchat/text.hpp"
#include "support.hpp"

using namespace rchat;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    const auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

const EnvLookup kNoEnv = env_of({});

ErrorCode code_of(const std::string& toml, const EnvLookup& env = kNoEnv) {
  try {
    parse_config(toml, env);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = parse_config("", kNoEnv);
  EXPECT_EQ(c.out, "out");
  EXPECT_EQ(c.provider.kind, "http");
  EXPECT_EQ(c.corpus.chunking.size, 1200u);
  EXPECT_EQ(c.corpus.chunking.overlap, 100u);
  EXPECT_EQ(c.graph.extraction.max_gleanings, 2);
  EXPECT_EQ(c.graph.leiden.seed, 42u);
  EXPECT_DOUBLE_EQ(c.graph.leiden.resolution, 1.0);
  EXPECT_EQ(c.query.local.top_k_entities, 5u);
  EXPECT_DOUBLE_EQ(c.query.local.entity_threshold, 0.75);
  EXPECT_DOUBLE_EQ(c.query.faq_threshold, 0.75);
  EXPECT_EQ(c.query.history_window, 5u);
  EXPECT_EQ(c.bench.repetitions, 3);
  EXPECT_DOUBLE_EQ(c.bench.temperature, 0.1);
  EXPECT_FALSE(c.provider.http.api_key.has_value());
}

TEST(Config, FileValues) {
  const auto c = parse_config(R"(
out = "elsewhere"
[corpus]
chunk_size = 500
chunk_overlap = 50
code_patterns = ["*.py"]
[graph]
report_levels = [0]
entity_types = ["A", "B"]
[query]
code_keywords = ["fit"]
)",
                              kNoEnv);
  EXPECT_EQ(c.out, "elsewhere");
  EXPECT_EQ(c.corpus.chunking.size, 500u);
  EXPECT_EQ(c.corpus.code_patterns, std::vector<std::string>{"*.py"});
  EXPECT_EQ(c.graph.summarize.levels, std::set<int>{0});
  EXPECT_EQ(c.graph.extraction.entity_types, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(c.query.code_keywords, std::vector<std::string>{"fit"});
}

TEST(Config, EnvironmentOverridesFile) {
  const auto c = parse_config("[graph]\nseed = 1\n", env_of({{"RCHAT_GRAPH_SEED", "99"},
                                                             {"RCHAT_OUT", "/tmp/x"},
                                                             {"RCHAT_API_KEY", "secret"},
                                                             {"RCHAT_QUERY_CODE_KEYWORDS", "fit,ridge"}}));
  EXPECT_EQ(c.graph.leiden.seed, 99u);
  EXPECT_EQ(c.out, "/tmp/x");
  EXPECT_EQ(c.provider.http.api_key, "secret");
  EXPECT_EQ(c.query.code_keywords, (std::vector<std::string>{"fit", "ridge"}));
}

TEST(Config, Errors) {
  EXPECT_EQ(code_of("[graph]\nsed = 1\n"), ErrorCode::config_error);
  EXPECT_EQ(code_of("bogus = 1\n"), ErrorCode::config_error);
  EXPECT_EQ(code_of("[graph]\nseed = \"x\"\n"), ErrorCode::config_error);
  EXPECT_EQ(code_of("[corpus]\nchunk_size = 100\nchunk_overlap = 100\n"), ErrorCode::config_error);
  EXPECT_EQ(code_of("[provider]\nkind = \"carrier pigeon\"\n"), ErrorCode::config_error);
  EXPECT_EQ(code_of("[graph\n"), ErrorCode::config_error);
  EXPECT_EQ(code_of("", env_of({{"RCHAT_GRAPH_SEED", "many"}})), ErrorCode::config_error);
  EXPECT_EQ(code_of("[service]\nport = 70000\n"), ErrorCode::config_error);
  EXPECT_THROW(load_config(std::filesystem::path("/nonexistent/rchat.toml"), kNoEnv), Error);
}

TEST(Config, KeysAreUniqueAndSectioned) {
  const auto keys = config_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), keys.size());
  EXPECT_NE(std::find(keys.begin(), keys.end(), "graph.seed"), keys.end());
  EXPECT_NE(std::find(keys.begin(), keys.end(), "out"), keys.end());
}

TEST(Config, FixtureLoadsAndMakesMock) {
  const auto cfg = rchat::testing::fixture_config();
  EXPECT_EQ(cfg.provider.kind, "mock");
  EXPECT_DOUBLE_EQ(cfg.query.local.entity_threshold, 0.2);
  const auto provider = make_provider(cfg.provider);
  EXPECT_EQ(provider->name(), "mock");
}

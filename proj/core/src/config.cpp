#include "rchat/config.hpp"

#include <charconv>
#include <cstdlib>
#include <set>
#include <type_traits>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "rchat/errors.hpp"
#include "rchat/text.hpp"

namespace rchat {

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

namespace {

[[noreturn]] void bad(const std::string& name, const std::string& what) {
  throw Error(ErrorCode::config_error, name + ": " + what);
}

template <typename T>
T number_from_text(std::string_view s, const std::string& name) {
  s = text::trim(s);
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad(name, "not a number: " + std::string(s));
  return v;
}

template <typename T>
T from_text(std::string_view s, const std::string& name) {
  if constexpr (std::is_same_v<T, std::string>) {
    return std::string(s);
  } else if constexpr (std::is_same_v<T, bool>) {
    const auto l = text::to_lower_ascii(text::trim(s));
    if (l == "1" || l == "true" || l == "yes" || l == "on") return true;
    if (l == "0" || l == "false" || l == "no" || l == "off") return false;
    bad(name, "not a boolean: " + std::string(s));
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    std::vector<std::string> out;
    for (const auto& part : text::split(s, ",")) {
      const auto t = text::trim(part);
      if (!t.empty()) out.emplace_back(t);
    }
    return out;
  } else if constexpr (std::is_same_v<T, std::set<int>>) {
    std::set<int> out;
    for (const auto& part : text::split(s, ",")) {
      if (!text::trim(part).empty()) out.insert(number_from_text<int>(part, name));
    }
    return out;
  } else {
    return number_from_text<T>(s, name);
  }
}

template <typename T>
T from_node(const toml::node& node, const std::string& name) {
  if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node.value_exact<std::string>()) return *v;
    bad(name, "expected a string");
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node.value_exact<bool>()) return *v;
    bad(name, "expected a boolean");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (node.is_number()) return static_cast<T>(*node.value<double>());
    bad(name, "expected a number");
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = node.value_exact<std::int64_t>()) {
      if (std::is_unsigned_v<T> && *v < 0) bad(name, "must not be negative");
      return static_cast<T>(*v);
    }
    bad(name, "expected an integer");
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    const auto* arr = node.as_array();
    if (arr == nullptr) bad(name, "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& item : *arr) {
      auto v = item.value_exact<std::string>();
      if (!v) bad(name, "expected an array of strings");
      out.push_back(*v);
    }
    return out;
  } else if constexpr (std::is_same_v<T, std::set<int>>) {
    const auto* arr = node.as_array();
    if (arr == nullptr) bad(name, "expected an array of integers");
    std::set<int> out;
    for (const auto& item : *arr) {
      auto v = item.value_exact<std::int64_t>();
      if (!v) bad(name, "expected an array of integers");
      out.insert(static_cast<int>(*v));
    }
    return out;
  }
}

struct Binding {
  std::string section;  // empty for top-level keys
  std::string key;
  std::function<void(AppConfig&, const toml::node&)> from_toml;
  std::function<void(AppConfig&, std::string_view)> from_env;

  std::string name() const { return section.empty() ? key : section + "." + key; }
  std::string env_name() const {
    return "RCHAT_" + text::to_upper_ascii(section.empty() ? key : section + "_" + key);
  }
};

template <typename Get>
Binding bind(std::string section, std::string key, Get get) {
  using T = std::remove_reference_t<decltype(get(std::declval<AppConfig&>()))>;
  const std::string name = section.empty() ? key : section + "." + key;
  return {std::move(section), std::move(key),
          [get, name](AppConfig& c, const toml::node& n) { get(c) = from_node<T>(n, name); },
          [get, name](AppConfig& c, std::string_view s) { get(c) = from_text<T>(s, name); }};
}

#define RCHAT_BIND(section, key, expr) bind(section, key, [](AppConfig& c) -> auto& { return expr; })

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> kBindings = {
      RCHAT_BIND("", "out", c.out),
      RCHAT_BIND("", "prompts_dir", c.prompts_dir),

      RCHAT_BIND("provider", "kind", c.provider.kind),
      RCHAT_BIND("provider", "mock_script", c.provider.mock_script),
      RCHAT_BIND("provider", "base_url", c.provider.http.base_url),
      RCHAT_BIND("provider", "chat_model", c.provider.http.chat_model_id),
      RCHAT_BIND("provider", "embed_model", c.provider.http.embed_model_id),
      RCHAT_BIND("provider", "timeout_seconds", c.provider.http.timeout_seconds),
      RCHAT_BIND("provider", "max_retries", c.provider.http.max_retries),
      RCHAT_BIND("provider", "max_in_flight", c.provider.http.max_in_flight),
      RCHAT_BIND("provider", "chat_path", c.provider.http.chat_path),
      RCHAT_BIND("provider", "embed_path", c.provider.http.embed_path),
      RCHAT_BIND("provider", "trace_log", c.provider.http.trace_log),

      RCHAT_BIND("corpus", "root", c.corpus.root),
      RCHAT_BIND("corpus", "manifest", c.corpus.manifest),
      RCHAT_BIND("corpus", "chunk_size", c.corpus.chunking.size),
      RCHAT_BIND("corpus", "chunk_overlap", c.corpus.chunking.overlap),
      RCHAT_BIND("corpus", "code_patterns", c.corpus.code_patterns),

      RCHAT_BIND("graph", "max_gleanings", c.graph.extraction.max_gleanings),
      RCHAT_BIND("graph", "entity_types", c.graph.extraction.entity_types),
      RCHAT_BIND("graph", "extraction_max_tokens", c.graph.extraction.max_tokens),
      RCHAT_BIND("graph", "summary_char_budget", c.graph.merge.summary_char_budget),
      RCHAT_BIND("graph", "resolution", c.graph.leiden.resolution),
      RCHAT_BIND("graph", "seed", c.graph.leiden.seed),
      RCHAT_BIND("graph", "max_levels", c.graph.leiden.max_levels),
      RCHAT_BIND("graph", "report_levels", c.graph.summarize.levels),
      RCHAT_BIND("graph", "report_context_budget", c.graph.summarize.context_char_budget),
      RCHAT_BIND("graph", "temperature", c.graph.extraction.temperature),

      RCHAT_BIND("query", "history_window", c.query.history_window),
      RCHAT_BIND("query", "context_budget", c.query.local.budget_chars),
      RCHAT_BIND("query", "top_k_entities", c.query.local.top_k_entities),
      RCHAT_BIND("query", "entity_threshold", c.query.local.entity_threshold),
      RCHAT_BIND("query", "top_k_chunks", c.query.local.top_k_chunks),
      RCHAT_BIND("query", "chunk_threshold", c.query.local.chunk_threshold),
      RCHAT_BIND("query", "max_relationships", c.query.local.max_relationships),
      RCHAT_BIND("query", "max_reports", c.query.local.max_reports),
      RCHAT_BIND("query", "global_batch_size", c.query.global.batch_size),
      RCHAT_BIND("query", "global_level", c.query.global.level),
      RCHAT_BIND("query", "code_keywords", c.query.code_keywords),
      RCHAT_BIND("query", "code_chunks", c.query.code_chunks),
      RCHAT_BIND("query", "code_budget", c.query.code_budget_chars),
      RCHAT_BIND("query", "faq_top_k", c.query.faq_top_k),
      RCHAT_BIND("query", "faq_threshold", c.query.faq_threshold),
      RCHAT_BIND("query", "temperature", c.query.temperature),
      RCHAT_BIND("query", "max_tokens", c.query.max_tokens),

      RCHAT_BIND("service", "host", c.service.host),
      RCHAT_BIND("service", "port", c.service.port),
      RCHAT_BIND("service", "sessions_db", c.service.sessions_db),
      RCHAT_BIND("service", "session_ttl_hours", c.service.session_ttl_hours),
      RCHAT_BIND("service", "usage_log", c.service.usage_log),
      RCHAT_BIND("service", "static_dir", c.service.static_dir),
      RCHAT_BIND("service", "rate_per_second", c.service.rate_per_second),
      RCHAT_BIND("service", "rate_burst", c.service.rate_burst),

      RCHAT_BIND("bench", "repetitions", c.bench.repetitions),
      RCHAT_BIND("bench", "temperature", c.bench.temperature),
      RCHAT_BIND("bench", "dataset", c.bench.dataset),
  };
  return kBindings;
}

#undef RCHAT_BIND

void check(const AppConfig& c) {
  validate(c.provider.http);
  if (c.provider.kind != "http" && c.provider.kind != "mock") bad("provider.kind", "must be http or mock");
  if (c.corpus.chunking.size < 1 || c.corpus.chunking.size <= c.corpus.chunking.overlap) {
    bad("corpus.chunk_size", "must be >= 1 and greater than corpus.chunk_overlap");
  }
  if (c.graph.extraction.max_gleanings < 0) bad("graph.max_gleanings", "must be >= 0");
  if (!(c.graph.leiden.resolution > 0)) bad("graph.resolution", "must be > 0");
  if (c.graph.leiden.max_levels < 1) bad("graph.max_levels", "must be >= 1");
  if (c.query.global.batch_size < 1) bad("query.global_batch_size", "must be >= 1");
  if (c.service.port < 0 || c.service.port > 65535) bad("service.port", "out of range");
  if (!(c.service.session_ttl_hours > 0)) bad("service.session_ttl_hours", "must be > 0");
  if (c.bench.repetitions < 1) bad("bench.repetitions", "must be >= 1");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& b : bindings()) out.push_back(b.name());
  return out;
}

AppConfig parse_config(std::string_view toml_text, const EnvLookup& env) {
  AppConfig cfg;
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::string where;
    if (e.source().begin) where = " (line " + std::to_string(e.source().begin.line) + ")";
    throw Error(ErrorCode::config_error, std::string(e.description()) + where);
  }

  std::set<std::string> known;
  for (const auto& b : bindings()) known.insert(b.name());
  for (auto&& [k, v] : root) {
    const std::string key(k.str());
    if (const auto* section = v.as_table()) {
      for (auto&& [sk, sv] : *section) {
        const auto name = key + "." + std::string(sk.str());
        if (!known.contains(name)) bad(name, "unknown setting");
      }
    } else if (!known.contains(key)) {
      bad(key, "unknown setting");
    }
  }

  for (const auto& b : bindings()) {
    const toml::node* node = nullptr;
    if (b.section.empty()) {
      node = root.get(b.key);
    } else if (const auto* section = root[b.section].as_table()) {
      node = section->get(b.key);
    }
    if (node != nullptr) b.from_toml(cfg, *node);
  }
  if (env) {
    for (const auto& b : bindings()) {
      if (auto v = env(b.env_name())) b.from_env(cfg, *v);
    }
    if (auto key = env("RCHAT_API_KEY")) cfg.provider.http.api_key = *key;
  }
  cfg.graph.merge.temperature = cfg.graph.extraction.temperature;
  cfg.graph.summarize.temperature = cfg.graph.extraction.temperature;
  check(cfg);
  return cfg;
}

AppConfig load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
  if (!path) return parse_config("", env);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(*path, ec)) {
    throw Error(ErrorCode::config_error, "config file not found: " + path->string());
  }
  return parse_config(text::read_file(path->string()), env);
}

std::unique_ptr<Provider> make_provider(const ProviderSettings& settings) {
  if (settings.kind == "mock") {
    return std::make_unique<ScriptedMock>(settings.mock_script.empty() ? MockScript{}
                                                                       : load_mock_script(settings.mock_script));
  }
  return make_provider(settings.http);
}

}  // namespace rchat

#include "rchat/model_client.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "rchat/errors.hpp"
#include "rchat/text.hpp"

using json = nlohmann::json;

namespace rchat {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  return std::nullopt;
}

void validate(const CompletionRequest& req) {
  if (req.messages.empty()) throw Error(ErrorCode::invalid_argument, "request has no messages");
  if (!(req.temperature >= 0.0 && req.temperature <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "temperature outside [0,1]");
  }
  if (req.max_tokens <= 0) throw Error(ErrorCode::invalid_argument, "max_tokens must be positive");
  for (const auto& m : req.messages) {
    if (m.role != Role::system && m.content.empty()) {
      throw Error(ErrorCode::invalid_argument, "empty user/assistant message");
    }
  }
}

std::string fingerprint(const CompletionRequest& req) {
  std::string canon;
  for (const auto& m : req.messages) {
    canon += to_string(m.role);
    canon += '\x1f';
    canon += m.content;
    canon += '\x1e';
  }
  char temp[32];
  std::snprintf(temp, sizeof(temp), "%.6g", req.temperature);
  canon += temp;
  canon += '\x1e';
  canon += req.model_id;
  return text::hex64(text::fnv1a64(canon));
}

void validate(const ProviderConfig& cfg) {
  if (cfg.max_retries < 0) throw Error(ErrorCode::config_error, "max_retries must be >= 0");
  if (!(cfg.timeout_seconds > 0)) throw Error(ErrorCode::config_error, "timeout must be > 0");
  if (cfg.max_in_flight < 1) throw Error(ErrorCode::config_error, "max_in_flight must be >= 1");
}

std::string complete_chat(Provider& provider, const CompletionRequest& req) {
  validate(req);
  return provider.complete_chat(req);
}

std::vector<Vector> embed_texts(Provider& provider, std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorCode::invalid_argument, "embed_texts: no texts");
  for (const auto& t : texts) {
    if (t.empty()) throw Error(ErrorCode::invalid_argument, "embed_texts: empty text");
  }
  auto vectors = provider.embed_texts(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::dimension_mismatch, "provider returned " + std::to_string(vectors.size()) +
                                                   " vectors for " + std::to_string(texts.size()) +
                                                   " texts");
  }
  const auto d = vectors.front().size();
  if (d == 0) throw Error(ErrorCode::dimension_mismatch, "provider returned empty vectors");
  for (const auto& v : vectors) {
    if (v.size() != d) throw Error(ErrorCode::dimension_mismatch, "provider returned ragged vectors");
  }
  return vectors;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

bool is_transient(const TransportResponse& r) {
  return r.status == 0 || r.timed_out || r.status == 408 || r.status == 429 || r.status >= 500;
}

}  // namespace

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt, std::uint64_t& rng_state) {
  const double base = policy.base_seconds * std::pow(2.0, attempt);
  const double factor = 1.0 + policy.jitter * (2.0 * unit_interval(splitmix64(rng_state)) - 1.0);
  return std::chrono::milliseconds(static_cast<long long>(std::llround(base * factor * 1000.0)));
}

std::string post_with_retry(const Transport& send, const std::string& path, const std::string& body,
                            const RetryPolicy& policy, const Sleeper& sleep) {
  std::uint64_t rng = text::fnv1a64(path);
  TransportResponse last;
  const int attempts_allowed = policy.max_retries + 1;
  for (int attempt = 0; attempt < attempts_allowed; ++attempt) {
    last = send(path, body);
    if (last.status >= 200 && last.status < 300 && !last.timed_out) return last.body;
    if (!is_transient(last)) {
      throw ProviderFailure(ErrorCode::provider_error, last.status, last.body, attempt + 1);
    }
    spdlog::warn("provider request to {} failed (status {}), attempt {}/{}", path, last.status,
                 attempt + 1, attempts_allowed);
    if (attempt + 1 < attempts_allowed && sleep) sleep(backoff_delay(policy, attempt, rng));
  }
  if (policy.max_retries == 0) {
    throw ProviderFailure(last.timed_out ? ErrorCode::timeout : ErrorCode::provider_error, last.status,
                          last.body, 1);
  }
  throw ProviderFailure(ErrorCode::exhausted_retries, last.status, last.body, attempts_allowed);
}

std::string chat_request_json(const CompletionRequest& req, const std::string& default_model) {
  json j;
  j["model"] = req.model_id.empty() ? default_model : req.model_id;
  j["temperature"] = req.temperature;
  j["max_tokens"] = req.max_tokens;
  j["stream"] = false;
  j["messages"] = json::array();
  for (const auto& m : req.messages) {
    j["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  return j.dump();
}

std::string parse_chat_reply(const std::string& body) {
  try {
    const auto j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderFailure(ErrorCode::provider_error, 200, "unparseable chat reply: " + std::string(e.what()), 1);
  }
}

std::string embed_request_json(std::span<const std::string> texts, const std::string& model) {
  json j;
  j["model"] = model;
  j["input"] = json::array();
  for (const auto& t : texts) j["input"].push_back(t);
  return j.dump();
}

std::vector<Vector> parse_embed_reply(const std::string& body, std::size_t expected) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProviderFailure(ErrorCode::provider_error, 200, "unparseable embedding reply", 1);
  }
  if (!j.contains("data") || !j["data"].is_array()) {
    throw ProviderFailure(ErrorCode::provider_error, 200, "embedding reply without data[]", 1);
  }
  std::vector<Vector> out(j["data"].size());
  std::size_t pos = 0;
  for (const auto& item : j["data"]) {
    const std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : pos;
    if (idx >= out.size()) throw Error(ErrorCode::dimension_mismatch, "embedding index out of range");
    out[idx] = item.at("embedding").get<Vector>();
    ++pos;
  }
  if (out.size() != expected) {
    throw Error(ErrorCode::dimension_mismatch, "expected " + std::to_string(expected) + " embeddings, got " +
                                                   std::to_string(out.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------

Transport make_http_transport(const ProviderConfig& cfg);  // http_transport.cpp

HttpProvider::HttpProvider(ProviderConfig cfg)
    : HttpProvider(cfg, make_http_transport(cfg),
                   [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

HttpProvider::HttpProvider(ProviderConfig cfg, Transport transport, Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  validate(cfg_);
  in_flight_ = std::make_unique<std::counting_semaphore<>>(cfg_.max_in_flight);
}

HttpProvider::~HttpProvider() = default;

std::string HttpProvider::post(const std::string& path, const std::string& body) {
  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{*in_flight_};
  RetryPolicy policy;
  policy.max_retries = cfg_.max_retries;
  return post_with_retry(transport_, path, body, policy, sleeper_);
}

void HttpProvider::trace(std::string_view kind, const std::string& request, const std::string& reply) {
  if (cfg_.trace_log.empty()) return;
  json line;
  line["ts"] = text::utc_now_rfc3339();
  line["kind"] = kind;
  line["request"] = json::parse(request, nullptr, false);
  line["reply"] = reply;
  std::lock_guard lock(trace_mu_);
  std::ofstream out(cfg_.trace_log, std::ios::app | std::ios::binary);
  out << line.dump() << '\n';
}

std::string HttpProvider::complete_chat(const CompletionRequest& req) {
  validate(req);
  const auto body = chat_request_json(req, cfg_.chat_model_id);
  const auto reply = parse_chat_reply(post(cfg_.chat_path, body));
  trace("chat", body, reply);
  return reply;
}

std::vector<Vector> HttpProvider::embed_texts(std::span<const std::string> texts) {
  const auto body = embed_request_json(texts, cfg_.embed_model_id);
  const auto raw = post(cfg_.embed_path, body);
  trace("embed", body, std::to_string(texts.size()) + " vectors");
  return parse_embed_reply(raw, texts.size());
}

bool HttpProvider::reachable() {
  try {
    const auto r = transport_("/v1/models", "");
    return r.status > 0;
  } catch (...) {
    return false;
  }
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string_view>& stopwords() {
  static const std::vector<std::string_view> words = {
      "a",    "an",   "and",  "are", "as",   "at",   "be",   "by",  "can",  "do",   "does", "for",
      "from", "how",  "i",    "in",  "is",   "it",   "its",  "me",  "my",   "of",   "on",   "or",
      "that", "the",  "this", "to",  "was",  "what", "when", "which", "who", "why", "with", "you",
      "your"};
  return words;
}

bool is_stopword(const std::string& w) {
  for (auto s : stopwords()) {
    if (s == w) return true;
  }
  return false;
}

}  // namespace

ScriptedMock::ScriptedMock(MockScript script) : script_(std::move(script)) {
  if (script_.embedding_dim == 0) throw Error(ErrorCode::invalid_argument, "mock embedding_dim must be > 0");
}

std::string ScriptedMock::complete_chat(const CompletionRequest& req) {
  validate(req);
  {
    std::lock_guard lock(mu_);
    chat_log_.push_back(req);
  }
  if (auto it = script_.by_fingerprint.find(fingerprint(req)); it != script_.by_fingerprint.end()) {
    return it->second;
  }
  const ChatMessage* last_user = nullptr;
  int assistant_turns = 0;
  for (const auto& m : req.messages) {
    if (m.role == Role::user) last_user = &m;
    if (m.role == Role::assistant) ++assistant_turns;
  }
  if (last_user != nullptr) {
    for (const auto& rule : script_.rules) {
      if (rule.assistant_turns && *rule.assistant_turns != assistant_turns) continue;
      bool all = true;
      for (const auto& needle : rule.contains) {
        if (!text::contains(last_user->content, needle)) {
          all = false;
          break;
        }
      }
      if (all) return rule.reply;
    }
  }
  return script_.default_reply;
}

Vector ScriptedMock::embed_one(std::string_view input) const {
  auto tokens = text::word_tokens(input);
  std::erase_if(tokens, [](const std::string& w) { return is_stopword(w); });
  if (tokens.empty()) tokens.push_back(text::to_lower_ascii(text::trim(input)));
  Vector v(script_.embedding_dim, 0.0);
  for (const auto& tok : tokens) {
    std::uint64_t state = text::fnv1a64(tok, 0xcbf29ce484222325ULL ^ script_.seed);
    for (auto& x : v) x += 2.0 * unit_interval(splitmix64(state)) - 1.0;
  }
  return v;
}

std::vector<Vector> ScriptedMock::embed_texts(std::span<const std::string> texts) {
  {
    std::lock_guard lock(mu_);
    ++embed_calls_;
  }
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::vector<CompletionRequest> ScriptedMock::chat_log() const {
  std::lock_guard lock(mu_);
  return chat_log_;
}

std::size_t ScriptedMock::chat_calls() const {
  std::lock_guard lock(mu_);
  return chat_log_.size();
}

std::size_t ScriptedMock::embed_calls() const {
  std::lock_guard lock(mu_);
  return embed_calls_;
}

void ScriptedMock::clear_log() {
  std::lock_guard lock(mu_);
  chat_log_.clear();
  embed_calls_ = 0;
}

MockScript load_mock_script(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config_error, "mock script " + path + ": " + e.what());
  }
  MockScript s;
  s.default_reply = j.value("default_reply", s.default_reply);
  s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
  s.seed = j.value("seed", s.seed);
  if (j.contains("fingerprints")) {
    for (const auto& [k, v] : j["fingerprints"].items()) s.by_fingerprint[k] = v.get<std::string>();
  }
  if (j.contains("rules")) {
    for (const auto& r : j["rules"]) {
      ScriptRule rule;
      if (r.contains("contains")) {
        if (r["contains"].is_string()) {
          rule.contains.push_back(r["contains"].get<std::string>());
        } else {
          rule.contains = r["contains"].get<std::vector<std::string>>();
        }
      }
      if (r.contains("assistant_turns")) rule.assistant_turns = r["assistant_turns"].get<int>();
      rule.reply = r.at("reply").get<std::string>();
      s.rules.push_back(std::move(rule));
    }
  }
  return s;
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
  auto resolved = cfg;
  if (!resolved.api_key) {
    if (const char* env = std::getenv("RCHAT_API_KEY"); env != nullptr && *env != '\0') {
      resolved.api_key = std::string(env);
    }
  }
  return std::make_unique<HttpProvider>(std::move(resolved));
}

}  // namespace rchat

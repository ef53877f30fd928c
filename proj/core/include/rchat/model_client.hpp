#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rchat {

using Vector = std::vector<double>;

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view s);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
};

inline constexpr double kDefaultTemperature = 0.1;
inline constexpr int kDefaultMaxTokens = 1024;

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = kDefaultTemperature;
  int max_tokens = kDefaultMaxTokens;
  std::string model_id;
};

// Throws InvalidArgument when a request breaks its invariants.
void validate(const CompletionRequest& req);

// Hex digest over roles, contents, temperature and model id; the key for
// scripted replies.
std::string fingerprint(const CompletionRequest& req);

struct ProviderConfig {
  std::string base_url = "http://127.0.0.1:1234";
  std::optional<std::string> api_key;
  std::string chat_model_id = "Codestral-22B";
  std::string embed_model_id = "nomic-embed-text-v1.5";
  double timeout_seconds = 120.0;
  int max_retries = 3;
  int max_in_flight = 4;
  std::string chat_path = "/v1/chat/completions";
  std::string embed_path = "/v1/embeddings";
  // JSON-lines trace of every prompt and reply; empty disables tracing.
  std::string trace_log;
};

void validate(const ProviderConfig& cfg);

// A chat + embedding backend. Implementations must be safe to call from
// several threads at once.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string complete_chat(const CompletionRequest& req) = 0;
  virtual std::vector<Vector> embed_texts(std::span<const std::string> texts) = 0;
  virtual std::string name() const = 0;
  // Best-effort liveness probe used by /health.
  virtual bool reachable() { return true; }
};

// Validated entry points; every caller in the engine goes through these.
std::string complete_chat(Provider& provider, const CompletionRequest& req);
std::vector<Vector> embed_texts(Provider& provider, std::span<const std::string> texts);

// ---------------------------------------------------------------------------
// HTTP provider speaking the chat-completions / embeddings JSON shape.

struct TransportResponse {
  int status = 0;  // 0 = no response (connection failure)
  std::string body;
  bool timed_out = false;
};

// One POST of a JSON body; swapped out in tests.
using Transport = std::function<TransportResponse(const std::string& path, const std::string& body)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct RetryPolicy {
  int max_retries = 3;
  double base_seconds = 0.5;
  double jitter = 0.2;
};

// 0.5s * 2^attempt scaled by a uniform factor in [1-jitter, 1+jitter].
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt, std::uint64_t& rng_state);

// Runs send() until success, a non-transient failure, or max_retries+1
// attempts. Transient = no response, timeout, 408, 429 or 5xx.
std::string post_with_retry(const Transport& send, const std::string& path, const std::string& body,
                            const RetryPolicy& policy, const Sleeper& sleep);

class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(ProviderConfig cfg);
  // For tests: inject transport and sleeper.
  HttpProvider(ProviderConfig cfg, Transport transport, Sleeper sleeper);
  ~HttpProvider() override;

  std::string complete_chat(const CompletionRequest& req) override;
  std::vector<Vector> embed_texts(std::span<const std::string> texts) override;
  std::string name() const override { return "http:" + cfg_.base_url; }
  bool reachable() override;

  const ProviderConfig& config() const { return cfg_; }

 private:
  std::string post(const std::string& path, const std::string& body);
  void trace(std::string_view kind, const std::string& request, const std::string& reply);

  ProviderConfig cfg_;
  Transport transport_;
  Sleeper sleeper_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  std::mutex trace_mu_;
};

std::string chat_request_json(const CompletionRequest& req, const std::string& default_model);
std::string parse_chat_reply(const std::string& body);
std::string embed_request_json(std::span<const std::string> texts, const std::string& model);
std::vector<Vector> parse_embed_reply(const std::string& body, std::size_t expected);

// ---------------------------------------------------------------------------
// Scripted mock: replies are a pure function of the request.

struct ScriptRule {
  // All substrings must occur in the last user message.
  std::vector<std::string> contains;
  // When set, the rule only matches requests with exactly this many
  // assistant messages (lets multi-round protocols be scripted).
  std::optional<int> assistant_turns;
  std::string reply;
};

struct MockScript {
  std::map<std::string, std::string> by_fingerprint;
  std::vector<ScriptRule> rules;
  std::string default_reply = "OK";
  std::size_t embedding_dim = 64;
  std::uint64_t seed = 7;
};

MockScript load_mock_script(const std::string& path);

class ScriptedMock final : public Provider {
 public:
  explicit ScriptedMock(MockScript script);

  std::string complete_chat(const CompletionRequest& req) override;
  std::vector<Vector> embed_texts(std::span<const std::string> texts) override;
  std::string name() const override { return "mock"; }

  // Deterministic hash projection: each word contributes a seeded
  // pseudo-random direction. Identical strings map to identical vectors.
  Vector embed_one(std::string_view text) const;

  // Captured traffic, for assertions.
  std::vector<CompletionRequest> chat_log() const;
  std::size_t chat_calls() const;
  std::size_t embed_calls() const;
  void clear_log();

  const MockScript& script() const { return script_; }

 private:
  MockScript script_;
  mutable std::mutex mu_;
  std::vector<CompletionRequest> chat_log_;
  std::size_t embed_calls_ = 0;
};

std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg);

}  // namespace rchat

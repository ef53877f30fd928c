#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rchat/pipeline.hpp"
#include "rchat/query_engine.hpp"

struct sqlite3;

namespace rchat {

struct ChatSession {
  std::string session_id;
  std::vector<ChatTurn> turns;
  std::string created_at;
};

std::string new_session_id();

// Sessions persisted in an SQLite file (":memory:" for a private in-memory
// store). Sessions idle for longer than the TTL are treated as absent.
class SessionStore {
 public:
  SessionStore(const std::string& path, std::chrono::seconds ttl);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  std::optional<ChatSession> get(const std::string& session_id);
  void put(const ChatSession& session);
  // Deletes expired sessions; returns how many were removed.
  std::size_t purge_expired();
  std::size_t size();

  // Test hook: replaces the clock (seconds since epoch).
  void set_clock(std::function<std::int64_t()> now) { now_ = std::move(now); }

 private:
  std::mutex mu_;
  sqlite3* db_ = nullptr;
  std::chrono::seconds ttl_;
  std::function<std::int64_t()> now_;
};

std::string session_to_json(const ChatSession& s);
ChatSession session_from_json(const std::string& text);

struct UsageEvent {
  std::string timestamp;  // RFC-3339 UTC
  std::string session_id;
  std::string mode;
  std::string question;
  std::string answer;
  std::int64_t latency_ms = 0;
  std::vector<std::string> trace_ids;
};

std::string usage_event_json(const UsageEvent& e);

// Append-only JSON-lines log. Opening it moves a truncated final line (left
// by a crash mid-write) to <path>.quarantine.
class UsageLog {
 public:
  explicit UsageLog(std::filesystem::path path);
  void append(const UsageEvent& e);
  const std::filesystem::path& path() const { return path_; }
  // Bytes moved to quarantine when the log was opened.
  std::size_t recovered_bytes() const { return recovered_; }

 private:
  std::mutex mu_;
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t recovered_ = 0;
};

// Truncates a trailing partial line into <path>.quarantine. Returns the
// number of bytes moved.
std::size_t recover_usage_log(const std::filesystem::path& path);

// Per-client token bucket.
class RateLimiter {
 public:
  RateLimiter(double rate_per_second, double burst);
  bool allow(const std::string& client, std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now());

 private:
  struct Bucket {
    double tokens;
    std::chrono::steady_clock::time_point last;
  };
  std::mutex mu_;
  double rate_;
  double burst_;
  std::map<std::string, Bucket> buckets_;
};

struct ServiceOptions {
  std::string sessions_db = ":memory:";
  std::chrono::seconds session_ttl = std::chrono::hours(24);
  std::filesystem::path usage_log = "usage.jsonl";
  std::filesystem::path static_dir;
  double rate_per_second = 2.0;
  double rate_burst = 20.0;
  std::filesystem::path artifacts;  // reloaded by POST /admin/reload
};

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

class ChatService {
 public:
  // Builds the engine snapshot on reload from the artifacts directory.
  using StateLoader = std::function<std::shared_ptr<const EngineState>()>;

  ChatService(ServiceOptions opts, StateLoader loader, std::shared_ptr<Provider> provider);
  ~ChatService();

  // Atomically replaces the served snapshot (nullptr = unbuilt).
  void swap_state(std::shared_ptr<const EngineState> state);
  std::shared_ptr<const EngineState> state() const;
  // Calls the loader and swaps; returns false (keeping the old state) on failure.
  bool reload(std::string* error = nullptr);

  HttpReply chat(const std::string& body, const std::string& client);
  HttpReply health() const;
  HttpReply graph_summary() const;
  HttpReply communities(const std::optional<std::string>& level) const;
  HttpReply report(const std::string& community_id) const;
  HttpReply session(const std::string& session_id);

  // Starts serving on host:port in a background thread; port 0 picks a free
  // port. Returns the bound port.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  SessionStore& sessions() { return sessions_; }
  UsageLog& usage_log() { return usage_; }

 private:
  struct Server;
  std::shared_ptr<std::mutex> session_lock(const std::string& id);
  void install_routes();

  ServiceOptions opts_;
  StateLoader loader_;
  std::shared_ptr<Provider> provider_;
  mutable std::mutex state_mu_;
  std::shared_ptr<const EngineState> state_;
  SessionStore sessions_;
  UsageLog usage_;
  RateLimiter limiter_;
  std::mutex locks_mu_;
  std::map<std::string, std::weak_ptr<std::mutex>> session_locks_;
  std::unique_ptr<Server> server_;
  std::thread thread_;
};

}  // namespace rchat

#include <sqlite3.h>
#include <spdlog/spdlog.h>

#include <nlohmann/json.hpp>
#include <random>

#include "rchat/errors.hpp"
#include "rchat/service.hpp"
#include "rchat/text.hpp"

using json = nlohmann::json;

namespace rchat {

std::string new_session_id() {
  static std::mutex mu;
  static std::random_device rd;
  std::lock_guard lock(mu);
  const std::uint64_t hi = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  const std::uint64_t lo = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  return text::hex64(hi) + text::hex64(lo);
}

std::string session_to_json(const ChatSession& s) {
  json turns = json::array();
  for (const auto& t : s.turns) {
    json trace = json::array();
    for (const auto& e : t.trace) trace.push_back({{"kind", to_string(e.kind)}, {"id", e.id}, {"score", e.score}});
    turns.push_back({{"role", to_string(t.role)}, {"content", t.content}, {"trace", trace}});
  }
  return json{{"session_id", s.session_id}, {"created_at", s.created_at}, {"turns", turns}}.dump();
}

ChatSession session_from_json(const std::string& text_in) {
  try {
    const auto j = json::parse(text_in);
    ChatSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.created_at = j.at("created_at").get<std::string>();
    for (const auto& t : j.at("turns")) {
      ChatTurn turn;
      const auto role = parse_role(t.at("role").get<std::string>());
      if (!role) throw Error(ErrorCode::io_error, "bad role in stored session");
      turn.role = *role;
      turn.content = t.at("content").get<std::string>();
      for (const auto& e : t.at("trace")) {
        const auto kind = parse_source_kind(e.at("kind").get<std::string>());
        if (!kind) throw Error(ErrorCode::io_error, "bad trace kind in stored session");
        turn.trace.push_back({*kind, e.at("id").get<std::string>(), e.at("score").get<double>()});
      }
      s.turns.push_back(std::move(turn));
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io_error, std::string("stored session: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// SessionStore

namespace {

struct Statement {
  sqlite3_stmt* stmt = nullptr;
  Statement(sqlite3* db, const char* sql) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt, nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::io_error, std::string("sqlite: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err != nullptr ? err : "unknown error";
    sqlite3_free(err);
    throw Error(ErrorCode::io_error, "sqlite: " + msg);
  }
}

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

SessionStore::SessionStore(const std::string& path, std::chrono::seconds ttl) : ttl_(ttl), now_(unix_now) {
  if (path != ":memory:") {
    const auto parent = std::filesystem::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  }
  if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    const std::string msg = db_ != nullptr ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error(ErrorCode::io_error, "cannot open session store " + path + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(db_,
       "CREATE TABLE IF NOT EXISTS sessions ("
       "id TEXT PRIMARY KEY, updated_at INTEGER NOT NULL, body TEXT NOT NULL)");
}

SessionStore::~SessionStore() { sqlite3_close(db_); }

std::optional<ChatSession> SessionStore::get(const std::string& session_id) {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT updated_at, body FROM sessions WHERE id = ?1");
  sqlite3_bind_text(st.stmt, 1, session_id.c_str(), -1, SQLITE_TRANSIENT);
  if (sqlite3_step(st.stmt) != SQLITE_ROW) return std::nullopt;
  const auto updated = sqlite3_column_int64(st.stmt, 0);
  if (now_() - updated > ttl_.count()) return std::nullopt;
  const auto* body = reinterpret_cast<const char*>(sqlite3_column_text(st.stmt, 1));
  return session_from_json(body != nullptr ? body : "");
}

void SessionStore::put(const ChatSession& session) {
  const auto body = session_to_json(session);
  std::lock_guard lock(mu_);
  Statement st(db_, "INSERT OR REPLACE INTO sessions (id, updated_at, body) VALUES (?1, ?2, ?3)");
  sqlite3_bind_text(st.stmt, 1, session.session_id.c_str(), -1, SQLITE_TRANSIENT);
  sqlite3_bind_int64(st.stmt, 2, now_());
  sqlite3_bind_text(st.stmt, 3, body.c_str(), -1, SQLITE_TRANSIENT);
  if (sqlite3_step(st.stmt) != SQLITE_DONE) {
    throw Error(ErrorCode::io_error, std::string("sqlite: ") + sqlite3_errmsg(db_));
  }
}

std::size_t SessionStore::purge_expired() {
  std::lock_guard lock(mu_);
  Statement st(db_, "DELETE FROM sessions WHERE updated_at < ?1");
  sqlite3_bind_int64(st.stmt, 1, now_() - ttl_.count());
  sqlite3_step(st.stmt);
  return static_cast<std::size_t>(sqlite3_changes(db_));
}

std::size_t SessionStore::size() {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT COUNT(*) FROM sessions");
  sqlite3_step(st.stmt);
  return static_cast<std::size_t>(sqlite3_column_int64(st.stmt, 0));
}

// ---------------------------------------------------------------------------
// Usage log

std::string usage_event_json(const UsageEvent& e) {
  return json{{"timestamp", e.timestamp},   {"session_id", e.session_id}, {"mode", e.mode},
              {"question", e.question},     {"answer", e.answer},         {"latency_ms", e.latency_ms},
              {"trace_ids", e.trace_ids}}
      .dump();
}

std::size_t recover_usage_log(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return 0;
  const auto content = text::read_file(path.string());
  if (content.empty() || content.back() == '\n') return 0;
  const auto last_newline = content.rfind('\n');
  const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
  const auto tail = content.substr(keep);
  {
    std::ofstream q(path.string() + ".quarantine", std::ios::binary | std::ios::app);
    q << tail << '\n';
    if (!q) throw Error(ErrorCode::io_error, "cannot write quarantine file for " + path.string());
  }
  std::filesystem::resize_file(path, keep, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot truncate " + path.string() + ": " + ec.message());
  spdlog::warn("usage log {}: moved {} bytes of a truncated final line to quarantine", path.string(), tail.size());
  return tail.size();
}

UsageLog::UsageLog(std::filesystem::path path) : path_(std::move(path)) {
  if (!path_.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  recovered_ = recover_usage_log(path_);
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorCode::io_error, "cannot open usage log " + path_.string());
}

void UsageLog::append(const UsageEvent& e) {
  const auto line = usage_event_json(e) + "\n";
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error(ErrorCode::io_error, "cannot append to usage log " + path_.string());
}

// ---------------------------------------------------------------------------
// Rate limiter

RateLimiter::RateLimiter(double rate_per_second, double burst) : rate_(rate_per_second), burst_(burst) {}

bool RateLimiter::allow(const std::string& client, std::chrono::steady_clock::time_point now) {
  if (rate_ <= 0) return true;
  std::lock_guard lock(mu_);
  auto [it, inserted] = buckets_.try_emplace(client, Bucket{burst_, now});
  auto& b = it->second;
  if (!inserted) {
    const double elapsed = std::chrono::duration<double>(now - b.last).count();
    b.tokens = std::min(burst_, b.tokens + elapsed * rate_);
    b.last = now;
  }
  if (b.tokens < 1.0) return false;
  b.tokens -= 1.0;
  return true;
}

}  // namespace rchat

#include "rchat/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <nlohmann/json.hpp>

#include "rchat/errors.hpp"
#include "rchat/text.hpp"

using json = nlohmann::json;

namespace rchat {

struct ChatService::Server {
  httplib::Server http;
};

namespace {

HttpReply reply(int status, const json& body) { return {status, body.dump()}; }

HttpReply error_reply(int status, std::string_view code, const std::string& message) {
  return reply(status, json{{"error", code}, {"message", message}});
}

json trace_json(const std::vector<TraceEntry>& trace) {
  json out = json::array();
  for (const auto& e : trace) out.push_back({{"kind", to_string(e.kind)}, {"id", e.id}, {"score", e.score}});
  return out;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

bool is_loopback(const std::string& addr) {
  return addr == "127.0.0.1" || addr == "::1" || addr == "::ffff:127.0.0.1" || addr.empty();
}

}  // namespace

ChatService::ChatService(ServiceOptions opts, StateLoader loader, std::shared_ptr<Provider> provider)
    : opts_(std::move(opts)),
      loader_(std::move(loader)),
      provider_(std::move(provider)),
      sessions_(opts_.sessions_db, opts_.session_ttl),
      usage_(opts_.usage_log),
      limiter_(opts_.rate_per_second, opts_.rate_burst) {}

ChatService::~ChatService() { stop(); }

void ChatService::swap_state(std::shared_ptr<const EngineState> state) {
  std::lock_guard lock(state_mu_);
  state_ = std::move(state);
}

std::shared_ptr<const EngineState> ChatService::state() const {
  std::lock_guard lock(state_mu_);
  return state_;
}

bool ChatService::reload(std::string* error) {
  if (!loader_) {
    if (error != nullptr) *error = "no loader configured";
    return false;
  }
  try {
    auto next = loader_();
    swap_state(std::move(next));
    return true;
  } catch (const std::exception& e) {
    spdlog::warn("reload failed, keeping the current snapshot: {}", e.what());
    if (error != nullptr) *error = e.what();
    return false;
  }
}

std::shared_ptr<std::mutex> ChatService::session_lock(const std::string& id) {
  std::lock_guard lock(locks_mu_);
  for (auto it = session_locks_.begin(); it != session_locks_.end();) {
    it = it->second.expired() ? session_locks_.erase(it) : std::next(it);
  }
  auto& slot = session_locks_[id];
  auto m = slot.lock();
  if (!m) {
    m = std::make_shared<std::mutex>();
    slot = m;
  }
  return m;
}

HttpReply ChatService::chat(const std::string& body, const std::string& client) {
  if (!limiter_.allow(client)) return error_reply(429, "RateLimited", "too many requests");

  const auto req = json::parse(body, nullptr, false);
  if (!req.is_object()) return error_reply(400, "InvalidArgument", "body must be a JSON object");
  if (!req.contains("question") || !req["question"].is_string()) {
    return error_reply(400, "InvalidArgument", "question is required");
  }
  const auto question = req["question"].get<std::string>();
  if (text::trim(question).empty()) return error_reply(400, "InvalidArgument", "question is empty");

  ChatMode mode = ChatMode::local;
  if (req.contains("mode")) {
    const auto parsed = req["mode"].is_string() ? parse_chat_mode(req["mode"].get<std::string>()) : std::nullopt;
    if (!parsed) return error_reply(400, "InvalidArgument", "mode must be one of faq, rag, local, global");
    mode = *parsed;
  }
  std::optional<std::string> requested_id;
  if (req.contains("session_id") && !req["session_id"].is_null()) {
    if (!req["session_id"].is_string()) return error_reply(400, "InvalidArgument", "session_id must be a string");
    requested_id = req["session_id"].get<std::string>();
  }

  const auto snapshot = state();
  if (!snapshot || !snapshot->engine) return error_reply(503, "NotBuilt", "no knowledge base is loaded");

  std::vector<std::string> warnings;
  ChatSession session;
  auto lock_owner = session_lock(requested_id.value_or(""));
  std::unique_lock<std::mutex> guard;
  if (requested_id) {
    guard = std::unique_lock(*lock_owner);
    if (auto existing = sessions_.get(*requested_id)) {
      session = std::move(*existing);
    } else {
      warnings.emplace_back("SessionNotFound");
    }
  }
  if (session.session_id.empty()) {
    session.session_id = new_session_id();
    session.created_at = text::utc_now_rfc3339();
  }

  const auto started = std::chrono::steady_clock::now();
  QueryOutcome outcome;
  try {
    outcome = snapshot->engine->ask(question, session.turns, mode);
  } catch (const Error& e) {
    return error_reply(e.code() == ErrorCode::invalid_argument ? 400 : 500, std::string(to_string(e.code())),
                       e.what());
  }
  const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  warnings.insert(warnings.end(), outcome.warnings.begin(), outcome.warnings.end());

  if (outcome.kind == OutcomeKind::answer) {
    session.turns.push_back({Role::user, question, {}});
    session.turns.push_back(outcome.turn);
    sessions_.put(session);
    UsageEvent ev;
    ev.timestamp = text::utc_now_rfc3339();
    ev.session_id = session.session_id;
    ev.mode = std::string(to_string(outcome.mode));
    ev.question = question;
    ev.answer = outcome.turn.content;
    ev.latency_ms = latency;
    for (const auto& t : outcome.turn.trace) ev.trace_ids.push_back(t.id);
    usage_.append(ev);
  }

  json out = {{"session_id", session.session_id},
              {"answer", outcome.turn.content},
              {"outcome", to_string(outcome.kind)},
              {"mode", to_string(outcome.mode)},
              {"trace", trace_json(outcome.turn.trace)},
              {"latency_ms", latency},
              {"warnings", warnings}};
  if (!outcome.detail.empty()) out["detail"] = outcome.detail;
  return reply(outcome.kind == OutcomeKind::provider_failure ? 502 : 200, out);
}

HttpReply ChatService::health() const {
  const auto snapshot = state();
  json out = {{"built", snapshot != nullptr && snapshot->kb != nullptr && !snapshot->kb->graph.empty()},
              {"loaded", snapshot != nullptr}};
  bool reachable = false;
  try {
    if (provider_) {
      reachable = provider_->reachable();
    } else if (snapshot && snapshot->engine) {
      reachable = snapshot->engine->provider().reachable();
    }
  } catch (const std::exception&) {
    reachable = false;
  }
  out["provider_reachable"] = reachable;
  out["prompt_version"] = snapshot ? json(snapshot->prompt_version) : json(nullptr);
  out["seed"] = snapshot && snapshot->seed ? json(*snapshot->seed) : json(nullptr);
  return reply(200, out);
}

HttpReply ChatService::graph_summary() const {
  const auto snapshot = state();
  if (!snapshot || !snapshot->kb) return error_reply(503, "NotBuilt", "no knowledge base is loaded");
  const auto& kb = *snapshot->kb;
  json per_level = json::object();
  int levels = 0;
  for (const auto& c : kb.assignments) {
    auto& slot = per_level[std::to_string(c.level)];
    slot = slot.is_null() ? 1 : slot.get<int>() + 1;
    levels = std::max(levels, c.level + 1);
  }
  return reply(200, json{{"entities", kb.graph.entities.size()},
                         {"relationships", kb.graph.relationships.size()},
                         {"levels", levels},
                         {"communities_per_level", per_level},
                         {"reports", kb.reports.size()},
                         {"chunks", kb.chunk_index.size()}});
}

HttpReply ChatService::communities(const std::optional<std::string>& level) const {
  std::optional<int> wanted;
  if (level) {
    wanted = parse_int(*level);
    if (!wanted || *wanted < 0) return error_reply(400, "InvalidArgument", "level must be a non-negative integer");
  }
  const auto snapshot = state();
  if (!snapshot || !snapshot->kb) return error_reply(503, "NotBuilt", "no knowledge base is loaded");
  json out = json::array();
  for (const auto& c : snapshot->kb->assignments) {
    if (wanted && c.level != *wanted) continue;
    json item = {{"community_id", c.community_id},
                 {"level", c.level},
                 {"parent_id", c.parent_id ? json(*c.parent_id) : json(nullptr)},
                 {"members", c.members}};
    if (const auto* r = snapshot->kb->report(c.community_id)) {
      item["title"] = r->title;
      item["rank"] = r->rank;
    }
    out.push_back(std::move(item));
  }
  return reply(200, out);
}

HttpReply ChatService::report(const std::string& community_id) const {
  const auto id = parse_int(community_id);
  if (!id) return error_reply(400, "InvalidArgument", "community id must be an integer");
  const auto snapshot = state();
  if (!snapshot || !snapshot->kb) return error_reply(503, "NotBuilt", "no knowledge base is loaded");
  const auto* r = snapshot->kb->report(*id);
  if (r == nullptr) return error_reply(404, "NotFound", "no report for community " + community_id);
  return reply(200, json{{"community_id", r->community_id},
                         {"level", r->level},
                         {"title", r->title},
                         {"summary", r->summary},
                         {"member_entities", r->member_entities},
                         {"member_relationships", r->member_relationships},
                         {"rank", r->rank}});
}

HttpReply ChatService::session(const std::string& session_id) {
  auto s = sessions_.get(session_id);
  if (!s) return error_reply(404, "NotFound", "unknown or expired session");
  return {200, session_to_json(*s)};
}

void ChatService::install_routes() {
  auto& http = server_->http;
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  http.Post("/chat", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, chat(req.body, req.remote_addr));
  });
  http.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  http.Get("/graph/summary",
           [this, send](const httplib::Request&, httplib::Response& res) { send(res, graph_summary()); });
  http.Get("/graph/communities", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> level;
    if (req.has_param("level")) level = req.get_param_value("level");
    send(res, communities(level));
  });
  http.Get(R"(/reports/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, report(req.matches[1]));
  });
  http.Get(R"(/sessions/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, session(req.matches[1]));
  });
  http.Post("/admin/reload", [this, send](const httplib::Request& req, httplib::Response& res) {
    if (!is_loopback(req.remote_addr)) {
      send(res, error_reply(403, "Forbidden", "reload is only accepted from loopback"));
      return;
    }
    std::string err;
    if (reload(&err)) {
      send(res, reply(200, json{{"reloaded", true}}));
    } else {
      send(res, error_reply(500, "ReloadFailed", err));
    }
  });
  http.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", msg);
    send(res, error_reply(500, "InternalError", msg));
  });
  if (!opts_.static_dir.empty() && !http.set_mount_point("/", opts_.static_dir.string())) {
    spdlog::warn("static directory {} does not exist", opts_.static_dir.string());
  }
}

int ChatService::start(const std::string& host, int port) {
  stop();
  server_ = std::make_unique<Server>();
  install_routes();
  int bound = port;
  if (port == 0) {
    bound = server_->http.bind_to_any_port(host);
  } else if (!server_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(ErrorCode::io_error, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->http.listen_after_bind(); });
  server_->http.wait_until_ready();
  spdlog::info("serving on {}:{}", host, bound);
  return bound;
}

void ChatService::listen(const std::string& host, int port) {
  start(host, port);
  if (thread_.joinable()) thread_.join();
}

void ChatService::stop() {
  if (server_) server_->http.stop();
  if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
}

}  // namespace rchat

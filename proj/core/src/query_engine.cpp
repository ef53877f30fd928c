#include "rchat/query_engine.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <future>
#include <nlohmann/json.hpp>

#include "rchat/errors.hpp"
#include "rchat/text.hpp"

namespace rchat {

const std::vector<std::string>& default_code_keywords() {
  static const std::vector<std::string> kKeywords = {"code",   "python",   "import",   "error",    "traceback",
                                                     "debug",  "function", "script",   "implement"};
  return kKeywords;
}

namespace {

bool has_inline_code(std::string_view q) {
  const auto open = q.find('`');
  if (open == std::string_view::npos) return false;
  const auto close = q.find('`', open + 1);
  return close != std::string_view::npos && close > open + 1;
}

bool has_error_marker(std::string_view q) {
  if (q.find("Traceback (most recent call last)") != std::string_view::npos) return true;
  // Any word ending in Error or Exception, as in "ValueError:".
  std::size_t i = 0;
  while (i < q.size()) {
    while (i < q.size() && !(std::isalnum(static_cast<unsigned char>(q[i])) || q[i] == '_')) ++i;
    const auto start = i;
    while (i < q.size() && (std::isalnum(static_cast<unsigned char>(q[i])) || q[i] == '_')) ++i;
    const auto word = q.substr(start, i - start);
    if (word.ends_with("Error") || word.ends_with("Exception")) return true;
  }
  return false;
}

}  // namespace

QueryKind classify_query(std::string_view question, const std::vector<std::string>& keywords) {
  if (text::trim(question).empty()) throw Error(ErrorCode::invalid_argument, "question must not be empty");
  if (question.find("```") != std::string_view::npos || has_inline_code(question) || has_error_marker(question)) {
    return QueryKind::code;
  }
  std::set<std::string> wanted;
  for (const auto& k : keywords) wanted.insert(text::to_lower_ascii(text::trim(k)));
  for (const auto& token : text::word_tokens(question)) {
    if (wanted.contains(token)) return QueryKind::code;
  }
  return QueryKind::knowledge;
}

std::string_view to_string(ChatMode mode) {
  switch (mode) {
    case ChatMode::faq: return "faq";
    case ChatMode::rag: return "rag";
    case ChatMode::local: return "local";
    case ChatMode::global: return "global";
  }
  return "local";
}

std::optional<ChatMode> parse_chat_mode(std::string_view s) {
  const auto l = text::to_lower_ascii(text::trim(s));
  for (auto m : {ChatMode::faq, ChatMode::rag, ChatMode::local, ChatMode::global}) {
    if (l == to_string(m)) return m;
  }
  return std::nullopt;
}

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::chunk: return "chunk";
    case SourceKind::entity: return "entity";
    case SourceKind::relationship: return "relationship";
    case SourceKind::report: return "report";
    case SourceKind::qa: return "qa";
  }
  return "chunk";
}

std::optional<SourceKind> parse_source_kind(std::string_view s) {
  for (auto k : {SourceKind::chunk, SourceKind::entity, SourceKind::relationship, SourceKind::report,
                 SourceKind::qa}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::answer: return "answer";
    case OutcomeKind::no_match: return "NoMatch";
    case OutcomeKind::no_relevant_communities: return "NoRelevantCommunities";
    case OutcomeKind::provider_failure: return "ProviderFailure";
  }
  return "answer";
}

// ---------------------------------------------------------------------------
// Context

namespace {

std::string section_header(const std::string& label) { return "-----" + label + "-----\n"; }

}  // namespace

std::size_t rendered_size(const ContextSection& section) {
  return section_header(section.label).size() + section.text.size() + 1;
}

std::string QueryContext::render() const {
  std::string out;
  for (const auto& s : sections) {
    out += section_header(s.label);
    out += s.text;
    out += '\n';
  }
  return out;
}

std::size_t QueryContext::rendered_size() const {
  std::size_t n = 0;
  for (const auto& s : sections) n += rchat::rendered_size(s);
  return n;
}

std::vector<TraceEntry> QueryContext::trace() const {
  std::vector<TraceEntry> out;
  for (const auto& s : sections) out.insert(out.end(), s.provenance.begin(), s.provenance.end());
  return out;
}

bool pack_section(QueryContext& ctx, ContextSection section) {
  const auto used = ctx.rendered_size();
  const auto need = rendered_size(section);
  if (used + need <= ctx.budget_chars) {
    ctx.sections.push_back(std::move(section));
    return true;
  }
  if (!ctx.sections.empty()) return false;
  const auto overhead = section_header(section.label).size() + 1;
  if (overhead >= ctx.budget_chars) return false;
  section.text = std::string(text::utf8_prefix(section.text, ctx.budget_chars - overhead));
  if (section.text.empty()) return false;
  ctx.sections.push_back(std::move(section));
  return true;
}

// ---------------------------------------------------------------------------
// Knowledge base

std::vector<QaPair> parse_qa_pairs(const SourceDocument& doc) {
  std::vector<QaPair> out;
  enum class Field { none, question, answer } field = Field::none;
  auto flush = [&] {
    if (out.empty()) return;
    auto& last = out.back();
    last.question = std::string(text::trim(last.question));
    last.answer = std::string(text::trim(last.answer));
  };
  for (const auto& raw : text::split(doc.text, "\n")) {
    const auto line = text::trim(raw);
    if (text::starts_with_ci(line, "Q:")) {
      flush();
      out.push_back({doc.doc_id + "#q" + std::to_string(out.size() + 1), std::string(line.substr(2)), ""});
      field = Field::question;
    } else if (text::starts_with_ci(line, "A:") && field != Field::none) {
      out.back().answer += std::string(line.substr(2));
      field = Field::answer;
    } else if (field == Field::question) {
      out.back().question += "\n" + std::string(raw);
    } else if (field == Field::answer) {
      out.back().answer += "\n" + std::string(raw);
    }
  }
  flush();
  std::erase_if(out, [](const QaPair& p) { return p.question.empty() || p.answer.empty(); });
  return out;
}

QaIndex build_qa_index(const std::vector<QaPair>& pairs, Provider& provider) {
  QaIndex qa;
  if (pairs.empty()) return qa;
  std::vector<TextItem> items;
  for (const auto& p : pairs) {
    items.push_back({p.id, p.question});
    qa.pairs.emplace(p.id, p);
  }
  qa.index = build_index(items, provider);
  return qa;
}

const CommunityReport* KnowledgeBase::report(int community_id) const {
  for (const auto& r : reports) {
    if (r.community_id == community_id) return &r;
  }
  return nullptr;
}

std::string entity_embedding_text(const Entity& e) { return e.name + ": " + e.description; }

// ---------------------------------------------------------------------------
// Answering helpers

std::vector<PartialAnswer> parse_partial_answers(const std::string& reply) {
  std::vector<PartialAnswer> out;
  const auto open = reply.find('[');
  const auto close = reply.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open) return out;
  const auto j = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (!j.is_array()) return out;
  for (const auto& item : j) {
    if (!item.is_object()) continue;
    PartialAnswer p;
    if (!item.contains("community") || !item["community"].is_number_integer()) continue;
    p.community_id = item["community"].get<int>();
    if (item.contains("answer") && item["answer"].is_string()) p.text = text::trim(item["answer"].get<std::string>());
    if (item.contains("helpfulness") && item["helpfulness"].is_number()) {
      p.helpfulness = std::clamp(item["helpfulness"].get<double>(), 0.0, 100.0);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string render_history(const std::vector<ChatTurn>& history, std::size_t window) {
  std::vector<const ChatTurn*> turns;
  for (const auto& t : history) {
    if (t.role != Role::system) turns.push_back(&t);
  }
  const auto from = turns.size() > window ? turns.size() - window : 0;
  std::string out;
  for (std::size_t i = from; i < turns.size(); ++i) {
    out += turns[i]->role == Role::user ? "User: " : "Assistant: ";
    out += turns[i]->content;
    out += '\n';
  }
  return out.empty() ? "(none)" : out;
}

namespace {

Vector embed_question(Provider& provider, const std::string& question) {
  const std::vector<std::string> one{question};
  return embed_texts(provider, one).front();
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void add_chunk_sections(QueryContext& ctx, const KnowledgeBase& kb, const std::vector<SimilarityHit>& hits) {
  for (const auto& h : hits) {
    const auto* item = kb.chunk_index.find(h.item_id);
    if (item == nullptr) continue;
    pack_section(ctx, {"Chunk " + h.item_id, item->text, {{SourceKind::chunk, h.item_id, h.score}}});
  }
}

}  // namespace

QueryOutcome faq_answer(const std::string& question, const QaIndex& qa, Provider& provider, std::size_t k,
                        double threshold) {
  if (qa.index.empty()) throw Error(ErrorCode::empty_index, "no prepared Q&A pairs");
  QueryOutcome out;
  out.mode = ChatMode::faq;
  out.turn.role = Role::assistant;
  const auto hits = qa.index.top_k(embed_question(provider, question), k, threshold);
  for (const auto& h : hits) out.turn.trace.push_back({SourceKind::qa, h.item_id, h.score});
  if (hits.empty()) {
    out.kind = OutcomeKind::no_match;
    out.detail = "no stored question reaches the similarity threshold";
    return out;
  }
  out.turn.content = qa.pairs.at(hits.front().item_id).answer;
  return out;
}

QueryContext build_rag_context(const std::string& question, const KnowledgeBase& kb, Provider& provider,
                               const LocalOptions& opts) {
  QueryContext ctx;
  ctx.budget_chars = opts.budget_chars;
  if (kb.chunk_index.empty()) return ctx;
  const auto q = embed_question(provider, question);
  add_chunk_sections(ctx, kb, kb.chunk_index.top_k(q, opts.top_k_chunks, opts.chunk_threshold));
  return ctx;
}

QueryContext build_code_context(const std::string& question, const KnowledgeBase& kb, Provider& provider,
                                std::size_t count, std::size_t budget) {
  QueryContext ctx;
  ctx.budget_chars = budget;
  if (kb.chunk_index.empty() || kb.code_chunk_ids.empty() || count == 0) return ctx;
  const auto q = embed_question(provider, question);
  const auto hits = kb.chunk_index.top_k_where(
      q, count, -1.0, [&](const IndexedItem& item) { return kb.code_chunk_ids.contains(item.item_id); });
  add_chunk_sections(ctx, kb, hits);
  return ctx;
}

QueryContext build_local_context(const std::string& question, const KnowledgeBase& kb, Provider& provider,
                                 const LocalOptions& opts) {
  if (kb.graph.empty() || kb.entity_index.empty()) {
    throw Error(ErrorCode::empty_graph, "knowledge graph has no entities");
  }
  QueryContext ctx;
  ctx.budget_chars = opts.budget_chars;
  const auto q = embed_question(provider, question);

  const auto entity_hits = kb.entity_index.top_k(q, opts.top_k_entities, opts.entity_threshold);
  std::set<std::string> matched;
  for (const auto& h : entity_hits) {
    const auto it = kb.graph.entities.find(h.item_id);
    if (it == kb.graph.entities.end()) continue;
    matched.insert(h.item_id);
    const auto& e = it->second;
    pack_section(ctx, {"Entity " + e.name, e.name + " (" + e.entity_type + "): " + e.description,
                       {{SourceKind::entity, e.name, h.score}}});
  }

  std::vector<const Relationship*> rels;
  for (const auto& [key, r] : kb.graph.relationships) {
    if (matched.contains(r.source) || matched.contains(r.target)) rels.push_back(&r);
  }
  std::stable_sort(rels.begin(), rels.end(), [](const Relationship* a, const Relationship* b) {
    if (a->weight != b->weight) return a->weight > b->weight;
    return a->id() < b->id();
  });
  if (rels.size() > opts.max_relationships) rels.resize(opts.max_relationships);
  for (const auto* r : rels) {
    pack_section(ctx, {"Relationship " + r->id(),
                       r->source + " -> " + r->target + " (weight " + format_number(r->weight) + "): " + r->description,
                       {{SourceKind::relationship, r->id(), r->weight}}});
  }

  std::set<int> community_ids;
  for (const auto& c : kb.assignments) {
    for (const auto& m : c.members) {
      if (matched.contains(m)) {
        community_ids.insert(c.community_id);
        break;
      }
    }
  }
  std::vector<const CommunityReport*> reports;
  for (const auto& r : kb.reports) {
    if (community_ids.contains(r.community_id)) reports.push_back(&r);
  }
  std::stable_sort(reports.begin(), reports.end(), [](const CommunityReport* a, const CommunityReport* b) {
    if (a->rank != b->rank) return a->rank > b->rank;
    return a->community_id < b->community_id;
  });
  if (reports.size() > opts.max_reports) reports.resize(opts.max_reports);
  for (const auto* r : reports) {
    pack_section(ctx, {"Report " + std::to_string(r->community_id), r->title + "\n" + r->summary,
                       {{SourceKind::report, std::to_string(r->community_id), r->rank}}});
  }

  if (!kb.chunk_index.empty()) {
    add_chunk_sections(ctx, kb, kb.chunk_index.top_k(q, opts.top_k_chunks, opts.chunk_threshold));
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Engine

QueryEngine::QueryEngine(std::shared_ptr<const KnowledgeBase> kb, std::shared_ptr<Provider> provider,
                         PromptSet prompts, EngineOptions opts)
    : kb_(std::move(kb)), provider_(std::move(provider)), prompts_(std::move(prompts)), opts_(std::move(opts)) {
  if (!kb_ || !provider_) throw Error(ErrorCode::invalid_argument, "query engine needs a knowledge base and provider");
}

CompletionRequest QueryEngine::request() const {
  CompletionRequest req;
  req.temperature = opts_.temperature;
  req.max_tokens = opts_.max_tokens;
  req.model_id = opts_.model_id;
  return req;
}

namespace {

QueryOutcome failure(ChatMode mode, const Error& e, std::vector<std::string> warnings) {
  QueryOutcome out;
  out.kind = OutcomeKind::provider_failure;
  out.mode = mode;
  out.turn.role = Role::assistant;
  out.detail = e.what();
  out.warnings = std::move(warnings);
  return out;
}

}  // namespace

QueryOutcome QueryEngine::generate(const std::string& question, const std::vector<ChatTurn>& history,
                                   ChatMode mode, QueryContext ctx, std::vector<std::string> warnings) const {
  QueryOutcome out;
  out.mode = mode;
  out.query_kind = classify_query(question, opts_.code_keywords);
  out.turn.role = Role::assistant;
  try {
    std::string context = ctx.render();
    auto trace = ctx.trace();
    if (out.query_kind == QueryKind::code) {
      const auto code = build_code_context(question, *kb_, *provider_, opts_.code_chunks, opts_.code_budget_chars);
      if (code.sections.empty()) warnings.push_back("code question but no code documents are indexed");
      context += code.render();
      for (auto& t : code.trace()) {
        if (std::find(trace.begin(), trace.end(), t) == trace.end()) trace.push_back(std::move(t));
      }
    }
    if (context.empty()) context = "(no relevant context found)";
    auto req = request();
    req.messages.push_back({Role::system, prompts_.render(prompt::kSystem, {})});
    const auto tmpl = mode == ChatMode::rag ? prompt::kRagSearch : prompt::kLocalSearch;
    req.messages.push_back(
        {Role::user, prompts_.render(tmpl, {{"history", render_history(history, opts_.history_window)},
                                            {"context", context},
                                            {"question", question}})});
    out.turn.content = complete_chat(*provider_, req);
    out.turn.trace = std::move(trace);
  } catch (const Error& e) {
    if (!is_provider_error(e.code())) throw;
    auto f = failure(mode, e, std::move(warnings));
    f.query_kind = out.query_kind;
    return f;
  }
  if (text::trim(out.turn.content).empty()) {
    Error e(ErrorCode::provider_error, "provider returned an empty answer");
    auto f = failure(mode, e, std::move(warnings));
    f.query_kind = out.query_kind;
    return f;
  }
  out.warnings = std::move(warnings);
  return out;
}

QueryOutcome QueryEngine::local_search(const std::string& question, const std::vector<ChatTurn>& history) const {
  classify_query(question, opts_.code_keywords);
  try {
    if (kb_->graph.empty() || kb_->entity_index.empty()) {
      spdlog::warn("EmptyGraph: local search degrades to rag");
      auto out = rag_search(question, history);
      out.warnings.insert(out.warnings.begin(), "EmptyGraph: answered in rag mode");
      return out;
    }
    return generate(question, history, ChatMode::local,
                    build_local_context(question, *kb_, *provider_, opts_.local), {});
  } catch (const Error& e) {
    if (!is_provider_error(e.code())) throw;
    return failure(ChatMode::local, e, {});
  }
}

QueryOutcome QueryEngine::rag_search(const std::string& question, const std::vector<ChatTurn>& history) const {
  classify_query(question, opts_.code_keywords);
  try {
    return generate(question, history, ChatMode::rag, build_rag_context(question, *kb_, *provider_, opts_.local),
                    {});
  } catch (const Error& e) {
    if (!is_provider_error(e.code())) throw;
    return failure(ChatMode::rag, e, {});
  }
}

QueryOutcome QueryEngine::faq(const std::string& question) const {
  classify_query(question, opts_.code_keywords);
  try {
    auto out = faq_answer(question, kb_->qa, *provider_, opts_.faq_top_k, opts_.faq_threshold);
    out.query_kind = classify_query(question, opts_.code_keywords);
    return out;
  } catch (const Error& e) {
    if (!is_provider_error(e.code())) throw;
    return failure(ChatMode::faq, e, {});
  }
}

QueryOutcome QueryEngine::global_search(const std::string& question) const {
  QueryOutcome out;
  out.mode = ChatMode::global;
  out.query_kind = classify_query(question, opts_.code_keywords);
  out.turn.role = Role::assistant;

  std::vector<const CommunityReport*> reports;
  for (const auto& r : kb_->reports) {
    if (r.level == opts_.global.level) reports.push_back(&r);
  }
  std::sort(reports.begin(), reports.end(),
            [](const CommunityReport* a, const CommunityReport* b) { return a->community_id < b->community_id; });
  if (reports.empty()) {
    out.kind = OutcomeKind::no_relevant_communities;
    out.detail = "no community reports at level " + std::to_string(opts_.global.level);
    return out;
  }

  const auto batch = std::max<std::size_t>(1, opts_.global.batch_size);
  std::vector<std::future<std::vector<PartialAnswer>>> futures;
  for (std::size_t from = 0; from < reports.size(); from += batch) {
    const auto to = std::min(reports.size(), from + batch);
    std::string block;
    std::set<int> ids;
    for (std::size_t i = from; i < to; ++i) {
      const auto* r = reports[i];
      ids.insert(r->community_id);
      block += "[community " + std::to_string(r->community_id) + "] " + r->title + "\n" + r->summary + "\n\n";
    }
    auto req = request();
    req.messages.push_back(
        {Role::user, prompts_.render(prompt::kGlobalMap, {{"reports", block}, {"question", question}})});
    futures.push_back(std::async(std::launch::async, [this, req = std::move(req), ids = std::move(ids)] {
      auto partials = parse_partial_answers(complete_chat(*provider_, req));
      std::erase_if(partials, [&](const PartialAnswer& p) { return !ids.contains(p.community_id); });
      return partials;
    }));
  }

  std::vector<PartialAnswer> partials;
  std::size_t failed = 0;
  std::optional<Error> last_error;
  for (auto& f : futures) {
    try {
      auto batch_partials = f.get();
      partials.insert(partials.end(), batch_partials.begin(), batch_partials.end());
    } catch (const Error& e) {
      if (!is_provider_error(e.code())) throw;
      ++failed;
      last_error = e;
      out.warnings.push_back(std::string("map batch failed: ") + e.what());
    }
  }
  if (failed == futures.size()) return failure(ChatMode::global, *last_error, std::move(out.warnings));

  std::erase_if(partials, [](const PartialAnswer& p) { return !(p.helpfulness > 0) || p.text.empty(); });
  std::stable_sort(partials.begin(), partials.end(), [](const PartialAnswer& a, const PartialAnswer& b) {
    if (a.helpfulness != b.helpfulness) return a.helpfulness > b.helpfulness;
    return a.community_id < b.community_id;
  });
  if (partials.empty()) {
    out.kind = OutcomeKind::no_relevant_communities;
    out.detail = "every community was rated irrelevant to the question";
    return out;
  }

  std::string block;
  std::vector<TraceEntry> trace;
  for (const auto& p : partials) {
    const auto entry = "[community " + std::to_string(p.community_id) + "] (helpfulness " +
                       format_number(p.helpfulness) + ")\n" + p.text + "\n\n";
    if (!block.empty() && block.size() + entry.size() > opts_.global.budget_chars) break;
    block += entry;
    trace.push_back({SourceKind::report, std::to_string(p.community_id), p.helpfulness});
  }
  try {
    auto req = request();
    req.messages.push_back({Role::system, prompts_.render(prompt::kSystem, {})});
    req.messages.push_back(
        {Role::user, prompts_.render(prompt::kGlobalReduce, {{"partials", block}, {"question", question}})});
    out.turn.content = complete_chat(*provider_, req);
  } catch (const Error& e) {
    if (!is_provider_error(e.code())) throw;
    return failure(ChatMode::global, e, std::move(out.warnings));
  }
  out.turn.trace = std::move(trace);
  return out;
}

QueryOutcome QueryEngine::ask(const std::string& question, const std::vector<ChatTurn>& history,
                              ChatMode mode) const {
  switch (mode) {
    case ChatMode::faq: return faq(question);
    case ChatMode::rag: return rag_search(question, history);
    case ChatMode::global: return global_search(question);
    case ChatMode::local: break;
  }
  return local_search(question, history);
}

}  // namespace rchat

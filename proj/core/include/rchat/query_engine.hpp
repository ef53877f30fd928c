#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rchat/corpus.hpp"
#include "rchat/embedding_index.hpp"
#include "rchat/knowledge_graph.hpp"
#include "rchat/model_client.hpp"
#include "rchat/prompts.hpp"

namespace rchat {

enum class QueryKind { knowledge, code };

const std::vector<std::string>& default_code_keywords();

// code iff the question holds a backtick code fragment, a traceback/error
// marker, or one of `keywords` as a whole word. Throws InvalidArgument on an
// empty question.
QueryKind classify_query(std::string_view question,
                         const std::vector<std::string>& keywords = default_code_keywords());

enum class ChatMode { faq, rag, local, global };

std::string_view to_string(ChatMode mode);
std::optional<ChatMode> parse_chat_mode(std::string_view s);

enum class SourceKind { chunk, entity, relationship, report, qa };

std::string_view to_string(SourceKind kind);
std::optional<SourceKind> parse_source_kind(std::string_view s);

struct TraceEntry {
  SourceKind kind = SourceKind::chunk;
  std::string id;
  double score = 0.0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct ChatTurn {
  Role role = Role::user;
  std::string content;
  std::vector<TraceEntry> trace;
};

// ---------------------------------------------------------------------------
// Context assembly

inline constexpr std::size_t kDefaultContextBudget = 8000;

struct ContextSection {
  std::string label;
  std::string text;
  std::vector<TraceEntry> provenance;
};

struct QueryContext {
  std::size_t budget_chars = kDefaultContextBudget;
  std::vector<ContextSection> sections;

  // "-----label-----\ntext\n" per section. Sizes are in bytes.
  std::string render() const;
  std::size_t rendered_size() const;
  std::vector<TraceEntry> trace() const;
};

std::size_t rendered_size(const ContextSection& section);

// Appends the section when it fits the remaining budget. The first section is
// truncated (on a UTF-8 boundary) rather than dropped. Returns whether
// anything was added.
bool pack_section(QueryContext& ctx, ContextSection section);

// ---------------------------------------------------------------------------
// Knowledge base: the immutable snapshot every query runs against.

struct QaPair {
  std::string id;
  std::string question;
  std::string answer;
};

// "Q:" starts a question, "A:" its answer; following lines continue the
// current field. Ids are "<doc_id>#q<n>", 1-based.
std::vector<QaPair> parse_qa_pairs(const SourceDocument& doc);

struct QaIndex {
  EmbeddingIndex index;  // over the stored questions
  std::map<std::string, QaPair> pairs;
};

QaIndex build_qa_index(const std::vector<QaPair>& pairs, Provider& provider);

struct KnowledgeBase {
  EntityGraph graph;
  std::vector<CommunityAssignment> assignments;
  std::vector<CommunityReport> reports;
  EmbeddingIndex entity_index;  // ids are entity names
  EmbeddingIndex chunk_index;   // ids are chunk ids
  std::set<std::string> code_chunk_ids;
  QaIndex qa;

  const CommunityReport* report(int community_id) const;
};

// Text embedded for an entity: "NAME: description".
std::string entity_embedding_text(const Entity& e);

// ---------------------------------------------------------------------------
// Answering

struct LocalOptions {
  std::size_t top_k_entities = kDefaultTopK;
  double entity_threshold = kDefaultThreshold;
  std::size_t top_k_chunks = kDefaultTopK;
  double chunk_threshold = kDefaultThreshold;
  std::size_t max_relationships = 10;
  std::size_t max_reports = 3;
  std::size_t budget_chars = kDefaultContextBudget;
};

struct GlobalOptions {
  std::size_t batch_size = 10;
  int level = 0;
  std::size_t budget_chars = kDefaultContextBudget;
};

struct EngineOptions {
  LocalOptions local;
  GlobalOptions global;
  std::size_t history_window = 5;
  std::vector<std::string> code_keywords = default_code_keywords();
  std::size_t code_chunks = 3;
  std::size_t code_budget_chars = 4000;
  std::size_t faq_top_k = kDefaultTopK;
  double faq_threshold = kDefaultThreshold;
  double temperature = kDefaultTemperature;
  int max_tokens = kDefaultMaxTokens;
  std::string model_id;
};

enum class OutcomeKind { answer, no_match, no_relevant_communities, provider_failure };

std::string_view to_string(OutcomeKind kind);

struct QueryOutcome {
  OutcomeKind kind = OutcomeKind::answer;
  ChatMode mode = ChatMode::local;  // mode actually used
  QueryKind query_kind = QueryKind::knowledge;
  ChatTurn turn;                    // assistant turn; content empty unless kind == answer
  std::string detail;               // error text for typed outcomes
  std::vector<std::string> warnings;
};

struct PartialAnswer {
  int community_id = 0;
  std::string text;
  double helpfulness = 0.0;
};

// Parses a map reply: a JSON array of {community, helpfulness, answer}.
// Entries that do not parse are dropped; helpfulness is clamped to [0, 100].
std::vector<PartialAnswer> parse_partial_answers(const std::string& reply);

// Last `window` turns as "User: ..." / "Assistant: ..." lines, or "(none)".
std::string render_history(const std::vector<ChatTurn>& history, std::size_t window);

QueryOutcome faq_answer(const std::string& question, const QaIndex& qa, Provider& provider, std::size_t k,
                        double threshold);

// Throws EmptyGraph when the knowledge base has no entities.
QueryContext build_local_context(const std::string& question, const KnowledgeBase& kb, Provider& provider,
                                 const LocalOptions& opts);

QueryContext build_rag_context(const std::string& question, const KnowledgeBase& kb, Provider& provider,
                               const LocalOptions& opts);

// Top code chunks for the question, no threshold.
QueryContext build_code_context(const std::string& question, const KnowledgeBase& kb, Provider& provider,
                                std::size_t count, std::size_t budget);

class QueryEngine {
 public:
  QueryEngine(std::shared_ptr<const KnowledgeBase> kb, std::shared_ptr<Provider> provider, PromptSet prompts,
              EngineOptions opts);

  QueryOutcome ask(const std::string& question, const std::vector<ChatTurn>& history, ChatMode mode) const;

  QueryOutcome local_search(const std::string& question, const std::vector<ChatTurn>& history) const;
  QueryOutcome rag_search(const std::string& question, const std::vector<ChatTurn>& history) const;
  QueryOutcome global_search(const std::string& question) const;
  QueryOutcome faq(const std::string& question) const;

  const KnowledgeBase& knowledge() const { return *kb_; }
  const EngineOptions& options() const { return opts_; }
  const PromptSet& prompts() const { return prompts_; }
  Provider& provider() const { return *provider_; }

 private:
  QueryOutcome generate(const std::string& question, const std::vector<ChatTurn>& history, ChatMode mode,
                        QueryContext ctx, std::vector<std::string> warnings) const;
  CompletionRequest request() const;

  std::shared_ptr<const KnowledgeBase> kb_;
  std::shared_ptr<Provider> provider_;
  PromptSet prompts_;
  EngineOptions opts_;
};

}  // namespace rchat

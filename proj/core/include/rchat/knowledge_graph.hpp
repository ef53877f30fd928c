#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rchat/corpus.hpp"
#include "rchat/leiden.hpp"
#include "rchat/model_client.hpp"
#include "rchat/prompts.hpp"

namespace rchat {

struct Entity {
  std::string name;  // canonical, upper-cased
  std::string entity_type;
  std::string description;
  std::set<std::string> source_chunk_ids;
  std::size_t mention_count = 0;
};

// Undirected: source < target lexicographically.
struct Relationship {
  std::string source;
  std::string target;
  std::string description;
  double weight = 0.0;
  std::set<std::string> source_chunk_ids;
  std::size_t mention_count = 0;

  std::string id() const { return source + "|" + target; }
};

using EdgeKey = std::pair<std::string, std::string>;

EdgeKey edge_key(const std::string& a, const std::string& b);

struct EntityGraph {
  std::map<std::string, Entity> entities;
  std::map<EdgeKey, Relationship> relationships;

  bool empty() const { return entities.empty(); }
  // Throws InvalidArgument naming the first broken invariant.
  void check_invariants() const;
};

// ---------------------------------------------------------------------------
// Extraction

struct RawEntity {
  std::string name;
  std::string entity_type;
  std::string description;
  std::string chunk_id;
};

struct RawRelationship {
  std::string source;
  std::string target;
  std::string description;
  int strength = 1;
  std::string chunk_id;
};

struct ExtractionResult {
  std::vector<RawEntity> entities;
  std::vector<RawRelationship> relationships;
  std::vector<std::string> warnings;  // one per skipped record
  int rounds = 0;                     // extraction + gleaning calls made
};

inline constexpr int kDefaultMaxGleanings = 2;

struct ExtractionOptions {
  int max_gleanings = kDefaultMaxGleanings;
  std::vector<std::string> entity_types = {"CONCEPT", "LIBRARY", "FUNCTION", "PARAMETER",
                                           "PERSON",  "ORGANIZATION", "PAPER", "METHOD"};
  double temperature = kDefaultTemperature;
  int max_tokens = 2048;
  std::string model_id;
};

// Parses `("entity"|N|T|D)` and `("relationship"|S|T|D|k)` records separated
// by "##" or newlines, up to the completion marker. Bad records are skipped
// and reported in warnings.
void parse_extraction_records(std::string_view reply, const std::string& chunk_id, ExtractionResult& out);

ExtractionResult extract_elements(const Chunk& chunk, Provider& provider, const ExtractionOptions& opts,
                                  const PromptSet& prompts);

// ---------------------------------------------------------------------------
// Merge

struct MergeOptions {
  std::size_t summary_char_budget = 1000;
  double temperature = kDefaultTemperature;
  int max_tokens = 512;
  std::string model_id;
};

struct MergeReport {
  std::size_t summarize_calls = 0;
  std::vector<std::string> stub_entities;  // created for dangling endpoints
  std::vector<std::string> warnings;
};

EntityGraph merge_elements(const std::vector<ExtractionResult>& raws, Provider& provider,
                           const MergeOptions& opts, const PromptSet& prompts, MergeReport* report = nullptr);

// ---------------------------------------------------------------------------
// Communities

struct CommunityAssignment {
  int level = 0;  // 0 = coarsest
  int community_id = 0;
  std::optional<int> parent_id;
  std::vector<std::string> members;  // sorted entity names
};

struct CommunityReport {
  int community_id = 0;
  int level = 0;
  std::string title;
  std::string summary;
  std::vector<std::string> member_entities;
  std::vector<std::string> member_relationships;  // Relationship::id()
  double rank = 0.0;
};

struct CommunityDetection {
  std::vector<CommunityAssignment> assignments;
  std::vector<PhaseQuality> quality_log;
  std::size_t levels = 0;
};

struct LeidenOptions {
  double resolution = 1.0;
  std::uint64_t seed = 42;
  int max_levels = 4;
};

// Runs Leiden over the entity graph (nodes in name order) and names the
// communities: ids are dense, level 0 first, ordered by first member.
CommunityDetection detect_communities(const EntityGraph& graph, const LeidenOptions& opts);

std::vector<CommunityAssignment> leiden_partition(const EntityGraph& graph, double resolution, std::uint64_t seed,
                                                  int max_levels);

struct SummarizeOptions {
  std::set<int> levels = {0, 1};
  std::size_t context_char_budget = 6000;
  double temperature = kDefaultTemperature;
  int max_tokens = 1024;
  std::string model_id;
};

struct CommunityFailure {
  int community_id = 0;
  std::string error;
};

struct SummarizeResult {
  std::vector<CommunityReport> reports;
  std::vector<CommunityFailure> failures;
};

// The prompt context for one community; relationships are packed by
// descending weight until the budget is reached.
std::string community_context(const EntityGraph& graph, const CommunityAssignment& community,
                              std::size_t budget, std::vector<std::string>* packed_relationships = nullptr);

SummarizeResult summarize_communities(const EntityGraph& graph,
                                      const std::vector<CommunityAssignment>& assignments, Provider& provider,
                                      const SummarizeOptions& opts, const PromptSet& prompts);

// Fills title/summary/rank from a reply: JSON {"title","summary","rating"}
// when parseable, else the whole reply is the summary.
CommunityReport parse_report_reply(const std::string& reply, const CommunityAssignment& community);

// ---------------------------------------------------------------------------
// Persistence: entities.json, relationships.json, communities.json, reports.json

void export_graph(const EntityGraph& graph, const std::vector<CommunityAssignment>& assignments,
                  const std::vector<CommunityReport>& reports, const std::filesystem::path& dir);

struct GraphArtifacts {
  EntityGraph graph;
  std::vector<CommunityAssignment> assignments;
  std::vector<CommunityReport> reports;
};

GraphArtifacts load_graph(const std::filesystem::path& dir);

std::string entities_json(const EntityGraph& graph);
std::string relationships_json(const EntityGraph& graph);
std::string communities_json(const std::vector<CommunityAssignment>& assignments);
std::string reports_json(const std::vector<CommunityReport>& reports);

}  // namespace rchat

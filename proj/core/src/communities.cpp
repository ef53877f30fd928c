#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "rchat/errors.hpp"
#include "rchat/knowledge_graph.hpp"
#include "rchat/text.hpp"

namespace rchat {

CommunityDetection detect_communities(const EntityGraph& graph, const LeidenOptions& opts) {
  CommunityDetection out;
  if (graph.empty()) return out;
  std::vector<std::string> names;
  std::map<std::string, std::size_t> index;
  for (const auto& [name, e] : graph.entities) {
    index.emplace(name, names.size());
    names.push_back(name);
  }
  WeightedGraph wg(names.size());
  for (const auto& [key, r] : graph.relationships) wg.add_edge(index.at(r.source), index.at(r.target), r.weight);

  auto result = leiden(wg, opts.resolution, opts.seed, opts.max_levels);
  out.quality_log = std::move(result.quality_log);
  out.levels = result.levels.size();

  int next_id = 0;
  std::vector<int> parent_of_node(names.size(), -1);
  for (std::size_t level = 0; level < result.levels.size(); ++level) {
    const auto& labels = result.levels[level];  // normalized: label order = first member order
    const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<CommunityAssignment> comms(k);
    for (std::size_t c = 0; c < k; ++c) {
      comms[c].level = static_cast<int>(level);
      comms[c].community_id = next_id + static_cast<int>(c);
    }
    for (std::size_t v = 0; v < names.size(); ++v) {
      auto& c = comms[labels[v]];
      if (c.members.empty() && level > 0) c.parent_id = parent_of_node[v];
      c.members.push_back(names[v]);
    }
    for (std::size_t v = 0; v < names.size(); ++v) parent_of_node[v] = comms[labels[v]].community_id;
    next_id += static_cast<int>(k);
    for (auto& c : comms) out.assignments.push_back(std::move(c));
  }
  return out;
}

std::vector<CommunityAssignment> leiden_partition(const EntityGraph& graph, double resolution, std::uint64_t seed,
                                                  int max_levels) {
  if (graph.empty()) throw Error(ErrorCode::empty_graph, "leiden_partition: graph has no entities");
  return detect_communities(graph, {resolution, seed, max_levels}).assignments;
}

namespace {

std::string one_line(const std::string& s) { return text::collapse_whitespace(s); }

std::string format_weight(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", w);
  return buf;
}

std::string entity_line(const Entity& e) {
  return e.name + " (" + e.entity_type + "): " + one_line(e.description) + "\n";
}

std::string relationship_line(const Relationship& r) {
  return r.source + " -> " + r.target + " [weight " + format_weight(r.weight) + "]: " + one_line(r.description) +
         "\n";
}

std::vector<const Relationship*> internal_relationships(const EntityGraph& graph,
                                                        const std::set<std::string>& members) {
  std::vector<const Relationship*> out;
  for (const auto& [key, r] : graph.relationships) {
    if (members.contains(r.source) && members.contains(r.target)) out.push_back(&r);
  }
  return out;
}

}  // namespace

std::string community_context(const EntityGraph& graph, const CommunityAssignment& community, std::size_t budget,
                              std::vector<std::string>* packed_relationships) {
  static const std::string kEntityHeader = "-----Entities-----\n";
  static const std::string kRelationshipHeader = "-----Relationships-----\n";

  const std::set<std::string> members(community.members.begin(), community.members.end());
  auto rels = internal_relationships(graph, members);
  std::stable_sort(rels.begin(), rels.end(), [](const Relationship* a, const Relationship* b) {
    if (a->weight != b->weight) return a->weight > b->weight;
    return a->id() < b->id();
  });

  std::size_t used = kEntityHeader.size() + kRelationshipHeader.size();
  std::set<std::string> chosen_entities;
  std::vector<const Relationship*> chosen_rels;

  auto entity_cost = [&](const std::string& name) -> std::size_t {
    if (chosen_entities.contains(name)) return 0;
    const auto it = graph.entities.find(name);
    return it == graph.entities.end() ? 0 : entity_line(it->second).size();
  };

  for (const auto* r : rels) {
    std::size_t cost = relationship_line(*r).size() + entity_cost(r->source);
    if (r->target != r->source) cost += entity_cost(r->target);
    if (used + cost > budget) break;
    used += cost;
    chosen_entities.insert(r->source);
    chosen_entities.insert(r->target);
    chosen_rels.push_back(r);
  }
  for (const auto& name : community.members) {
    const auto cost = entity_cost(name);
    if (cost == 0 || used + cost > budget) continue;
    used += cost;
    chosen_entities.insert(name);
  }

  std::string out = kEntityHeader;
  for (const auto& name : chosen_entities) {
    const auto it = graph.entities.find(name);
    if (it != graph.entities.end()) out += entity_line(it->second);
  }
  out += kRelationshipHeader;
  for (const auto* r : chosen_rels) out += relationship_line(*r);
  if (packed_relationships != nullptr) {
    packed_relationships->clear();
    for (const auto* r : chosen_rels) packed_relationships->push_back(r->id());
  }
  return out;
}

CommunityReport parse_report_reply(const std::string& reply, const CommunityAssignment& community) {
  const auto trimmed = std::string(text::trim(reply));
  if (trimmed.empty()) throw Error(ErrorCode::provider_error, "empty community report");
  CommunityReport report;
  report.community_id = community.community_id;
  report.level = community.level;
  report.member_entities = community.members;
  report.rank = std::clamp(std::log1p(static_cast<double>(community.members.size())), 0.0, 10.0);

  const auto open = trimmed.find('{');
  const auto close = trimmed.rfind('}');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    const auto j = nlohmann::json::parse(trimmed.substr(open, close - open + 1), nullptr, false);
    if (j.is_object() && j.contains("summary") && j["summary"].is_string() &&
        !text::trim(j["summary"].get<std::string>()).empty()) {
      report.summary = std::string(text::trim(j["summary"].get<std::string>()));
      if (j.contains("title") && j["title"].is_string()) report.title = text::trim(j["title"].get<std::string>());
      if (j.contains("rating") && j["rating"].is_number()) {
        const double rating = j["rating"].get<double>();
        if (std::isfinite(rating)) report.rank = std::clamp(rating, 0.0, 10.0);
      }
    }
  }
  if (report.summary.empty()) report.summary = trimmed;
  if (report.title.empty()) report.title = "Community " + std::to_string(community.community_id);
  return report;
}

SummarizeResult summarize_communities(const EntityGraph& graph, const std::vector<CommunityAssignment>& assignments,
                                      Provider& provider, const SummarizeOptions& opts, const PromptSet& prompts) {
  SummarizeResult result;
  for (const auto& community : assignments) {
    if (!opts.levels.contains(community.level)) continue;
    try {
      const auto context = community_context(graph, community, opts.context_char_budget);
      CompletionRequest req;
      req.temperature = opts.temperature;
      req.max_tokens = opts.max_tokens;
      req.model_id = opts.model_id;
      req.messages.push_back({Role::user, prompts.render(prompt::kCommunityReport, {{"context", context}})});
      auto report = parse_report_reply(complete_chat(provider, req), community);
      const std::set<std::string> members(community.members.begin(), community.members.end());
      for (const auto* r : internal_relationships(graph, members)) report.member_relationships.push_back(r->id());
      result.reports.push_back(std::move(report));
    } catch (const Error& e) {
      spdlog::warn("community {} report failed: {}", community.community_id, e.what());
      result.failures.push_back({community.community_id, e.what()});
    }
  }
  return result;
}

}  // namespace rchat

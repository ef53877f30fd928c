#include <spdlog/spdlog.h>

#include <algorithm>
#include <nlohmann/json.hpp>

#include "rchat/errors.hpp"
#include "rchat/knowledge_graph.hpp"
#include "rchat/text.hpp"

using json = nlohmann::json;

namespace rchat {

EdgeKey edge_key(const std::string& a, const std::string& b) {
  return a < b ? EdgeKey{a, b} : EdgeKey{b, a};
}

void EntityGraph::check_invariants() const {
  for (const auto& [name, e] : entities) {
    if (name != e.name) throw Error(ErrorCode::invalid_argument, "entity key mismatch " + name);
    if (e.mention_count < 1) throw Error(ErrorCode::invalid_argument, "entity without mentions " + name);
    if (e.source_chunk_ids.empty()) throw Error(ErrorCode::invalid_argument, "entity without chunks " + name);
  }
  for (const auto& [key, r] : relationships) {
    if (r.source == r.target) throw Error(ErrorCode::invalid_argument, "self loop on " + r.source);
    if (!(r.source < r.target)) throw Error(ErrorCode::invalid_argument, "unordered edge " + r.id());
    if (key != EdgeKey{r.source, r.target}) throw Error(ErrorCode::invalid_argument, "edge key mismatch");
    if (!(r.weight > 0)) throw Error(ErrorCode::invalid_argument, "non-positive weight on " + r.id());
    if (!entities.contains(r.source) || !entities.contains(r.target)) {
      throw Error(ErrorCode::invalid_argument, "dangling edge " + r.id());
    }
  }
}

namespace {

struct EntityAcc {
  std::vector<std::pair<std::string, std::size_t>> type_counts;  // first-seen order
  std::vector<std::string> descriptions;
  std::set<std::string> chunks;
  std::size_t mentions = 0;
};

struct EdgeAcc {
  std::vector<std::string> descriptions;
  std::set<std::string> chunks;
  double weight = 0;
  std::size_t mentions = 0;
};

void add_unique(std::vector<std::string>& list, const std::string& s) {
  const auto t = std::string(text::trim(s));
  if (t.empty()) return;
  if (std::find(list.begin(), list.end(), t) == list.end()) list.push_back(t);
}

std::string join_lines(const std::vector<std::string>& list) {
  std::string out;
  for (const auto& s : list) {
    if (!out.empty()) out += '\n';
    out += s;
  }
  return out;
}

std::string resolve_description(const std::string& subject, const std::vector<std::string>& descriptions,
                                Provider& provider, const MergeOptions& opts, const PromptSet& prompts,
                                MergeReport& report) {
  std::string combined = join_lines(descriptions);
  if (combined.size() <= opts.summary_char_budget) return combined;
  std::string bullet_list;
  for (const auto& d : descriptions) bullet_list += "- " + d + "\n";
  CompletionRequest req;
  req.temperature = opts.temperature;
  req.max_tokens = opts.max_tokens;
  req.model_id = opts.model_id;
  req.messages.push_back({Role::user, prompts.render(prompt::kSummarizeDescriptions,
                                                     {{"entity_name", subject}, {"description_list", bullet_list}})});
  ++report.summarize_calls;
  auto summary = std::string(text::trim(complete_chat(provider, req)));
  if (summary.empty()) {
    report.warnings.push_back("empty summary for " + subject + ", keeping truncated descriptions");
    return std::string(text::utf8_prefix(combined, opts.summary_char_budget));
  }
  return summary;
}

}  // namespace

EntityGraph merge_elements(const std::vector<ExtractionResult>& raws, Provider& provider, const MergeOptions& opts,
                           const PromptSet& prompts, MergeReport* report_out) {
  MergeReport report;
  std::map<std::string, EntityAcc> ents;
  std::map<EdgeKey, EdgeAcc> edges;

  for (const auto& raw : raws) {
    for (const auto& e : raw.entities) {
      const auto name = text::canonical_name(e.name);
      if (name.empty()) continue;
      auto& acc = ents[name];
      ++acc.mentions;
      acc.chunks.insert(e.chunk_id);
      add_unique(acc.descriptions, e.description);
      if (!e.entity_type.empty()) {
        auto it = std::find_if(acc.type_counts.begin(), acc.type_counts.end(),
                               [&](const auto& p) { return p.first == e.entity_type; });
        if (it == acc.type_counts.end()) {
          acc.type_counts.emplace_back(e.entity_type, 1);
        } else {
          ++it->second;
        }
      }
    }
    for (const auto& r : raw.relationships) {
      const auto a = text::canonical_name(r.source);
      const auto b = text::canonical_name(r.target);
      if (a.empty() || b.empty()) continue;
      if (a == b) {
        report.warnings.push_back("dropped self relationship on " + a);
        continue;
      }
      auto& acc = edges[edge_key(a, b)];
      acc.weight += r.strength;
      ++acc.mentions;
      acc.chunks.insert(r.chunk_id);
      add_unique(acc.descriptions, r.description);
    }
  }

  // Dangling endpoints become stub entities.
  for (const auto& [key, acc] : edges) {
    for (const auto* name : {&key.first, &key.second}) {
      if (ents.contains(*name)) continue;
      auto& stub = ents[*name];
      stub.mentions = 1;
      stub.chunks = acc.chunks;
      stub.type_counts.emplace_back("UNKNOWN", 1);
      report.stub_entities.push_back(*name);
      spdlog::info("DanglingEndpoint: created stub entity {}", *name);
    }
  }

  EntityGraph g;
  for (auto& [name, acc] : ents) {
    Entity e;
    e.name = name;
    std::size_t best = 0;
    for (const auto& [type, count] : acc.type_counts) {
      if (count > best) {
        best = count;
        e.entity_type = type;
      }
    }
    e.description = resolve_description(name, acc.descriptions, provider, opts, prompts, report);
    e.source_chunk_ids = std::move(acc.chunks);
    e.mention_count = acc.mentions;
    g.entities.emplace(name, std::move(e));
  }
  for (auto& [key, acc] : edges) {
    Relationship r;
    r.source = key.first;
    r.target = key.second;
    r.weight = acc.weight;
    r.mention_count = acc.mentions;
    r.source_chunk_ids = std::move(acc.chunks);
    r.description = resolve_description(key.first + " -> " + key.second, acc.descriptions, provider, opts,
                                        prompts, report);
    g.relationships.emplace(key, std::move(r));
  }
  g.check_invariants();
  if (report_out != nullptr) *report_out = std::move(report);
  return g;
}

// ---------------------------------------------------------------------------
// JSON artifacts. nlohmann::json objects keep keys sorted, so dumps are stable.

std::string entities_json(const EntityGraph& graph) {
  json arr = json::array();
  for (const auto& [name, e] : graph.entities) {
    arr.push_back({{"name", e.name},
                   {"type", e.entity_type},
                   {"description", e.description},
                   {"source_chunk_ids", e.source_chunk_ids},
                   {"mention_count", e.mention_count}});
  }
  return arr.dump(2) + "\n";
}

std::string relationships_json(const EntityGraph& graph) {
  json arr = json::array();
  for (const auto& [key, r] : graph.relationships) {
    arr.push_back({{"id", r.id()},
                   {"source", r.source},
                   {"target", r.target},
                   {"description", r.description},
                   {"weight", r.weight},
                   {"source_chunk_ids", r.source_chunk_ids},
                   {"mention_count", r.mention_count}});
  }
  return arr.dump(2) + "\n";
}

std::string communities_json(const std::vector<CommunityAssignment>& assignments) {
  json arr = json::array();
  for (const auto& c : assignments) {
    arr.push_back({{"community_id", c.community_id},
                   {"level", c.level},
                   {"parent_id", c.parent_id ? json(*c.parent_id) : json(nullptr)},
                   {"members", c.members}});
  }
  return arr.dump(2) + "\n";
}

std::string reports_json(const std::vector<CommunityReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    arr.push_back({{"community_id", r.community_id},
                   {"level", r.level},
                   {"title", r.title},
                   {"summary", r.summary},
                   {"member_entities", r.member_entities},
                   {"member_relationships", r.member_relationships},
                   {"rank", r.rank}});
  }
  return arr.dump(2) + "\n";
}

void export_graph(const EntityGraph& graph, const std::vector<CommunityAssignment>& assignments,
                  const std::vector<CommunityReport>& reports, const std::filesystem::path& dir) {
  text::write_file((dir / "entities.json").string(), entities_json(graph));
  text::write_file((dir / "relationships.json").string(), relationships_json(graph));
  text::write_file((dir / "communities.json").string(), communities_json(assignments));
  text::write_file((dir / "reports.json").string(), reports_json(reports));
}

namespace {

json read_json_file(const std::filesystem::path& p) {
  try {
    return json::parse(text::read_file(p.string()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io_error, p.string() + ": " + e.what());
  }
}

}  // namespace

GraphArtifacts load_graph(const std::filesystem::path& dir) {
  GraphArtifacts out;
  try {
    for (const auto& j : read_json_file(dir / "entities.json")) {
      Entity e;
      e.name = j.at("name");
      e.entity_type = j.at("type");
      e.description = j.at("description");
      e.source_chunk_ids = j.at("source_chunk_ids").get<std::set<std::string>>();
      e.mention_count = j.at("mention_count");
      out.graph.entities.emplace(e.name, std::move(e));
    }
    for (const auto& j : read_json_file(dir / "relationships.json")) {
      Relationship r;
      r.source = j.at("source");
      r.target = j.at("target");
      r.description = j.at("description");
      r.weight = j.at("weight");
      r.source_chunk_ids = j.at("source_chunk_ids").get<std::set<std::string>>();
      r.mention_count = j.at("mention_count");
      out.graph.relationships.emplace(EdgeKey{r.source, r.target}, std::move(r));
    }
    for (const auto& j : read_json_file(dir / "communities.json")) {
      CommunityAssignment c;
      c.community_id = j.at("community_id");
      c.level = j.at("level");
      if (!j.at("parent_id").is_null()) c.parent_id = j.at("parent_id").get<int>();
      c.members = j.at("members").get<std::vector<std::string>>();
      out.assignments.push_back(std::move(c));
    }
    const auto reports_path = dir / "reports.json";
    if (std::filesystem::exists(reports_path)) {
      for (const auto& j : read_json_file(reports_path)) {
        CommunityReport r;
        r.community_id = j.at("community_id");
        r.level = j.at("level");
        r.title = j.at("title");
        r.summary = j.at("summary");
        r.member_entities = j.at("member_entities").get<std::vector<std::string>>();
        r.member_relationships = j.at("member_relationships").get<std::vector<std::string>>();
        r.rank = j.at("rank");
        out.reports.push_back(std::move(r));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io_error, "graph artifacts in " + dir.string() + ": " + e.what());
  }
  out.graph.check_invariants();
  return out;
}

}  // namespace rchat

#include "rchat/prompts.hpp"

#include "rchat/errors.hpp"
#include "rchat/text.hpp"

namespace rchat {

namespace {

constexpr const char* kExtractBody = R"(-Goal-
Given a passage from a technical documentation corpus and a list of entity types, identify every entity of those types in the passage and every relationship between the identified entities.

-Steps-
1. Identify all entities. For each entity give:
- name: the entity name, capitalized
- type: one of [{entity_types}]
- description: a precise description of the entity as it appears in the passage
Write each entity as ("entity"|<name>|<type>|<description>)

2. Among the entities from step 1, identify every pair (source, target) that is clearly related. For each pair give:
- source: name of the source entity, as in step 1
- target: name of the target entity, as in step 1
- description: why the two entities are related
- strength: an integer from 1 (weak) to 10 (strong)
Write each relationship as ("relationship"|<source>|<target>|<description>|<strength>)

3. Put one record per line and separate records with ##
4. Finish the output with <|COMPLETE|>

-Passage-
{input_text}

Output:
)";

constexpr const char* kGleanContinueBody =
    R"(Some entities and relationships were missed in the last extraction. Add them below using the same format. Do not repeat records already given.
)";

constexpr const char* kGleanCheckBody =
    R"(Could entities or relationships still be missing from the extraction? Answer with a single word, YES or NO.
)";

constexpr const char* kSummarizeBody = R"(You maintain a knowledge graph about {domain}.
Merge the descriptions below of "{entity_name}" into one coherent, non-contradictory description written in the third person. Keep technical details such as parameter names and function signatures.

Descriptions:
{description_list}

Merged description:
)";

constexpr const char* kCommunityReportBody = R"(You write reports about communities of a knowledge graph on {domain}.
A community is a group of closely connected entities. Using only the entities and relationships below, write a report.
Reply with JSON only, in the form:
{"title": "<short name of the community>", "summary": "<a few paragraphs describing the community and its key relationships>", "rating": <importance from 0 to 10>}

{context}
)";

constexpr const char* kSystemBody = R"(You are a documentation assistant for {domain}. Answer using the provided context when it is relevant. When writing code, use the library API exactly as documented in the context. If the context does not contain the answer, say so instead of inventing one.
)";

constexpr const char* kLocalSearchBody = R"(---Conversation history---
{history}

---Context---
{context}

---Question---
{question}
)";

constexpr const char* kRagSearchBody = R"(---Conversation history---
{history}

---Retrieved documents---
{context}

---Question---
{question}
)";

constexpr const char* kGlobalMapBody = R"(You are given community reports from a knowledge graph about {domain} and a user question.
For each report, write the part of the answer that this report supports and rate how helpful it is for the question from 0 (irrelevant) to 100 (fully answers it).
Reply with a JSON array only:
[{"community": <community id>, "helpfulness": <0-100>, "answer": "<partial answer>"}]

---Reports---
{reports}

---Question---
{question}
)";

constexpr const char* kGlobalReduceBody = R"(Several analysts answered parts of a question using different community reports of a knowledge graph about {domain}. Their partial answers are listed below, most helpful first.
Combine them into one final answer. Drop anything that is not supported by the partial answers.

---Partial answers---
{partials}

---Question---
{question}
)";

}  // namespace

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.templates_ = {
      {std::string(prompt::kExtract), kExtractBody},
      {std::string(prompt::kGleanContinue), kGleanContinueBody},
      {std::string(prompt::kGleanCheck), kGleanCheckBody},
      {std::string(prompt::kSummarizeDescriptions), kSummarizeBody},
      {std::string(prompt::kCommunityReport), kCommunityReportBody},
      {std::string(prompt::kSystem), kSystemBody},
      {std::string(prompt::kLocalSearch), kLocalSearchBody},
      {std::string(prompt::kRagSearch), kRagSearchBody},
      {std::string(prompt::kGlobalMap), kGlobalMapBody},
      {std::string(prompt::kGlobalReduce), kGlobalReduceBody},
  };
  p.vars_ = {{"domain", "the ReservoirPy library and reservoir computing"}};
  return p;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  auto p = defaults();
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(ErrorCode::config_error, "prompt directory not found: " + dir.string());
  }
  for (auto& [name, body] : p.templates_) {
    const auto file = dir / (name + ".txt");
    if (std::filesystem::is_regular_file(file, ec)) body = text::read_file(file.string());
  }
  return p;
}

const std::string& PromptSet::get(std::string_view name) const {
  const auto it = templates_.find(std::string(name));
  if (it == templates_.end()) throw Error(ErrorCode::config_error, "unknown prompt " + std::string(name));
  return it->second;
}

void PromptSet::set(const std::string& name, std::string body) { templates_[name] = std::move(body); }

void PromptSet::set_var(const std::string& key, std::string value) { vars_[key] = std::move(value); }

std::string PromptSet::render(std::string_view name,
                              const std::vector<std::pair<std::string, std::string>>& values) const {
  auto all = values;
  for (const auto& [k, v] : vars_) all.emplace_back(k, v);
  return text::render_template(get(name), all);
}

std::string PromptSet::version() const {
  std::uint64_t h = text::fnv1a64("prompts");
  for (const auto& [name, body] : templates_) {
    h = text::fnv1a64(name, h);
    h = text::fnv1a64("\x1f", h);
    h = text::fnv1a64(body, h);
    h = text::fnv1a64("\x1e", h);
  }
  for (const auto& [k, v] : vars_) {
    h = text::fnv1a64(k + "=" + v + "\x1e", h);
  }
  return text::hex64(h);
}

void PromptSet::write(const std::filesystem::path& dir) const {
  for (const auto& [name, body] : templates_) text::write_file((dir / (name + ".txt")).string(), body);
}

}  // namespace rchat

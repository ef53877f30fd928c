#include <spdlog/spdlog.h>

#include <charconv>

#include "rchat/errors.hpp"
#include "rchat/knowledge_graph.hpp"
#include "rchat/text.hpp"

namespace rchat {

namespace {

std::string strip_quotes(std::string_view s) {
  s = text::trim(s);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    s = s.substr(1, s.size() - 2);
  }
  return std::string(text::trim(s));
}

std::string join_fields(const std::vector<std::string>& fields, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out += prompt::kTupleDelimiter;
    out += fields[i];
  }
  return std::string(text::trim(out));
}

std::optional<int> parse_strength(std::string_view s) {
  s = text::trim(s);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v < 1 || v > 10) return std::nullopt;
  return v;
}

void parse_one(std::string_view record, const std::string& chunk_id, ExtractionResult& out) {
  auto body = text::trim(record);
  if (body.size() < 2 || body.front() != '(' || body.back() != ')') {
    out.warnings.push_back("UnparsableRecord: " + std::string(record));
    return;
  }
  body = body.substr(1, body.size() - 2);
  const auto fields = text::split(body, prompt::kTupleDelimiter);
  const auto tag = text::to_lower_ascii(strip_quotes(fields.front()));
  if (tag == "entity" && fields.size() >= 4) {
    RawEntity e;
    e.name = strip_quotes(fields[1]);
    e.entity_type = text::canonical_name(strip_quotes(fields[2]));
    e.description = join_fields(fields, 3, fields.size());
    e.chunk_id = chunk_id;
    if (!text::canonical_name(e.name).empty()) {
      out.entities.push_back(std::move(e));
      return;
    }
  } else if (tag == "relationship" && fields.size() >= 5) {
    const auto strength = parse_strength(fields.back());
    RawRelationship r;
    r.source = strip_quotes(fields[1]);
    r.target = strip_quotes(fields[2]);
    r.description = join_fields(fields, 3, fields.size() - 1);
    r.chunk_id = chunk_id;
    if (strength && !text::canonical_name(r.source).empty() && !text::canonical_name(r.target).empty()) {
      r.strength = *strength;
      out.relationships.push_back(std::move(r));
      return;
    }
  }
  out.warnings.push_back("UnparsableRecord: " + std::string(record));
}

}  // namespace

void parse_extraction_records(std::string_view reply, const std::string& chunk_id, ExtractionResult& out) {
  std::string_view content = reply;
  if (const auto stop = content.find(prompt::kCompletionMarker); stop != std::string_view::npos) {
    content = content.substr(0, stop);
  }
  for (const auto& piece : text::split(content, prompt::kRecordDelimiter)) {
    for (const auto& line : text::split(piece, "\n")) {
      if (text::trim(line).empty()) continue;
      const auto before = out.warnings.size();
      parse_one(line, chunk_id, out);
      if (out.warnings.size() != before) spdlog::warn("{} ({})", out.warnings.back(), chunk_id);
    }
  }
}

ExtractionResult extract_elements(const Chunk& chunk, Provider& provider, const ExtractionOptions& opts,
                                  const PromptSet& prompts) {
  if (chunk.text.empty()) throw Error(ErrorCode::invalid_argument, "extract_elements: empty chunk");
  if (opts.max_gleanings < 0) throw Error(ErrorCode::invalid_argument, "max_gleanings must be >= 0");

  std::string types;
  for (const auto& t : opts.entity_types) {
    if (!types.empty()) types += ", ";
    types += t;
  }
  CompletionRequest req;
  req.temperature = opts.temperature;
  req.max_tokens = opts.max_tokens;
  req.model_id = opts.model_id;
  req.messages.push_back(
      {Role::user, prompts.render(prompt::kExtract, {{"entity_types", types}, {"input_text", chunk.text}})});

  ExtractionResult result;
  std::string reply = complete_chat(provider, req);
  result.rounds = 1;
  parse_extraction_records(reply, chunk.chunk_id, result);

  for (int g = 0; g < opts.max_gleanings; ++g) {
    req.messages.push_back({Role::assistant, reply.empty() ? std::string("(none)") : reply});
    req.messages.push_back({Role::user, prompts.render(prompt::kGleanCheck, {})});
    const std::string answer = complete_chat(provider, req);
    const auto verdict = text::to_upper_ascii(text::trim(answer));
    if (!verdict.starts_with("YES")) break;

    req.messages.push_back({Role::assistant, answer});
    req.messages.push_back({Role::user, prompts.render(prompt::kGleanContinue, {})});
    reply = complete_chat(provider, req);
    ++result.rounds;
    parse_extraction_records(reply, chunk.chunk_id, result);
  }
  return result;
}

}  // namespace rchat

#include "rchat/benchmark.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "rchat/errors.hpp"
#include "rchat/query_engine.hpp"
#include "rchat/text.hpp"

using json = nlohmann::json;

namespace rchat {

std::string_view to_string(Category c) { return c == Category::code ? "code" : "knowledge"; }

std::string_view to_string(Subcategory s) {
  switch (s) {
    case Subcategory::beginner: return "beginner";
    case Subcategory::intermediate: return "intermediate";
    case Subcategory::advanced: return "advanced";
    case Subcategory::expert: return "expert";
    case Subcategory::code_plain: return "code_plain";
    case Subcategory::code_debug: return "code_debug";
  }
  return "beginner";
}

std::optional<Category> parse_category(std::string_view s) {
  if (s == "knowledge") return Category::knowledge;
  if (s == "code") return Category::code;
  return std::nullopt;
}

std::optional<Subcategory> parse_subcategory(std::string_view s) {
  for (auto v : {Subcategory::beginner, Subcategory::intermediate, Subcategory::advanced, Subcategory::expert,
                 Subcategory::code_plain, Subcategory::code_debug}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

namespace {

constexpr std::array<char, 4> kLetters = {'A', 'B', 'C', 'D'};

std::optional<char> letter_from(std::string_view s) {
  if (s.size() != 1) return std::nullopt;
  const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (c >= 'A' && c <= 'D') return c;
  return std::nullopt;
}

[[noreturn]] void schema_error(const std::string& qid, const std::string& what) {
  throw Error(ErrorCode::schema_error, (qid.empty() ? std::string("question") : qid) + ": " + what);
}

McqQuestion parse_question(const json& j, std::size_t position) {
  McqQuestion q;
  if (!j.is_object()) schema_error("#" + std::to_string(position), "not an object");
  if (!j.contains("qid") || !j["qid"].is_string() || j["qid"].get<std::string>().empty()) {
    schema_error("#" + std::to_string(position), "missing qid");
  }
  q.qid = j["qid"].get<std::string>();
  auto str_field = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) schema_error(q.qid, std::string("missing ") + key);
    return j[key].get<std::string>();
  };
  const auto cat = parse_category(str_field("category"));
  if (!cat) schema_error(q.qid, "unknown category");
  q.category = *cat;
  const auto sub = parse_subcategory(str_field("subcategory"));
  if (!sub) schema_error(q.qid, "unknown subcategory");
  q.subcategory = *sub;
  const bool code_sub = q.subcategory == Subcategory::code_plain || q.subcategory == Subcategory::code_debug;
  if (code_sub != (q.category == Category::code)) schema_error(q.qid, "subcategory does not match category");
  q.stem = str_field("stem");
  if (text::trim(q.stem).empty()) schema_error(q.qid, "empty stem");
  if (!j.contains("options") || !j["options"].is_object()) schema_error(q.qid, "options must be an object");
  const auto& opts = j["options"];
  if (opts.size() != 4) schema_error(q.qid, "expected exactly 4 options, got " + std::to_string(opts.size()));
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string key(1, kLetters[i]);
    if (!opts.contains(key) || !opts[key].is_string()) schema_error(q.qid, "missing option " + key);
    q.options[i] = opts[key].get<std::string>();
  }
  if (j.contains("correct") && !j["correct"].is_null()) {
    if (!j["correct"].is_string()) schema_error(q.qid, "correct must be a letter or null");
    const auto letter = letter_from(j["correct"].get<std::string>());
    if (!letter || j["correct"].get<std::string>() != std::string(1, *letter)) {
      schema_error(q.qid, "correct must be one of A, B, C, D");
    }
    q.correct = letter;
  }
  return q;
}

}  // namespace

std::vector<McqQuestion> parse_benchmark(std::string_view json_text) {
  const auto j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::schema_error, "benchmark file is not valid JSON");
  if (!j.is_array()) throw Error(ErrorCode::schema_error, "benchmark file must hold a JSON array");
  std::vector<McqQuestion> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto q = parse_question(j[i], i);
    if (!seen.insert(q.qid).second) throw Error(ErrorCode::duplicate_qid, q.qid);
    out.push_back(std::move(q));
  }
  for (const auto& q : out) {
    if (!q.correct) spdlog::warn("benchmark question {} has no key; it is excluded from totals", q.qid);
  }
  return out;
}

std::vector<McqQuestion> load_benchmark(const std::filesystem::path& path) {
  return parse_benchmark(text::read_file(path.string()));
}

std::map<Category, std::size_t> category_counts(const std::vector<McqQuestion>& questions) {
  std::map<Category, std::size_t> out{{Category::knowledge, 0}, {Category::code, 0}};
  for (const auto& q : questions) ++out[q.category];
  return out;
}

void apply_key_overrides(std::vector<McqQuestion>& questions, const std::map<std::string, char>& keys) {
  for (const auto& [qid, letter] : keys) {
    const auto l = letter_from(std::string_view(&letter, 1));
    if (!l) schema_error(qid, "override key must be one of A, B, C, D");
    auto it = std::find_if(questions.begin(), questions.end(), [&](const McqQuestion& q) { return q.qid == qid; });
    if (it == questions.end()) schema_error(qid, "override for unknown question");
    it->correct = *l;
  }
}

std::string render_prompt(const McqQuestion& q) {
  std::string out(kMcqInstruction);
  out += "\n\n";
  out += text::trim(q.stem);
  out += "\n\n";
  for (std::size_t i = 0; i < 4; ++i) {
    out += kLetters[i];
    out += ") ";
    out += text::trim(q.options[i]);
    out += '\n';
  }
  return out;
}

std::optional<char> parse_choice(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size()) {
    while (i < reply.size() && std::isspace(static_cast<unsigned char>(reply[i]))) ++i;
    const auto start = i;
    while (i < reply.size() && !std::isspace(static_cast<unsigned char>(reply[i]))) ++i;
    auto token = reply.substr(start, i - start);
    while (!token.empty() && (token.front() == '(' || token.front() == '[' || token.front() == '*' ||
                              token.front() == '"' || token.front() == '\'')) {
      token.remove_prefix(1);
    }
    while (!token.empty() && std::ispunct(static_cast<unsigned char>(token.back()))) token.remove_suffix(1);
    if (const auto l = letter_from(token)) return l;
  }
  return std::nullopt;
}

ModelScorecard score_attempts(std::string model_name, std::vector<AttemptRecord> records) {
  ModelScorecard card;
  card.model_name = std::move(model_name);
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> counts;  // correct, attempts
  std::map<std::string, Category> category;
  std::set<std::string> unkeyed;
  for (auto& r : records) {
    r.is_correct = r.parsed && r.correct && *r.parsed == *r.correct;
    if (!category.contains(r.qid)) {
      card.question_order.push_back(r.qid);
      category.emplace(r.qid, r.category);
    }
    card.repetitions = std::max(card.repetitions, r.repetition);
    if (!r.correct) {
      unkeyed.insert(r.qid);
      continue;
    }
    auto& [correct, attempts] = counts[r.qid];
    attempts += 1;
    if (r.is_correct) correct += 1;
  }
  card.totals = {{Category::knowledge, Score(0)}, {Category::code, Score(0)}};
  for (const auto& [qid, c] : counts) {
    const Score s(c.first, c.second);
    card.per_question.emplace(qid, s);
    card.totals[category.at(qid)] += s;
  }
  for (const auto& qid : card.question_order) {
    if (unkeyed.contains(qid)) {
      card.excluded_qids.push_back(qid);
      card.warnings.push_back("question " + qid + " has no key and is excluded from totals");
    }
  }
  card.records = std::move(records);
  return card;
}

ModelScorecard run_model_benchmark(const std::string& model_name, const std::vector<McqQuestion>& questions,
                                   const Answerer& answer, const RunOptions& opts) {
  if (opts.repetitions < 1) throw Error(ErrorCode::invalid_argument, "repetitions must be >= 1");
  const auto reps = static_cast<std::size_t>(opts.repetitions);
  std::vector<AttemptRecord> records(questions.size() * reps);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t qi = next++; qi < questions.size(); qi = next++) {
      const auto& q = questions[qi];
      const auto prompt = render_prompt(q);
      // Repetitions of one question stay sequential.
      for (std::size_t rep = 0; rep < reps; ++rep) {
        auto& r = records[qi * reps + rep];
        r.model = model_name;
        r.qid = q.qid;
        r.category = q.category;
        r.repetition = static_cast<int>(rep + 1);
        r.correct = q.correct;
        try {
          r.raw_reply = answer(q, prompt, r.repetition);
          r.parsed = parse_choice(r.raw_reply);
        } catch (const Error& e) {
          if (!is_provider_error(e.code())) throw;
          r.error = e.what();
          spdlog::warn("attempt {} #{} failed: {}", q.qid, r.repetition, e.what());
        }
      }
    }
  };

  const auto threads = std::clamp<std::size_t>(opts.max_in_flight, 1, std::max<std::size_t>(1, questions.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        try {
          worker();
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next = questions.size();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  return score_attempts(model_name, std::move(records));
}

Answerer provider_answerer(Provider& provider, const RunOptions& opts, std::string model_id) {
  return [&provider, opts, model_id = std::move(model_id)](const McqQuestion&, const std::string& prompt, int) {
    CompletionRequest req;
    req.temperature = opts.temperature;
    req.max_tokens = opts.max_tokens;
    req.model_id = model_id;
    req.messages.push_back({Role::user, prompt});
    return complete_chat(provider, req);
  };
}

Answerer engine_answerer(const QueryEngine& engine) {
  return [&engine](const McqQuestion&, const std::string& prompt, int) {
    auto outcome = engine.local_search(prompt, {});
    if (outcome.kind != OutcomeKind::answer) {
      throw Error(ErrorCode::provider_error, std::string(to_string(outcome.kind)) + ": " + outcome.detail);
    }
    return outcome.turn.content;
  };
}

// ---------------------------------------------------------------------------
// Rendering

Score truncate_to(const Score& value, int decimals) {
  std::int64_t scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  // Integer division truncates toward zero.
  const std::int64_t scaled = value.numerator() * scale / value.denominator();
  return Score(scaled, scale);
}

std::string format_truncated(const Score& value, int decimals, bool with_sign) {
  std::int64_t scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const std::int64_t scaled = value.numerator() * scale / value.denominator();
  const bool negative = scaled < 0;
  const std::int64_t mag = scaled < 0 ? -scaled : scaled;
  std::string out;
  if (negative) {
    out += '-';
  } else if (with_sign && scaled > 0) {
    out += '+';
  }
  out += std::to_string(mag / scale);
  if (decimals > 0) {
    auto frac = std::to_string(mag % scale);
    out += '.';
    out += std::string(static_cast<std::size_t>(decimals) - frac.size(), '0') + frac;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json letter_json(const std::optional<char>& l) { return l ? json(std::string(1, *l)) : json(nullptr); }

json score_json(const Score& s) {
  return {{"numerator", s.numerator()}, {"denominator", s.denominator()}, {"display", format_truncated(s)}};
}

}  // namespace

std::string attempts_jsonl(const ModelScorecard& card) {
  std::string out;
  for (const auto& r : card.records) {
    json j = {{"model", r.model},
              {"qid", r.qid},
              {"category", to_string(r.category)},
              {"repetition", r.repetition},
              {"raw_reply", r.raw_reply},
              {"parsed", r.parsed ? json(std::string(1, *r.parsed)) : json("INVALID")},
              {"correct", letter_json(r.correct)},
              {"is_correct", r.is_correct}};
    if (!r.error.empty()) j["error"] = r.error;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string summary_json(const ModelScorecard& card) {
  json per_question = json::object();
  for (const auto& [qid, s] : card.per_question) per_question[qid] = score_json(s);
  json totals = json::object();
  for (const auto& [c, s] : card.totals) totals[std::string(to_string(c))] = score_json(s);
  const auto var = card.repetitions >= 2 ? std::optional(variability(card)) : std::nullopt;
  json variability_json = json::object();
  if (var) {
    for (const auto& [c, f] : var->fraction) {
      variability_json[std::string(to_string(c))] = {
          {"varied", var->varied.at(c)}, {"total", var->total.at(c)}, {"display", format_percent(f)}};
    }
  }
  const json j = {{"model", card.model_name},
                  {"repetitions", card.repetitions},
                  {"questions", card.question_order.size()},
                  {"totals", totals},
                  {"per_question", per_question},
                  {"excluded", card.excluded_qids},
                  {"warnings", card.warnings},
                  {"variability", variability_json}};
  return j.dump(2) + "\n";
}

void write_results(const ModelScorecard& card, const std::filesystem::path& dir) {
  text::write_file((dir / "attempts.jsonl").string(), attempts_jsonl(card));
  text::write_file((dir / "summary.json").string(), summary_json(card));
}

ModelScorecard load_results(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "attempts.jsonl" : path;
  const auto content = text::read_file(file.string());
  std::vector<AttemptRecord> records;
  std::string model;
  std::size_t line_no = 0;
  for (const auto& line : text::split(content, "\n")) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    try {
      if (j.is_discarded()) throw json::other_error::create(501, "not JSON", nullptr);
      AttemptRecord r;
      r.model = j.at("model").get<std::string>();
      r.qid = j.at("qid").get<std::string>();
      const auto cat = parse_category(j.at("category").get<std::string>());
      if (!cat) throw json::other_error::create(501, "unknown category", nullptr);
      r.category = *cat;
      r.repetition = j.at("repetition").get<int>();
      r.raw_reply = j.at("raw_reply").get<std::string>();
      const auto parsed = j.at("parsed").get<std::string>();
      r.parsed = parsed == "INVALID" ? std::nullopt : letter_from(parsed);
      if (!j.at("correct").is_null()) r.correct = letter_from(j.at("correct").get<std::string>());
      if (j.contains("error")) r.error = j["error"].get<std::string>();
      if (model.empty()) model = r.model;
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw RowError(ErrorCode::malformed_row, line_no, file.string() + ": " + e.what());
    }
  }
  if (records.empty()) throw Error(ErrorCode::schema_error, file.string() + ": no attempt records");
  return score_attempts(model, std::move(records));
}

}  // namespace rchat

#pragma once

#include <array>
#include <boost/rational.hpp>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rchat/model_client.hpp"

namespace rchat {

class QueryEngine;

using Score = boost::rational<std::int64_t>;

enum class Category { knowledge, code };
enum class Subcategory { beginner, intermediate, advanced, expert, code_plain, code_debug };

std::string_view to_string(Category c);
std::string_view to_string(Subcategory s);
std::optional<Category> parse_category(std::string_view s);
std::optional<Subcategory> parse_subcategory(std::string_view s);

struct McqQuestion {
  std::string qid;
  Category category = Category::knowledge;
  Subcategory subcategory = Subcategory::beginner;
  std::string stem;
  std::array<std::string, 4> options;  // A..D
  std::optional<char> correct;         // 'A'..'D'
};

// JSON array of {qid, category, subcategory, stem, options{A..D}, correct}.
// Throws SchemaError naming the qid, or DuplicateQid.
std::vector<McqQuestion> parse_benchmark(std::string_view json_text);
std::vector<McqQuestion> load_benchmark(const std::filesystem::path& path);

std::map<Category, std::size_t> category_counts(const std::vector<McqQuestion>& questions);

// Sets the key of each listed qid. Throws SchemaError for unknown qids or letters.
void apply_key_overrides(std::vector<McqQuestion>& questions, const std::map<std::string, char>& keys);

inline constexpr std::string_view kMcqInstruction =
    "You will be given a question with four answer options labeled A, B, C, and D. Please respond using the "
    "library ReservoirPy with only the letter (A, B, C, or D) that is the correct answer.";

std::string render_prompt(const McqQuestion& q);

// First standalone A-D token, case-insensitive, trailing punctuation allowed.
// nullopt means INVALID.
std::optional<char> parse_choice(std::string_view reply);

struct AttemptRecord {
  std::string model;
  std::string qid;
  Category category = Category::knowledge;
  int repetition = 1;  // 1-based
  std::string raw_reply;
  std::optional<char> parsed;
  std::optional<char> correct;
  bool is_correct = false;
  std::string error;  // provider failure text, if any
};

struct ModelScorecard {
  std::string model_name;
  int repetitions = 0;
  std::vector<std::string> question_order;
  std::vector<AttemptRecord> records;         // question order, then repetition
  std::map<std::string, Score> per_question;  // keyed questions only
  std::map<Category, Score> totals;
  std::vector<std::string> excluded_qids;  // questions without a key
  std::vector<std::string> warnings;
};

// Builds per-question scores and totals from attempt records.
ModelScorecard score_attempts(std::string model_name, std::vector<AttemptRecord> records);

// Receives the rendered prompt and returns the raw reply.
using Answerer = std::function<std::string(const McqQuestion& q, const std::string& prompt, int repetition)>;

struct RunOptions {
  int repetitions = 3;
  double temperature = 0.1;
  int max_tokens = 16;
  std::size_t max_in_flight = 4;
};

ModelScorecard run_model_benchmark(const std::string& model_name, const std::vector<McqQuestion>& questions,
                                   const Answerer& answer, const RunOptions& opts);

// One fresh single-message request per attempt.
Answerer provider_answerer(Provider& provider, const RunOptions& opts, std::string model_id = {});
// Answers through local search with no history.
Answerer engine_answerer(const QueryEngine& engine);

// ---------------------------------------------------------------------------
// Rendering

// Truncates toward zero at `decimals` places: 56/3 -> "18.66". With
// with_sign, positive values get a leading '+'.
std::string format_truncated(const Score& value, int decimals = 2, bool with_sign = false);
Score truncate_to(const Score& value, int decimals);

// ---------------------------------------------------------------------------
// Persistence

std::string attempts_jsonl(const ModelScorecard& card);
std::string summary_json(const ModelScorecard& card);
void write_results(const ModelScorecard& card, const std::filesystem::path& dir);
// Accepts a results directory (attempts.jsonl inside) or the jsonl file itself.
ModelScorecard load_results(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Analysis

// Throws MismatchedQuestionSets unless every card has the same qids and
// repetition count.
void check_same_questions(const std::vector<const ModelScorecard*>& cards);

enum class PercentBasis {
  displayed_totals,  // totals truncated to 2 decimals first, as printed
  exact,
};

struct TableCell {
  std::optional<Score> value;  // nullopt: undefined (division by zero)
  std::string text;
};

struct Table {
  std::string title;
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<TableCell>> cells;

  std::string to_csv() const;
  std::string to_text() const;
};

inline constexpr std::string_view kUndefinedCell = "n/a";

struct DifferenceTables {
  std::map<Category, Table> difference;        // ours - other, exact
  std::map<Category, Table> percentage;        // 100 (ours - other) / other
  std::map<Category, Table> scale_percentage;  // 100 (ours - other) / keyed question count
};

DifferenceTables difference_tables(const std::vector<ModelScorecard>& ours, const std::vector<ModelScorecard>& others,
                                   PercentBasis basis = PercentBasis::displayed_totals);

enum class PearsonEncoding { correctness, letter_ordinal };

std::string_view to_string(PearsonEncoding e);
std::optional<PearsonEncoding> parse_pearson_encoding(std::string_view s);

inline constexpr std::string_view kPearsonDegenerateRule =
    "both vectors constant and equal -> 1; one or both constant otherwise -> 0";

// Throws LengthMismatch.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> attempt_vector(const ModelScorecard& card, PearsonEncoding encoding,
                                   const std::vector<std::string>& question_order);

struct PearsonMatrix {
  PearsonEncoding encoding = PearsonEncoding::correctness;
  std::vector<std::string> models;
  std::vector<std::vector<double>> r;

  std::string to_csv() const;
};

PearsonMatrix pearson_matrix(const std::vector<ModelScorecard>& cards, PearsonEncoding encoding);

struct Variability {
  std::map<Category, std::size_t> varied;
  std::map<Category, std::size_t> total;
  std::map<Category, Score> fraction;
};

// Share of questions whose parsed letters differ across repetitions.
Variability variability(const ModelScorecard& card);

// "21.4%": truncated to one decimal.
std::string format_percent(const Score& fraction, int decimals = 1);

struct SimilarityRate {
  std::vector<std::pair<std::string, Score>> ratios;  // qid -> mean(others) / ours
  std::size_t excluded = 0;                           // questions where ours scored 0
  Score mean;
  Score median;
};

SimilarityRate similarity_rate(const ModelScorecard& ours, const std::vector<ModelScorecard>& others);

}  // namespace rchat

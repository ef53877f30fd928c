#include <algorithm>
#include <cmath>
#include <set>

#include "rchat/benchmark.hpp"
#include "rchat/errors.hpp"

namespace rchat {

void check_same_questions(const std::vector<const ModelScorecard*>& cards) {
  if (cards.empty()) return;
  const auto* first = cards.front();
  const std::set<std::string> reference(first->question_order.begin(), first->question_order.end());
  for (const auto* c : cards) {
    const std::set<std::string> qids(c->question_order.begin(), c->question_order.end());
    if (qids != reference) {
      throw Error(ErrorCode::mismatched_question_sets,
                  c->model_name + " and " + first->model_name + " answered different questions");
    }
    if (c->repetitions != first->repetitions) {
      throw Error(ErrorCode::mismatched_question_sets,
                  c->model_name + " used " + std::to_string(c->repetitions) + " repetitions, " + first->model_name +
                      " used " + std::to_string(first->repetitions));
    }
    if (c->records.size() != first->records.size()) {
      throw Error(ErrorCode::mismatched_question_sets, c->model_name + " has a different number of attempts");
    }
  }
}

namespace {

std::vector<const ModelScorecard*> pointers(const std::vector<ModelScorecard>& a,
                                            const std::vector<ModelScorecard>& b = {}) {
  std::vector<const ModelScorecard*> out;
  for (const auto& c : a) out.push_back(&c);
  for (const auto& c : b) out.push_back(&c);
  return out;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string Table::to_csv() const {
  std::string out = csv_field(title);
  for (const auto& c : cols) out += "," + csv_field(c);
  out += '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += csv_field(rows[i]);
    for (const auto& cell : cells[i]) out += "," + csv_field(cell.text);
    out += '\n';
  }
  return out;
}

std::string Table::to_text() const {
  std::vector<std::size_t> widths(cols.size() + 1, 0);
  widths[0] = title.size();
  for (const auto& r : rows) widths[0] = std::max(widths[0], r.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    widths[j + 1] = cols[j].size();
    for (const auto& row : cells) widths[j + 1] = std::max(widths[j + 1], row[j].text.size());
  }
  auto left = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  std::string out = left(title, widths[0]);
  for (std::size_t j = 0; j < cols.size(); ++j) out += "  " + pad(cols[j], widths[j + 1]);
  out += '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += left(rows[i], widths[0]);
    for (std::size_t j = 0; j < cols.size(); ++j) out += "  " + pad(cells[i][j].text, widths[j + 1]);
    out += '\n';
  }
  return out;
}

DifferenceTables difference_tables(const std::vector<ModelScorecard>& ours, const std::vector<ModelScorecard>& others,
                                   PercentBasis basis) {
  check_same_questions(pointers(ours, others));
  DifferenceTables out;
  for (auto cat : {Category::knowledge, Category::code}) {
    const std::string name(to_string(cat));
    Table diff{name + " difference", {}, {}, {}};
    Table pct{name + " percentage", {}, {}, {}};
    Table scale{name + " percentage of scale", {}, {}, {}};
    for (const auto& o : others) {
      diff.cols.push_back(o.model_name);
      pct.cols.push_back(o.model_name);
      scale.cols.push_back(o.model_name);
    }
    for (const auto& a : ours) {
      diff.rows.push_back(a.model_name);
      pct.rows.push_back(a.model_name);
      scale.rows.push_back(a.model_name);
      std::int64_t keyed = 0;
      for (const auto& [qid, s] : a.per_question) {
        const auto it = std::find_if(a.records.begin(), a.records.end(),
                                     [&](const AttemptRecord& r) { return r.qid == qid; });
        if (it != a.records.end() && it->category == cat) ++keyed;
      }
      std::vector<TableCell> drow, prow, srow;
      for (const auto& b : others) {
        const Score ta = a.totals.at(cat);
        const Score tb = b.totals.at(cat);
        const Score d = ta - tb;
        drow.push_back({d, format_truncated(d, 2, true)});

        const Score pa = basis == PercentBasis::displayed_totals ? truncate_to(ta, 2) : ta;
        const Score pb = basis == PercentBasis::displayed_totals ? truncate_to(tb, 2) : tb;
        if (pb == Score(0)) {
          prow.push_back({std::nullopt, std::string(kUndefinedCell)});
        } else {
          const Score p = Score(100) * (pa - pb) / pb;
          prow.push_back({p, format_truncated(p, 2, true) + "%"});
        }
        if (keyed == 0) {
          srow.push_back({std::nullopt, std::string(kUndefinedCell)});
        } else {
          const Score p = Score(100) * d / Score(keyed);
          srow.push_back({p, format_truncated(p, 2, true) + "%"});
        }
      }
      diff.cells.push_back(std::move(drow));
      pct.cells.push_back(std::move(prow));
      scale.cells.push_back(std::move(srow));
    }
    out.difference.emplace(cat, std::move(diff));
    out.percentage.emplace(cat, std::move(pct));
    out.scale_percentage.emplace(cat, std::move(scale));
  }
  return out;
}

std::string_view to_string(PearsonEncoding e) {
  return e == PearsonEncoding::letter_ordinal ? "letter_ordinal" : "correctness";
}

std::optional<PearsonEncoding> parse_pearson_encoding(std::string_view s) {
  if (s == "correctness") return PearsonEncoding::correctness;
  if (s == "letter_ordinal") return PearsonEncoding::letter_ordinal;
  return std::nullopt;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::length_mismatch,
                "vectors of length " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  if (x.empty()) throw Error(ErrorCode::length_mismatch, "empty vectors");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0 && syy == 0) return x == y ? 1.0 : 0.0;
  if (sxx == 0 || syy == 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> attempt_vector(const ModelScorecard& card, PearsonEncoding encoding,
                                   const std::vector<std::string>& question_order) {
  std::map<std::pair<std::string, int>, const AttemptRecord*> by_key;
  for (const auto& r : card.records) by_key[{r.qid, r.repetition}] = &r;
  std::vector<double> out;
  for (const auto& qid : question_order) {
    for (int rep = 1; rep <= card.repetitions; ++rep) {
      const auto it = by_key.find({qid, rep});
      if (it == by_key.end()) {
        throw Error(ErrorCode::length_mismatch,
                    card.model_name + " has no attempt " + std::to_string(rep) + " for " + qid);
      }
      const auto& r = *it->second;
      if (encoding == PearsonEncoding::correctness) {
        out.push_back(r.is_correct ? 1.0 : 0.0);
      } else {
        out.push_back(r.parsed ? static_cast<double>(*r.parsed - 'A' + 1) : 0.0);
      }
    }
  }
  return out;
}

PearsonMatrix pearson_matrix(const std::vector<ModelScorecard>& cards, PearsonEncoding encoding) {
  if (cards.size() < 2) throw Error(ErrorCode::invalid_argument, "pearson matrix needs at least 2 scorecards");
  check_same_questions(pointers(cards));
  PearsonMatrix m;
  m.encoding = encoding;
  std::vector<std::vector<double>> vectors;
  for (const auto& c : cards) {
    m.models.push_back(c.model_name);
    vectors.push_back(attempt_vector(c, encoding, cards.front().question_order));
  }
  const auto n = cards.size();
  m.r.assign(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      m.r[i][j] = m.r[j][i] = pearson(vectors[i], vectors[j]);
    }
  }
  return m;
}

std::string PearsonMatrix::to_csv() const {
  std::string out = "model";
  for (const auto& name : models) out += "," + csv_field(name);
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < models.size(); ++i) {
    out += csv_field(models[i]);
    for (double v : r[i]) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Variability variability(const ModelScorecard& card) {
  if (card.repetitions < 2) throw Error(ErrorCode::invalid_argument, "variability needs at least 2 repetitions");
  Variability v;
  std::map<std::string, std::pair<Category, std::set<int>>> answers;  // qid -> distinct parsed values
  for (const auto& r : card.records) {
    auto& entry = answers[r.qid];
    entry.first = r.category;
    entry.second.insert(r.parsed ? *r.parsed : 0);
  }
  for (auto cat : {Category::knowledge, Category::code}) {
    v.varied[cat] = 0;
    v.total[cat] = 0;
  }
  for (const auto& [qid, entry] : answers) {
    ++v.total[entry.first];
    if (entry.second.size() > 1) ++v.varied[entry.first];
  }
  for (auto cat : {Category::knowledge, Category::code}) {
    v.fraction[cat] = v.total[cat] == 0 ? Score(0)
                                        : Score(static_cast<std::int64_t>(v.varied[cat]),
                                                static_cast<std::int64_t>(v.total[cat]));
  }
  return v;
}

std::string format_percent(const Score& fraction, int decimals) {
  return format_truncated(fraction * Score(100), decimals) + "%";
}

SimilarityRate similarity_rate(const ModelScorecard& ours, const std::vector<ModelScorecard>& others) {
  check_same_questions(pointers({ours}, others));
  SimilarityRate out;
  if (others.empty()) return out;
  for (const auto& qid : ours.question_order) {
    const auto it = ours.per_question.find(qid);
    if (it == ours.per_question.end()) continue;
    if (it->second == Score(0)) {
      ++out.excluded;
      continue;
    }
    Score sum(0);
    for (const auto& o : others) sum += o.per_question.at(qid);
    const Score mean = sum / Score(static_cast<std::int64_t>(others.size()));
    out.ratios.emplace_back(qid, mean / it->second);
  }
  if (out.ratios.empty()) return out;
  Score total(0);
  std::vector<Score> sorted;
  for (const auto& [qid, r] : out.ratios) {
    total += r;
    sorted.push_back(r);
  }
  out.mean = total / Score(static_cast<std::int64_t>(sorted.size()));
  std::sort(sorted.begin(), sorted.end());
  const auto mid = sorted.size() / 2;
  out.median = sorted.size() % 2 == 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / Score(2);
  return out;
}

}  // namespace rchat

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rchat/benchmark.hpp"
#include "rchat/errors.hpp"
#include "sheets.hpp"

using namespace rchat;

TEST(Tables, ReportedTotalsAndPercentages) {
  const auto ours = sheets::reported_sheet();
  const auto base = sheets::baseline_sheet();
  EXPECT_EQ(ours.totals.at(Category::knowledge), Score(56, 3));
  EXPECT_EQ(ours.totals.at(Category::code), Score(26, 3));
  EXPECT_EQ(format_truncated(ours.totals.at(Category::knowledge)), "18.66");
  EXPECT_EQ(format_truncated(ours.totals.at(Category::code)), "8.66");

  const auto t = difference_tables({ours}, {base});
  EXPECT_EQ(t.difference.at(Category::knowledge).cells[0][0].value, Score(-4, 3));
  EXPECT_EQ(t.difference.at(Category::knowledge).cells[0][0].text, "-1.33");
  EXPECT_EQ(t.difference.at(Category::code).cells[0][0].value, Score(11, 3));
  EXPECT_EQ(t.percentage.at(Category::knowledge).cells[0][0].text, "-6.70%");
  EXPECT_EQ(t.percentage.at(Category::knowledge).cells[0][0].value, Score(-67, 10));
  EXPECT_EQ(t.percentage.at(Category::code).cells[0][0].text, "+73.20%");
  EXPECT_EQ(t.percentage.at(Category::code).cells[0][0].value, Score(366, 5));

  const auto exact = difference_tables({ours}, {base}, PercentBasis::exact);
  EXPECT_EQ(exact.percentage.at(Category::code).cells[0][0].value, Score(220, 3));
  EXPECT_EQ(exact.percentage.at(Category::code).cells[0][0].text, "+73.33%");
}

TEST(Tables, ScalePercentage) {
  // A 0.67-point code gap on the 14-point scale is the 4.8% view.
  const auto qs = sheets::question_set();
  std::map<std::string, int> a, b;
  sheets::assign(a, qs, Category::code, {3, 3, 3, 2});
  sheets::assign(b, qs, Category::code, {3, 3, 3, 0});
  const auto t = difference_tables({sheets::sheet("a", qs, a)}, {sheets::sheet("b", qs, b)});
  EXPECT_EQ(t.scale_percentage.at(Category::code).cells[0][0].text, "+4.76%");
}

TEST(Tables, IdenticalAndUndefined) {
  const auto ours = sheets::reported_sheet("a");
  const auto twin = sheets::reported_sheet("b");
  const auto t = difference_tables({ours}, {twin});
  for (auto cat : {Category::knowledge, Category::code}) {
    EXPECT_EQ(t.difference.at(cat).cells[0][0].value, Score(0));
    EXPECT_EQ(t.difference.at(cat).cells[0][0].text, "0.00");
  }
  const auto zero = sheets::sheet("zero", sheets::question_set(), {});
  const auto z = difference_tables({ours}, {zero});
  EXPECT_FALSE(z.percentage.at(Category::code).cells[0][0].value.has_value());
  EXPECT_EQ(z.percentage.at(Category::code).cells[0][0].text, kUndefinedCell);
}

TEST(Tables, RowsColumnsAndRendering) {
  const auto t = difference_tables({sheets::reported_sheet("ours")},
                                   {sheets::baseline_sheet("gpt"), sheets::baseline_sheet("llama, big")});
  const auto& table = t.percentage.at(Category::code);
  EXPECT_EQ(table.rows, std::vector<std::string>{"ours"});
  EXPECT_EQ(table.cols, (std::vector<std::string>{"gpt", "llama, big"}));
  const auto csv = table.to_csv();
  EXPECT_NE(csv.find("\"llama, big\""), std::string::npos);
  EXPECT_NE(csv.find("+73.20%"), std::string::npos);
  EXPECT_NE(table.to_text().find("+73.20%"), std::string::npos);
}

TEST(Tables, MismatchedQuestionSets) {
  const auto a = sheets::sheet("a", sheets::question_set(20, 14), {});
  const auto b = sheets::sheet("b", sheets::question_set(20, 13), {});
  try {
    difference_tables({a}, {b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::mismatched_question_sets);
  }
  const auto two_reps = sheets::sheet("c", sheets::question_set(), {}, 2);
  EXPECT_THROW(check_same_questions({&a, &two_reps}), Error);
}

TEST(Pearson, ClosedForms) {
  std::vector<double> x, y;
  for (int i = 0; i < 12; ++i) {
    x.push_back(i % 2);
    y.push_back(1 - i % 2);
  }
  EXPECT_DOUBLE_EQ(pearson(x, x), 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, y), -1.0);
  EXPECT_EQ(pearson({1, 1, 1}, {1, 1, 1}), 1.0);
  EXPECT_EQ(pearson({1, 1, 1}, {2, 2, 2}), 0.0);
  EXPECT_EQ(pearson({1, 1, 1}, {1, 2, 3}), 0.0);
  EXPECT_THROW(pearson({1, 2}, {1, 2, 3}), Error);
}

TEST(Pearson, MatchesNaiveFormula) {
  oracle::Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const auto n = oracle::uniform(rng, 2, 60);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = static_cast<double>(oracle::uniform(rng, 0, 4));
    for (auto& v : y) v = static_cast<double>(oracle::uniform(rng, 0, 4));
    const double want = oracle::naive_pearson(x, y);
    if (std::isnan(want)) continue;
    const double r = pearson(x, y);
    EXPECT_NEAR(r, want, 1e-12);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Pearson, MatrixSymmetricUnitDiagonal) {
  const auto qs = sheets::question_set();
  std::vector<ModelScorecard> cards;
  std::mt19937_64 rng(8);
  for (int m = 0; m < 5; ++m) {
    std::map<std::string, int> counts;
    for (const auto& q : qs) counts[q.qid] = static_cast<int>(rng() % 4);
    cards.push_back(sheets::sheet("m" + std::to_string(m), qs, counts));
  }
  for (auto enc : {PearsonEncoding::correctness, PearsonEncoding::letter_ordinal}) {
    const auto pm = pearson_matrix(cards, enc);
    ASSERT_EQ(pm.r.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(pm.r[i][i], 1.0);
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_EQ(pm.r[i][j], pm.r[j][i]);
        EXPECT_GE(pm.r[i][j], -1.0);
        EXPECT_LE(pm.r[i][j], 1.0);
      }
    }
  }
  EXPECT_THROW(pearson_matrix({cards[0]}, PearsonEncoding::correctness), Error);
}

TEST(Pearson, PerfectModelsUnderLetterOrdinal) {
  const auto qs = sheets::question_set();
  std::map<std::string, int> all;
  for (const auto& q : qs) all[q.qid] = 3;
  const auto a = sheets::sheet("a", qs, all);
  const auto b = sheets::sheet("b", qs, all);
  EXPECT_DOUBLE_EQ(pearson_matrix({a, b}, PearsonEncoding::letter_ordinal).r[0][1], 1.0);
  // Both constant under correctness: the documented rule gives 1.
  EXPECT_EQ(pearson_matrix({a, b}, PearsonEncoding::correctness).r[0][1], 1.0);
  const auto v = attempt_vector(a, PearsonEncoding::letter_ordinal, a.question_order);
  EXPECT_EQ(v.size(), 34u * 3);
  EXPECT_EQ(v[0], 1.0);
  EXPECT_EQ(v[3], 2.0);
}

TEST(Variability, ReportedFractions) {
  const auto qs = sheets::question_set();
  std::map<std::string, int> c1, c2, same;
  sheets::assign(c1, qs, Category::code, sheets::code_26_thirds());
  sheets::assign(c2, qs, Category::code, sheets::code_half_varied());
  const auto v1 = variability(sheets::sheet("a", qs, c1));
  EXPECT_EQ(v1.fraction.at(Category::code), Score(3, 14));
  EXPECT_EQ(format_percent(v1.fraction.at(Category::code)), "21.4%");
  const auto v2 = variability(sheets::sheet("b", qs, c2));
  EXPECT_EQ(v2.fraction.at(Category::code), Score(1, 2));
  EXPECT_EQ(format_percent(v2.fraction.at(Category::code)), "50.0%");
  const auto v3 = variability(sheets::sheet("c", qs, same));
  EXPECT_EQ(v3.fraction.at(Category::code), Score(0));
  EXPECT_EQ(v3.fraction.at(Category::knowledge), Score(0));
  EXPECT_THROW(variability(sheets::sheet("d", qs, {}, 1)), Error);
}

TEST(Similarity, Ratios) {
  const auto qs = sheets::question_set(3, 0);
  const auto ours = sheets::sheet("ours", qs, {{"K1", 3}, {"K2", 3}, {"K3", 0}});
  const auto o1 = sheets::sheet("o1", qs, {{"K1", 3}, {"K2", 1}});
  const auto o2 = sheets::sheet("o2", qs, {{"K1", 1}, {"K2", 1}});
  const auto s = similarity_rate(ours, {o1, o2});
  ASSERT_EQ(s.ratios.size(), 2u);
  EXPECT_EQ(s.excluded, 1u);
  EXPECT_EQ(s.ratios[0].second, Score(2, 3));
  EXPECT_EQ(s.ratios[1].second, Score(1, 3));
  EXPECT_EQ(s.mean, Score(1, 2));
  EXPECT_EQ(s.median, Score(1, 2));

  const auto same = similarity_rate(ours, {ours, ours});
  EXPECT_EQ(same.mean, Score(1));
  for (const auto& [qid, r] : same.ratios) EXPECT_EQ(r, Score(1));
}

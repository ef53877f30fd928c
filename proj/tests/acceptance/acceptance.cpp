// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "rchat/benchmark.hpp"
#include "rchat/cli.hpp"
#include "rchat/corpus.hpp"
#include "rchat/embedding_index.hpp"
#include "rchat/errors.hpp"
#include "rchat/leiden.hpp"
#include "rchat/service.hpp"
#include "rchat/text.hpp"
#include "sheets.hpp"
#include "support.hpp"

using namespace rchat;
using json = nlohmann::json;
using rchat::testing::TempDir;

namespace {

// Thrown by `need` with the first violated condition.
struct Violation {
  std::string what;
};

void need(bool ok, const std::string& what) {
  if (!ok) throw Violation{what};
}

struct Criterion {
  std::string name;
  double limit_seconds;
  std::function<void()> check;
};

WeightedGraph to_weighted(const oracle::Graph& g) {
  WeightedGraph wg(g.n);
  for (const auto& e : g.edges) wg.add_edge(e.u, e.v, e.w);
  return wg;
}

std::vector<double> gaussian(oracle::Rng& rng, std::size_t d, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<double> v(d);
  for (auto& x : v) x = n(rng);
  return v;
}

// ---------------------------------------------------------------------------

void retrieval_oracle() {
  constexpr std::size_t kIndexes = 50, kVectors = 1000, kDim = 64, kK = 5, kQueries = 20;
  constexpr double kThreshold = 0.75;
  oracle::Rng rng(7001);
  std::size_t nonempty = 0;
  for (std::size_t t = 0; t < kIndexes; ++t) {
    std::vector<std::pair<std::string, std::vector<double>>> raw;
    std::vector<IndexedItem> items;
    for (std::size_t i = 0; i < kVectors; ++i) {
      auto v = gaussian(rng, kDim);
      const auto id = "v" + std::to_string(oracle::uniform(rng, 0, 1u << 30)) + "_" + std::to_string(i);
      raw.emplace_back(id, v);
      items.push_back({id, "", std::move(v), 0.0});
    }
    const EmbeddingIndex index(std::move(items));
    for (std::size_t q = 0; q < kQueries; ++q) {
      // Half the queries sit near stored vectors so the threshold admits hits.
      auto query = gaussian(rng, kDim);
      if (q % 2 == 0) {
        const auto& base = raw[oracle::uniform(rng, 0, kVectors - 1)].second;
        const double noise = oracle::uniform_real(rng, 0.1, 0.9);
        for (std::size_t j = 0; j < kDim; ++j) query[j] = base[j] + noise * query[j];
      }
      const auto got = index.top_k(query, kK, kThreshold);
      const auto want = oracle::full_scan_top_k(raw, query, kK, kThreshold);
      need(got.size() == want.size(), "hit count differs from full scan");
      for (std::size_t i = 0; i < got.size(); ++i) {
        need(got[i].item_id == want[i].id, "ranking differs from full scan at rank " + std::to_string(i));
        need(got[i].score == want[i].score || std::abs(got[i].score - want[i].score) < 1e-12, "score differs");
      }
      nonempty += got.empty() ? 0 : 1;
    }
  }
  need(nonempty > 0, "no query passed the threshold");
}

void modularity_oracle() {
  oracle::Rng rng(7002);
  for (int i = 0; i < 100; ++i) {
    const auto n = oracle::uniform(rng, 1, 12);
    const auto g = oracle::random_graph(rng, n, oracle::uniform_real(rng, 0.1, 0.9), i % 2 == 0, i % 3 == 0);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = oracle::uniform(rng, 0, n - 1);
    const double gamma = i % 4 == 0 ? 1.0 : oracle::uniform_real(rng, 0.2, 2.5);
    const double got = modularity(to_weighted(g), labels, gamma);
    const double want = oracle::naive_modularity(g, labels, gamma);
    need(std::abs(got - want) <= 1e-12, "graph " + std::to_string(i) + ": " + std::to_string(got) + " vs " +
                                            std::to_string(want));
  }
}

void leiden_exactness() {
  oracle::Graph cliques;
  cliques.n = 10;
  for (std::size_t base : {0u, 5u}) {
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = i + 1; j < 5; ++j) cliques.edges.push_back({base + i, base + j, 1.0});
    }
  }
  cliques.edges.push_back({4, 5, 1.0});
  const std::vector<std::size_t> two = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const auto [best_q, best_p] = oracle::exhaustive_optimum(cliques, 1.0);
  need(oracle::same_grouping(best_p, two), "exhaustive optimum is not the two-clique split");
  const auto r = leiden(to_weighted(cliques), 1.0, 42, 4);
  need(oracle::same_grouping(r.levels.at(0), two), "Leiden did not return the two cliques");
  need(std::abs(modularity(to_weighted(cliques), r.levels[0], 1.0) - best_q) < 1e-12, "quality below optimum");

  oracle::Rng rng(7003);
  int checked = 0;
  while (checked < 50) {
    const auto n = oracle::uniform(rng, 2, 8);
    const auto g = oracle::random_graph(rng, n, oracle::uniform_real(rng, 0.2, 0.8), checked % 2 == 0);
    if (g.edges.empty()) continue;
    const auto wg = to_weighted(g);
    const auto res = leiden(wg, 1.0, 500 + checked, 4);
    const double q = modularity(wg, res.levels.at(0), 1.0);
    need(q <= oracle::exhaustive_optimum(g, 1.0).first + 1e-12, "quality above exhaustive optimum");
    for (const auto& level : res.levels) need(oracle::communities_connected(g, level), "disconnected community");
    ++checked;
  }
}

void leiden_determinism() {
  oracle::Rng rng(7004);
  for (int run = 0; run < 20; ++run) {
    const auto g = to_weighted(oracle::random_graph(rng, oracle::uniform(rng, 20, 80), 0.08, run % 2 == 0));
    const auto seed = static_cast<std::uint64_t>(run * 31 + 5);
    const auto a = leiden(g, 1.0, seed, 4);
    const auto b = leiden(g, 1.0, seed, 4);
    need(a.levels == b.levels, "hierarchy differs for seed " + std::to_string(seed));
    need(a.quality_log.size() == b.quality_log.size(), "quality log length differs");
    for (std::size_t i = 0; i < a.quality_log.size(); ++i) {
      need(a.quality_log[i].quality == b.quality_log[i].quality, "quality log differs");
      if (i > 0) {
        need(a.quality_log[i].quality >= a.quality_log[i - 1].quality - 1e-12,
             "quality decreased at phase " + a.quality_log[i].phase);
      }
    }
  }
}

void chunker_properties() {
  oracle::Rng rng(7005);
  for (int i = 0; i < 1000; ++i) {
    const auto text = oracle::random_utf8(rng, oracle::uniform(rng, 0, 400));
    const auto size = oracle::uniform(rng, 1, 80);
    const auto overlap = oracle::uniform(rng, 0, size - 1);
    const SourceDocument doc{"d.md", DocumentKind::documentation, text, text.size()};
    std::vector<oracle::ChunkView> views;
    for (const auto& c : chunk_document(doc, size, overlap)) views.push_back({c.text, c.start, c.end});
    const auto failure = oracle::check_chunking(text, size, overlap, views);
    need(!failure, "case " + std::to_string(i) + ": " + failure.value_or(""));
  }
}

void pipeline_golden() {
  TempDir a, b;
  auto mock_a = rchat::testing::fixture_mock();
  auto mock_b = rchat::testing::fixture_mock();
  rchat::testing::build_fixture(a.path(), *mock_a);
  rchat::testing::build_fixture(b.path(), *mock_b);
  const auto golden = rchat::testing::fixtures() / "golden";
  for (const char* f : {"entities.json", "relationships.json", "communities.json"}) {
    const auto first = text::read_file((a / f).string());
    need(first == text::read_file((b / f).string()), std::string(f) + " differs between runs");
    need(first == text::read_file((golden / f).string()), std::string(f) + " differs from the golden copy");
  }
  const auto state = rchat::testing::fixture_state(a.path(), mock_a);
  const auto answer = state->engine->ask("What is the spectral radius?", {}, ChatMode::local);
  need(answer.kind == OutcomeKind::answer, "local search gave no answer");
  bool chunk = false, entity = false;
  for (const auto& t : answer.turn.trace) {
    chunk |= t.kind == SourceKind::chunk && t.id == "esn.md#0..610";
    entity |= t.kind == SourceKind::entity && t.id == "SPECTRAL RADIUS";
  }
  need(chunk, "trace lacks chunk esn.md#0..610");
  need(entity, "trace lacks entity SPECTRAL RADIUS");
}

void scoring_reproduction() {
  const auto ours = sheets::reported_sheet();
  const auto base = sheets::baseline_sheet();
  need(ours.totals.at(Category::knowledge) == Score(56, 3), "knowledge total is not 56/3");
  need(ours.totals.at(Category::code) == Score(26, 3), "code total is not 26/3");
  need(format_truncated(ours.totals.at(Category::knowledge)) == "18.66", "knowledge renders wrong");
  need(format_truncated(ours.totals.at(Category::code)) == "8.66", "code renders wrong");
  const auto t = difference_tables({ours}, {base});
  const auto& k = t.percentage.at(Category::knowledge).cells.at(0).at(0);
  const auto& c = t.percentage.at(Category::code).cells.at(0).at(0);
  need(k.value == Score(-67, 10) && k.text == "-6.70%", "knowledge cell is " + k.text);
  need(c.value == Score(366, 5) && c.text == "+73.20%", "code cell is " + c.text);
}

void variability_metric() {
  const auto qs = sheets::question_set();
  std::map<std::string, int> third, half;
  sheets::assign(third, qs, Category::code, sheets::code_26_thirds());
  sheets::assign(half, qs, Category::code, sheets::code_half_varied());
  const auto a = variability(sheets::sheet("a", qs, third)).fraction.at(Category::code);
  const auto b = variability(sheets::sheet("b", qs, half)).fraction.at(Category::code);
  need(a == Score(3, 14) && format_percent(a) == "21.4%", "3/14 renders " + format_percent(a));
  need(b == Score(1, 2) && format_percent(b) == "50.0%", "7/14 renders " + format_percent(b));
}

void pearson_properties() {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back((i * 7) % 4);
    y.push_back(3.0 - (i * 7) % 4);
  }
  need(pearson(x, x) == 1.0, "identical vectors give " + std::to_string(pearson(x, x)));
  need(pearson(x, y) == -1.0, "anti-correlated vectors give " + std::to_string(pearson(x, y)));

  const auto qs = sheets::question_set();
  std::vector<ModelScorecard> cards;
  oracle::Rng rng(7006);
  for (int m = 0; m < 4; ++m) {
    std::map<std::string, int> counts;
    for (const auto& q : qs) counts[q.qid] = static_cast<int>(oracle::uniform(rng, 0, 3));
    cards.push_back(sheets::sheet("m" + std::to_string(m), qs, counts));
  }
  std::map<std::string, int> all;
  for (const auto& q : qs) all[q.qid] = 3;
  cards.push_back(sheets::sheet("perfect1", qs, all));
  cards.push_back(sheets::sheet("perfect2", qs, all));
  for (auto enc : {PearsonEncoding::correctness, PearsonEncoding::letter_ordinal}) {
    const auto m = pearson_matrix(cards, enc);
    for (std::size_t i = 0; i < cards.size(); ++i) {
      need(m.r[i][i] == 1.0, "diagonal is not 1");
      for (std::size_t j = 0; j < cards.size(); ++j) need(m.r[i][j] == m.r[j][i], "matrix is not symmetric");
    }
  }
  const auto lo = pearson_matrix(cards, PearsonEncoding::letter_ordinal);
  need(std::abs(lo.r[4][5] - 1.0) < 1e-12, "perfect models give " + std::to_string(lo.r[4][5]));
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err, [](const std::string&) { return std::nullopt; });
  return {code, out.str(), err.str()};
}

void bench_end_to_end() {
  TempDir dir;
  const auto dataset = rchat::testing::data_dir() / "benchmark" / "mcq.json";
  const auto questions = load_benchmark(dataset);

  // Always-key mock: a rule per question keyed on its stem, ahead of the fixture rules.
  auto script = json::parse(text::read_file((rchat::testing::fixtures() / "mock_script.json").string()));
  json rules = json::array();
  for (const auto& q : questions) {
    rules.push_back({{"contains", json::array({"---Question---", std::string(text::trim(q.stem))})},
                     {"reply", std::string(1, q.correct.value_or('A'))}});
  }
  for (const auto& r : script["rules"]) rules.push_back(r);
  script["rules"] = rules;
  const auto script_path = dir / "always_key.json";
  text::write_file(script_path.string(), script.dump(2));

  const std::vector<std::string> base = {"rchat", "--config", (rchat::testing::fixtures() / "config.toml").string(),
                                         "--out", dir.path().string(), "--mock-script", script_path.string()};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  need(cli_run(with({"ingest", (rchat::testing::fixtures() / "corpus").string()})).code == 0, "ingest failed");
  need(cli_run(with({"build-graph"})).code == 0, "build-graph failed");

  const auto plain = cli_run(with({"bench", "run", "--target", "self", "--dataset", dataset.string(), "--name",
                                   "plain"}));
  need(plain.code == 0, "bench run failed: " + plain.err);
  need(plain.out.find("plain knowledge: 19.00 / 19") != std::string::npos, "unkeyed run printed " + plain.out);
  need(plain.err.find("warning: ") != std::string::npos && plain.err.find("K2") != std::string::npos,
       "no warning for the unkeyed question");

  const auto keyed = cli_run(with({"bench", "run", "--target", "self", "--dataset", dataset.string(), "--name",
                                   "keyed", "--key", "K2=A"}));
  need(keyed.code == 0, "bench run failed: " + keyed.err);
  need(keyed.out.find("keyed knowledge: 20.00 / 20") != std::string::npos, "knowledge total: " + keyed.out);
  need(keyed.out.find("keyed code: 14.00 / 14") != std::string::npos, "code total: " + keyed.out);
}

void service_contract() {
  TempDir kb, work;
  auto mock = rchat::testing::fixture_mock();
  rchat::testing::build_fixture(kb.path(), *mock);
  ServiceOptions opts;
  opts.usage_log = work / "usage.jsonl";
  opts.rate_per_second = 0;
  const auto dir = kb.path();
  {
    ChatService service(opts, [dir, mock] { return rchat::testing::fixture_state(dir, mock); }, mock);
    need(service.reload(), "reload failed");
    const auto first = service.chat(json{{"question", "What is the spectral radius?"}}.dump(), "127.0.0.1");
    need(first.status == 200, "chat status " + std::to_string(first.status));
    const auto a = json::parse(first.body);
    need(a.at("outcome") == "answer" && !a.at("trace").empty(), "first turn has no traced answer");
    const auto sid = a.at("session_id").get<std::string>();
    const auto second = service.chat(json{{"question", "What does the readout do?"}, {"session_id", sid}}.dump(),
                                     "127.0.0.1");
    need(second.status == 200 && json::parse(second.body).at("session_id") == sid, "session not continued");
    const auto prompt = mock->chat_log().back().messages.back().content;
    need(prompt.find("User: What is the spectral radius?") != std::string::npos, "history missing from prompt");
    need(prompt.find("Assistant: The spectral radius scales") != std::string::npos, "answer missing from prompt");
    need(json::parse(service.session(sid).body).at("turns").size() == 4, "session does not hold 4 turns");
  }

  const auto intact = text::read_file(opts.usage_log.string());
  std::size_t lines = 0;
  for (char ch : intact) lines += ch == '\n' ? 1 : 0;
  need(lines == 2, "expected 2 usage events, got " + std::to_string(lines));
  const std::string partial = "{\"session_id\":\"x\",\"quest";
  text::write_file(opts.usage_log.string(), intact + partial);
  {
    ChatService service(opts, [dir, mock] { return rchat::testing::fixture_state(dir, mock); }, mock);
    need(service.usage_log().recovered_bytes() == partial.size(), "partial line not recovered");
    need(text::read_file(opts.usage_log.string()) == intact, "intact prefix changed");
    need(service.reload(), "reload failed");
    need(service.chat(json{{"question", "What is the readout?"}}.dump(), "c").status == 200, "chat after recovery");
  }
  const auto after = text::read_file(opts.usage_log.string());
  need(after.rfind(intact, 0) == 0, "log is not append-only");
  for (const auto& l : text::split(after, "\n")) {
    if (!l.empty()) need(!json::parse(l, nullptr, false).is_discarded(), "corrupt line in log");
  }
  need(text::read_file(opts.usage_log.string() + ".quarantine") == partial + "\n", "quarantine content");
}

}  // namespace

int main() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("acceptance"));
  const std::vector<Criterion> criteria = {
      {"retrieval oracle", 5, retrieval_oracle},
      {"modularity oracle", 5, modularity_oracle},
      {"leiden exactness", 60, leiden_exactness},
      {"leiden determinism and monotonicity", 30, leiden_determinism},
      {"chunker properties", 5, chunker_properties},
      {"pipeline golden snapshot", 10, pipeline_golden},
      {"scoring arithmetic", 1, scoring_reproduction},
      {"variability metric", 1, variability_metric},
      {"pearson properties", 1, pearson_properties},
      {"benchmark end to end", 30, bench_end_to_end},
      {"service contract", 10, service_contract},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string problem;
    try {
      c.check();
    } catch (const Violation& v) {
      problem = v.what;
    } catch (const std::exception& e) {
      problem = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (problem.empty() && secs >= c.limit_seconds) {
      problem = "took " + std::to_string(secs) + " s, limit " + std::to_string(c.limit_seconds) + " s";
    }
    char timing[32];
    std::snprintf(timing, sizeof(timing), "%.2fs", secs);
    if (problem.empty()) {
      std::cout << "PASS " << c.name << " (" << timing << ")\n";
    } else {
      ++failed;
      std::cout << "FAIL " << c.name << " (" << timing << "): " << problem << "\n";
    }
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed;
}

#include "rchat/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <thread>

#include "rchat/benchmark.hpp"
#include "rchat/errors.hpp"
#include "rchat/pipeline.hpp"
#include "rchat/service.hpp"
#include "rchat/text.hpp"

namespace fs = std::filesystem;

namespace rchat::cli {

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void use_stderr_logger(bool verbose) {
  auto logger = spdlog::get("rchat");
  if (!logger) logger = spdlog::stderr_color_mt("rchat");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
}

struct Globals {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::string> mock_script;
  bool verbose = false;
};

struct IngestArgs {
  std::optional<std::string> corpus;
  std::optional<std::string> manifest;
  std::optional<std::size_t> size;
  std::optional<std::size_t> overlap;
};

struct BuildArgs {
  std::optional<int> gleanings;
  std::optional<double> resolution;
  std::optional<std::uint64_t> seed;
  std::optional<int> levels;
};

struct QueryArgs {
  std::string question;
  std::string mode = "local";
};

struct BenchRunArgs {
  std::optional<std::string> dataset;
  std::string target;
  std::optional<int> reps;
  std::optional<double> temp;
  std::optional<std::string> name;
  std::vector<std::string> keys;
};

struct BenchReportArgs {
  std::vector<std::string> results;
  std::vector<std::string> ours;
  std::string basis = "displayed";
};

struct ServeArgs {
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<std::string> static_dir;
};

// Everything a command needs once flags and config are merged.
struct Context {
  AppConfig cfg;
  fs::path out;
  std::ostream& out_stream;
  std::ostream& err_stream;

  std::shared_ptr<Provider> provider() const { return std::shared_ptr<Provider>(make_provider(cfg.provider)); }
  PromptSet prompts() const {
    return cfg.prompts_dir.empty() ? PromptSet::defaults() : PromptSet::load(cfg.prompts_dir);
  }
  fs::path under_out(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : out / path;
  }
};

int exit_for(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::answer: return kOk;
    case OutcomeKind::provider_failure: return kProviderFailure;
    default: return kOutcome;
  }
}

int exit_for(const Error& e) {
  if (is_provider_error(e.code())) return kProviderFailure;
  switch (e.code()) {
    case ErrorCode::invalid_argument:
    case ErrorCode::config_error:
    case ErrorCode::invalid_chunk_params: return kUsage;
    default: return kOutcome;
  }
}

int cmd_ingest(const Context& ctx, const IngestArgs& a) {
  IngestOptions opts;
  opts.corpus_root = a.corpus ? *a.corpus : ctx.cfg.corpus.root;
  if (opts.corpus_root.empty()) throw Error(ErrorCode::invalid_argument, "no corpus directory given");
  if (a.manifest) {
    opts.manifest = *a.manifest;
  } else if (!ctx.cfg.corpus.manifest.empty()) {
    opts.manifest = ctx.cfg.corpus.manifest;
  }
  opts.chunking = ctx.cfg.corpus.chunking;
  if (a.size) opts.chunking.size = *a.size;
  if (a.overlap) opts.chunking.overlap = *a.overlap;
  opts.code_patterns = ctx.cfg.corpus.code_patterns;
  validate(opts.chunking);

  fs::create_directories(ctx.out);
  auto provider = ctx.provider();
  const auto s = run_ingest(opts, *provider, ctx.out);
  ctx.out_stream << "ingested " << s.documents << " documents into " << s.chunks << " chunks";
  if (s.qa_pairs > 0) ctx.out_stream << " (" << s.qa_pairs << " Q&A pairs)";
  ctx.out_stream << "\n";
  return kOk;
}

int cmd_build(const Context& ctx, const BuildArgs& a) {
  BuildOptions opts;
  opts.extraction = ctx.cfg.graph.extraction;
  opts.merge = ctx.cfg.graph.merge;
  opts.leiden = ctx.cfg.graph.leiden;
  opts.summarize = ctx.cfg.graph.summarize;
  opts.max_in_flight = ctx.cfg.provider.http.max_in_flight;
  if (a.gleanings) opts.extraction.max_gleanings = *a.gleanings;
  if (a.resolution) opts.leiden.resolution = *a.resolution;
  if (a.seed) opts.leiden.seed = *a.seed;
  if (a.levels) opts.leiden.max_levels = *a.levels;
  if (opts.extraction.max_gleanings < 0) throw Error(ErrorCode::invalid_argument, "--gleanings must be >= 0");

  auto provider = ctx.provider();
  const auto s = run_build_graph(ctx.out, *provider, ctx.prompts(), opts);
  ctx.out_stream << "graph: " << s.entities << " entities, " << s.relationships << " relationships, "
                 << s.communities << " communities over " << s.levels << " levels, " << s.reports << " reports\n";
  for (const auto& f : s.failures) {
    ctx.err_stream << "report failed for community " << f.community_id << ": " << f.error << "\n";
  }
  return kOk;
}

int cmd_query(const Context& ctx, const QueryArgs& a) {
  const auto mode = parse_chat_mode(a.mode);
  if (!mode) throw Error(ErrorCode::invalid_argument, "unknown mode " + a.mode);
  const auto state = load_engine_state(ctx.out, ctx.provider(), ctx.prompts(), ctx.cfg.query);
  const auto outcome = state->engine->ask(a.question, {}, *mode);
  for (const auto& w : outcome.warnings) ctx.err_stream << "warning: " << w << "\n";
  ctx.err_stream << "mode: " << to_string(outcome.mode) << " (" << (outcome.query_kind == QueryKind::code ? "code" : "knowledge") << ")\n";
  for (const auto& t : outcome.turn.trace) {
    ctx.err_stream << "trace: " << to_string(t.kind) << " " << t.id << " " << t.score << "\n";
  }
  if (outcome.kind != OutcomeKind::answer) {
    ctx.err_stream << to_string(outcome.kind);
    if (!outcome.detail.empty()) ctx.err_stream << ": " << outcome.detail;
    ctx.err_stream << "\n";
  } else {
    ctx.out_stream << outcome.turn.content << "\n";
  }
  return exit_for(outcome.kind);
}

std::map<std::string, char> parse_key_overrides(const std::vector<std::string>& specs) {
  std::map<std::string, char> keys;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq + 2 != s.size()) {
      throw Error(ErrorCode::invalid_argument, "--key expects QID=LETTER, got " + s);
    }
    keys[s.substr(0, eq)] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[eq + 1])));
  }
  return keys;
}

void print_totals(std::ostream& os, const ModelScorecard& card, const std::vector<McqQuestion>& questions) {
  std::map<Category, std::size_t> keyed;
  for (const auto& q : questions) {
    if (q.correct) ++keyed[q.category];
  }
  for (const auto cat : {Category::knowledge, Category::code}) {
    const auto it = card.totals.find(cat);
    const Score total = it == card.totals.end() ? Score(0) : it->second;
    os << card.model_name << " " << to_string(cat) << ": " << format_truncated(total) << " / " << keyed[cat] << "\n";
  }
}

int cmd_bench_run(const Context& ctx, const BenchRunArgs& a) {
  auto questions = load_benchmark(a.dataset ? *a.dataset : ctx.cfg.bench.dataset);
  apply_key_overrides(questions, parse_key_overrides(a.keys));

  RunOptions opts;
  opts.repetitions = a.reps.value_or(ctx.cfg.bench.repetitions);
  opts.temperature = a.temp.value_or(ctx.cfg.bench.temperature);
  opts.max_in_flight = ctx.cfg.provider.http.max_in_flight;
  if (opts.repetitions < 1) throw Error(ErrorCode::invalid_argument, "--reps must be >= 1");

  auto provider = ctx.provider();
  ModelScorecard card;
  if (a.target == "self") {
    const auto state = load_engine_state(ctx.out, provider, ctx.prompts(), ctx.cfg.query);
    card = run_model_benchmark(a.name.value_or("self"), questions, engine_answerer(*state->engine), opts);
  } else {
    const auto& model = ctx.cfg.provider.http.chat_model_id;
    const auto name = a.name.value_or(ctx.cfg.provider.kind == "mock" || model.empty() ? provider->name() : model);
    card = run_model_benchmark(name, questions, provider_answerer(*provider, opts), opts);
  }
  const auto dir = ctx.out / "bench" / card.model_name;
  write_results(card, dir);
  for (const auto& w : card.warnings) ctx.err_stream << "warning: " << w << "\n";
  print_totals(ctx.out_stream, card, questions);
  ctx.out_stream << "results: " << dir.string() << "\n";
  return kOk;
}

int cmd_bench_report(const Context& ctx, const BenchReportArgs& a) {
  std::vector<ModelScorecard> cards;
  for (const auto& r : a.results) cards.push_back(load_results(r));
  std::vector<const ModelScorecard*> ptrs;
  for (const auto& c : cards) ptrs.push_back(&c);
  check_same_questions(ptrs);

  PercentBasis basis = PercentBasis::displayed_totals;
  if (a.basis == "exact") {
    basis = PercentBasis::exact;
  } else if (a.basis != "displayed") {
    throw Error(ErrorCode::invalid_argument, "--basis must be displayed or exact");
  }

  std::set<std::string> ours_names(a.ours.begin(), a.ours.end());
  if (ours_names.empty()) ours_names.insert(cards.front().model_name);
  std::vector<ModelScorecard> ours;
  std::vector<ModelScorecard> others;
  for (const auto& c : cards) (ours_names.contains(c.model_name) ? ours : others).push_back(c);
  if (ours.empty()) throw Error(ErrorCode::invalid_argument, "--ours names no loaded result");

  const auto dir = ctx.out / "report";
  fs::create_directories(dir);
  auto emit = [&](const std::string& file, const std::string& csv, const std::string& text_form) {
    text::write_file((dir / file).string(), csv);
    ctx.out_stream << text_form << "\n";
  };

  if (!others.empty()) {
    const auto tables = difference_tables(ours, others, basis);
    for (const auto cat : {Category::knowledge, Category::code}) {
      const std::string suffix = "_" + std::string(to_string(cat)) + ".csv";
      emit("difference" + suffix, tables.difference.at(cat).to_csv(), tables.difference.at(cat).to_text());
      emit("percentage" + suffix, tables.percentage.at(cat).to_csv(), tables.percentage.at(cat).to_text());
      emit("scale_percentage" + suffix, tables.scale_percentage.at(cat).to_csv(),
           tables.scale_percentage.at(cat).to_text());
    }
    for (const auto& o : ours) {
      const auto sim = similarity_rate(o, others);
      ctx.out_stream << "similarity " << o.model_name << ": mean " << format_truncated(sim.mean * Score(100))
                     << "%, median " << format_truncated(sim.median * Score(100)) << "% over " << sim.ratios.size()
                     << " questions (" << sim.excluded << " excluded)\n";
    }
  }

  if (cards.size() >= 2) {
    for (const auto enc : {PearsonEncoding::correctness, PearsonEncoding::letter_ordinal}) {
      const auto m = pearson_matrix(cards, enc);
      const auto csv = m.to_csv();
      emit("pearson_" + std::string(to_string(enc)) + ".csv", csv, "Pearson (" + std::string(to_string(enc)) + ")\n" + csv);
    }
  }

  std::string var_csv = "model,category,varied,total,percent\n";
  for (const auto& c : cards) {
    if (c.repetitions < 2) continue;
    const auto v = variability(c);
    for (const auto& [cat, total] : v.total) {
      var_csv += c.model_name + "," + std::string(to_string(cat)) + "," + std::to_string(v.varied.at(cat)) + "," +
                 std::to_string(total) + "," + format_percent(v.fraction.at(cat)) + "\n";
    }
  }
  emit("variability.csv", var_csv, "Variability\n" + var_csv);
  return kOk;
}

int cmd_prompts_export(const Context& ctx) {
  const auto dir = ctx.out / "prompts";
  ctx.prompts().write(dir);
  ctx.out_stream << "prompts written to " << dir.string() << "\n";
  return kOk;
}

int cmd_serve(const Context& ctx, const ServeArgs& a) {
  const auto& svc = ctx.cfg.service;
  ServiceOptions opts;
  opts.sessions_db = svc.sessions_db == ":memory:" ? svc.sessions_db : ctx.under_out(svc.sessions_db).string();
  opts.session_ttl = std::chrono::seconds(static_cast<std::int64_t>(svc.session_ttl_hours * 3600.0));
  opts.usage_log = ctx.under_out(svc.usage_log);
  opts.static_dir = a.static_dir.value_or(svc.static_dir);
  opts.rate_per_second = svc.rate_per_second;
  opts.rate_burst = svc.rate_burst;
  opts.artifacts = ctx.out;
  fs::create_directories(ctx.out);

  auto provider = ctx.provider();
  const auto prompts = ctx.prompts();
  const auto query = ctx.cfg.query;
  const auto out = ctx.out;
  ChatService service(
      opts, [=] { return load_engine_state(out, provider, prompts, query); }, provider);
  std::string error;
  if (!service.reload(&error)) spdlog::warn("starting without a knowledge base: {}", error);

  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const int port = service.start(a.host.value_or(svc.host), a.port.value_or(svc.port));
  ctx.out_stream << "listening on port " << port << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  service.stop();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Graph-based retrieval chat over a documentation corpus"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.3.0");

  Globals g;
  app.add_option("--config", g.config, "TOML configuration file");
  app.add_option("--out", g.out, "output directory for every artifact");
  app.add_option("--mock-script", g.mock_script, "use the scripted mock provider with this JSON script");
  app.add_flag("-v,--verbose", g.verbose, "debug logging");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "chunk and embed a corpus");
  c_ingest->add_option("corpus_dir", ingest.corpus, "corpus root");
  c_ingest->add_option("--manifest", ingest.manifest, "file listing documents to include");
  c_ingest->add_option("--size", ingest.size, "chunk size in bytes");
  c_ingest->add_option("--overlap", ingest.overlap, "chunk overlap in bytes");

  BuildArgs build;
  auto* c_build = app.add_subcommand("build-graph", "extract the knowledge graph, communities and reports");
  c_build->add_option("--gleanings", build.gleanings, "maximum gleaning rounds per chunk");
  c_build->add_option("--resolution", build.resolution, "modularity resolution");
  c_build->add_option("--seed", build.seed, "community detection seed");
  c_build->add_option("--levels", build.levels, "maximum hierarchy levels");

  QueryArgs query;
  auto* c_query = app.add_subcommand("query", "answer one question");
  c_query->add_option("question", query.question, "the question")->required();
  c_query->add_option("--mode", query.mode, "faq, rag, local or global")
      ->check(CLI::IsMember({"faq", "rag", "local", "global"}));

  auto* c_bench = app.add_subcommand("bench", "multiple-choice benchmark");
  c_bench->require_subcommand(1);
  BenchRunArgs bench_run;
  auto* c_run = c_bench->add_subcommand("run", "answer every question and score the attempts");
  c_run->add_option("--dataset", bench_run.dataset, "benchmark JSON");
  c_run->add_option("--target", bench_run.target, "provider or self")
      ->required()
      ->check(CLI::IsMember({"provider", "self"}));
  c_run->add_option("--reps", bench_run.reps, "repetitions per question");
  c_run->add_option("--temp", bench_run.temp, "sampling temperature");
  c_run->add_option("--name", bench_run.name, "model name recorded in the results");
  c_run->add_option("--key", bench_run.keys, "answer key override, QID=LETTER");
  BenchReportArgs bench_report;
  auto* c_report = c_bench->add_subcommand("report", "compare recorded results");
  c_report->add_option("--results", bench_report.results, "result directories or attempts.jsonl files")
      ->required()
      ->expected(1, -1);
  c_report->add_option("--ours", bench_report.ours, "models compared against the rest (default: first result)");
  c_report->add_option("--basis", bench_report.basis, "percentage basis: displayed or exact");

  auto* c_prompts = app.add_subcommand("prompts", "prompt templates");
  c_prompts->require_subcommand(1);
  auto* c_export = c_prompts->add_subcommand("export", "write the active templates under <out>/prompts");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "run the HTTP chat service");
  c_serve->add_option("--host", serve.host, "listen address");
  c_serve->add_option("--port", serve.port, "listen port (0 picks a free one)");
  c_serve->add_option("--static", serve.static_dir, "directory served at /");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  use_stderr_logger(g.verbose);
  try {
    auto cfg = load_config(g.config ? std::optional<fs::path>(*g.config) : std::nullopt, env);
    if (g.out) cfg.out = *g.out;
    if (g.mock_script) {
      cfg.provider.kind = "mock";
      cfg.provider.mock_script = *g.mock_script;
    }
    const Context ctx{cfg, fs::path(cfg.out), out, err};

    if (c_ingest->parsed()) return cmd_ingest(ctx, ingest);
    if (c_build->parsed()) return cmd_build(ctx, build);
    if (c_query->parsed()) return cmd_query(ctx, query);
    if (c_run->parsed()) return cmd_bench_run(ctx, bench_run);
    if (c_report->parsed()) return cmd_bench_report(ctx, bench_report);
    if (c_export->parsed()) return cmd_prompts_export(ctx);
    if (c_serve->parsed()) return cmd_serve(ctx, serve);
    err << app.help();
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace rchat::cli

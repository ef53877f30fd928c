#include "rchat/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "rchat/embedding_index.hpp"
#include "rchat/errors.hpp"
#include "rchat/text.hpp"

using json = nlohmann::json;

namespace rchat {

namespace {

std::string doc_of_chunk(const std::string& chunk_id) {
  const auto hash = chunk_id.rfind('#');
  return hash == std::string::npos ? chunk_id : chunk_id.substr(0, hash);
}

json read_json(const std::filesystem::path& p) {
  const auto j = json::parse(text::read_file(p.string()), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::io_error, p.string() + ": not valid JSON");
  return j;
}

}  // namespace

IngestSummary run_ingest(const IngestOptions& opts, Provider& provider, const std::filesystem::path& out) {
  std::optional<std::vector<std::string>> manifest;
  if (opts.manifest) manifest = read_manifest(*opts.manifest);
  auto docs = load_corpus(opts.corpus_root, manifest);
  docs = tag_code_corpus(std::move(docs), opts.code_patterns);
  const auto chunks = chunk_corpus(docs, opts.chunking);

  std::vector<TextItem> items;
  items.reserve(chunks.size());
  for (const auto& c : chunks) items.push_back({c.chunk_id, c.text});
  const auto index = build_index(items, provider, opts.embed_batch);
  save_csv(index, out / artifact::kChunks);

  IngestSummary summary;
  summary.documents = docs.size();
  summary.chunks = chunks.size();
  std::map<std::string, std::size_t> chunk_counts;
  for (const auto& c : chunks) ++chunk_counts[c.doc_id];

  json documents = json::array();
  std::vector<QaPair> qa;
  for (const auto& d : docs) {
    ++summary.kinds[d.kind];
    documents.push_back({{"doc_id", d.doc_id},
                         {"kind", to_string(d.kind)},
                         {"byte_len", d.byte_len},
                         {"chunks", chunk_counts[d.doc_id]}});
    if (d.kind == DocumentKind::qa_pairs) {
      auto pairs = parse_qa_pairs(d);
      qa.insert(qa.end(), pairs.begin(), pairs.end());
    }
  }
  const json corpus = {{"chunk_size", opts.chunking.size},
                       {"chunk_overlap", opts.chunking.overlap},
                       {"code_patterns", opts.code_patterns},
                       {"documents", documents},
                       {"chunk_count", chunks.size()}};
  text::write_file((out / artifact::kCorpusManifest).string(), corpus.dump(2) + "\n");

  std::error_code ec;
  std::filesystem::remove(out / artifact::kQaPairs, ec);
  std::filesystem::remove(out / artifact::kQaIndex, ec);
  if (!qa.empty()) {
    json pairs = json::array();
    for (const auto& p : qa) pairs.push_back({{"id", p.id}, {"question", p.question}, {"answer", p.answer}});
    text::write_file((out / artifact::kQaPairs).string(), pairs.dump(2) + "\n");
    save_csv(build_qa_index(qa, provider).index, out / artifact::kQaIndex);
  }
  summary.qa_pairs = qa.size();
  return summary;
}

std::vector<Chunk> load_chunks(const std::filesystem::path& out) {
  const auto path = out / artifact::kChunks;
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::not_built, "no ingested corpus in " + out.string() + " (run ingest first)");
  }
  const auto index = load_csv(path);
  std::vector<Chunk> chunks;
  std::map<std::string, std::size_t> per_doc;
  for (const auto& item : index.items()) {
    Chunk c;
    c.chunk_id = item.item_id;
    c.doc_id = doc_of_chunk(item.item_id);
    c.text = item.text;
    c.index = per_doc[c.doc_id]++;
    chunks.push_back(std::move(c));
  }
  return chunks;
}

BuildSummary run_build_graph(const std::filesystem::path& out, Provider& provider, const PromptSet& prompts,
                             const BuildOptions& opts) {
  const auto chunks = load_chunks(out);
  if (chunks.empty()) throw Error(ErrorCode::empty_corpus, "chunk set is empty");

  BuildSummary summary;
  summary.chunks = chunks.size();

  // Extraction fans out over chunks; results keep chunk order.
  std::vector<ExtractionResult> raws(chunks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < chunks.size(); i = next++) {
      try {
        raws[i] = extract_elements(chunks[i], provider, opts.extraction, prompts);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = chunks.size();
      }
    }
  };
  const auto threads = std::clamp<std::size_t>(opts.max_in_flight, 1, chunks.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  for (const auto& r : raws) summary.extraction_warnings += r.warnings.size();

  auto graph = merge_elements(raws, provider, opts.merge, prompts, &summary.merge);
  const auto detection = detect_communities(graph, opts.leiden);
  auto reports = summarize_communities(graph, detection.assignments, provider, opts.summarize, prompts);
  export_graph(graph, detection.assignments, reports.reports, out);

  std::error_code ec;
  std::filesystem::remove(out / artifact::kEntityEmbeddings, ec);
  if (!graph.empty()) {
    std::vector<TextItem> items;
    for (const auto& [name, e] : graph.entities) items.push_back({name, entity_embedding_text(e)});
    save_csv(build_index(items, provider), out / artifact::kEntityEmbeddings);
  }

  summary.entities = graph.entities.size();
  summary.relationships = graph.relationships.size();
  summary.communities = detection.assignments.size();
  summary.reports = reports.reports.size();
  summary.levels = detection.levels;
  summary.failures = reports.failures;
  summary.quality_log = detection.quality_log;

  json per_level = json::object();
  for (const auto& c : detection.assignments) {
    auto& slot = per_level[std::to_string(c.level)];
    slot = slot.is_null() ? 1 : slot.get<int>() + 1;
  }
  json quality = json::array();
  for (const auto& q : detection.quality_log) {
    quality.push_back({{"iteration", q.iteration}, {"phase", q.phase}, {"quality", q.quality}});
  }
  json failures = json::array();
  for (const auto& f : reports.failures) failures.push_back({{"community_id", f.community_id}, {"error", f.error}});
  const json manifest = {{"seed", opts.leiden.seed},
                         {"resolution", opts.leiden.resolution},
                         {"max_levels", opts.leiden.max_levels},
                         {"max_gleanings", opts.extraction.max_gleanings},
                         {"report_levels", opts.summarize.levels},
                         {"prompt_version", prompts.version()},
                         {"provider", provider.name()},
                         {"chunks", summary.chunks},
                         {"entities", summary.entities},
                         {"relationships", summary.relationships},
                         {"levels", summary.levels},
                         {"communities_per_level", per_level},
                         {"reports", summary.reports},
                         {"report_failures", failures},
                         {"stub_entities", summary.merge.stub_entities},
                         {"summarize_calls", summary.merge.summarize_calls},
                         {"quality_log", quality}};
  text::write_file((out / artifact::kBuildManifest).string(), manifest.dump(2) + "\n");
  return summary;
}

std::shared_ptr<KnowledgeBase> load_knowledge_base(const std::filesystem::path& out) {
  auto kb = std::make_shared<KnowledgeBase>();
  const auto chunks_path = out / artifact::kChunks;
  if (!std::filesystem::exists(chunks_path)) {
    throw Error(ErrorCode::not_built, "no ingested corpus in " + out.string());
  }
  kb->chunk_index = load_csv(chunks_path);

  const auto corpus_path = out / artifact::kCorpusManifest;
  if (std::filesystem::exists(corpus_path)) {
    std::set<std::string> code_docs;
    for (const auto& d : read_json(corpus_path).value("documents", json::array())) {
      if (d.value("kind", "") == "code") code_docs.insert(d.value("doc_id", ""));
    }
    for (const auto& item : kb->chunk_index.items()) {
      if (code_docs.contains(doc_of_chunk(item.item_id))) kb->code_chunk_ids.insert(item.item_id);
    }
  }

  if (std::filesystem::exists(out / artifact::kQaPairs) && std::filesystem::exists(out / artifact::kQaIndex)) {
    kb->qa.index = load_csv(out / artifact::kQaIndex);
    for (const auto& p : read_json(out / artifact::kQaPairs)) {
      QaPair pair{p.at("id").get<std::string>(), p.at("question").get<std::string>(),
                  p.at("answer").get<std::string>()};
      kb->qa.pairs.emplace(pair.id, pair);
    }
  }

  if (std::filesystem::exists(out / "entities.json")) {
    auto artifacts = load_graph(out);
    kb->graph = std::move(artifacts.graph);
    kb->assignments = std::move(artifacts.assignments);
    kb->reports = std::move(artifacts.reports);
    if (std::filesystem::exists(out / artifact::kEntityEmbeddings)) {
      kb->entity_index = load_csv(out / artifact::kEntityEmbeddings);
    }
  }
  return kb;
}

std::shared_ptr<const EngineState> load_engine_state(const std::filesystem::path& out,
                                                     std::shared_ptr<Provider> provider, const PromptSet& prompts,
                                                     const EngineOptions& opts) {
  auto state = std::make_shared<EngineState>();
  std::shared_ptr<const KnowledgeBase> kb = load_knowledge_base(out);
  state->kb = kb;
  state->engine = std::make_shared<QueryEngine>(kb, std::move(provider), prompts, opts);
  state->prompt_version = prompts.version();
  if (std::filesystem::exists(out / artifact::kCorpusManifest)) {
    state->corpus_manifest = text::read_file((out / artifact::kCorpusManifest).string());
  }
  if (std::filesystem::exists(out / artifact::kBuildManifest)) {
    state->build_manifest = text::read_file((out / artifact::kBuildManifest).string());
    const auto j = json::parse(state->build_manifest, nullptr, false);
    if (j.is_object() && j.contains("seed") && j["seed"].is_number_unsigned()) {
      state->seed = j["seed"].get<std::uint64_t>();
    }
  }
  return state;
}

}  // namespace rchat

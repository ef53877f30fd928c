#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rchat/corpus.hpp"
#include "rchat/knowledge_graph.hpp"
#include "rchat/query_engine.hpp"

namespace rchat {

// Artifact file names inside an output directory.
namespace artifact {
inline constexpr const char* kChunks = "chunks.csv";
inline constexpr const char* kCorpusManifest = "corpus_manifest.json";
inline constexpr const char* kQaPairs = "qa_pairs.json";
inline constexpr const char* kQaIndex = "qa_index.csv";
inline constexpr const char* kEntityEmbeddings = "entity_embeddings.csv";
inline constexpr const char* kBuildManifest = "build_manifest.json";
}  // namespace artifact

struct IngestOptions {
  std::filesystem::path corpus_root;
  std::optional<std::filesystem::path> manifest;
  ChunkParams chunking;
  std::vector<std::string> code_patterns = {"codes.md", "*.py", "*.ipynb"};
  std::size_t embed_batch = kDefaultEmbedBatch;
};

struct IngestSummary {
  std::size_t documents = 0;
  std::size_t chunks = 0;
  std::size_t qa_pairs = 0;
  std::map<DocumentKind, std::size_t> kinds;
};

// Loads, tags and chunks the corpus, embeds the chunks and writes
// chunks.csv, corpus_manifest.json and (when Q&A documents exist) the Q&A index.
IngestSummary run_ingest(const IngestOptions& opts, Provider& provider, const std::filesystem::path& out);

struct BuildOptions {
  ExtractionOptions extraction;
  MergeOptions merge;
  LeidenOptions leiden;
  SummarizeOptions summarize;
  std::size_t max_in_flight = 4;
};

struct BuildSummary {
  std::size_t chunks = 0;
  std::size_t entities = 0;
  std::size_t relationships = 0;
  std::size_t communities = 0;
  std::size_t reports = 0;
  std::size_t levels = 0;
  std::size_t extraction_warnings = 0;
  MergeReport merge;
  std::vector<CommunityFailure> failures;
  std::vector<PhaseQuality> quality_log;
};

// Reads chunks.csv from `out`, runs extraction, merge, community detection and
// reports, and writes the graph artifacts, entity embeddings and build manifest.
BuildSummary run_build_graph(const std::filesystem::path& out, Provider& provider, const PromptSet& prompts,
                             const BuildOptions& opts);

// Chunks recovered from chunks.csv (doc_id is the part before the last '#').
std::vector<Chunk> load_chunks(const std::filesystem::path& out);

// Throws NotBuilt when the directory holds no ingested corpus. Graph artifacts
// are optional.
std::shared_ptr<KnowledgeBase> load_knowledge_base(const std::filesystem::path& out);

// Immutable snapshot served by the HTTP service.
struct EngineState {
  std::shared_ptr<const KnowledgeBase> kb;
  std::shared_ptr<const QueryEngine> engine;
  std::string corpus_manifest;  // JSON text
  std::string build_manifest;   // JSON text; empty when no graph was built
  std::string prompt_version;
  std::optional<std::uint64_t> seed;
};

std::shared_ptr<const EngineState> load_engine_state(const std::filesystem::path& out,
                                                     std::shared_ptr<Provider> provider, const PromptSet& prompts,
                                                     const EngineOptions& opts);

}  // namespace rchat

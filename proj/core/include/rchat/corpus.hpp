#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rchat {

enum class DocumentKind { documentation, paper, code, qa_pairs, issues };

std::string_view to_string(DocumentKind kind);
std::optional<DocumentKind> parse_document_kind(std::string_view s);

struct SourceDocument {
  std::string doc_id;  // path relative to the corpus root, '/' separated
  DocumentKind kind = DocumentKind::documentation;
  std::string text;
  std::size_t byte_len = 0;
};

// Ordered glob rules; the first rule whose pattern matches either the full
// doc_id or its file name decides the kind.
struct KindRule {
  std::string pattern;
  DocumentKind kind;
};
using KindPatterns = std::vector<KindRule>;

KindPatterns default_kind_patterns();

// Offsets are in code points; chunk_id is "doc_id#start..end".
struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t index = 0;
};

struct ChunkParams {
  std::size_t size = 1200;
  std::size_t overlap = 100;
};

// Throws InvalidChunkParams unless size > overlap >= 0.
void validate(const ChunkParams& params);

// Newline separated relative paths; blank lines and '#' comments ignored.
std::vector<std::string> read_manifest(const std::filesystem::path& manifest_file);

// Loads every regular file under root (or exactly the manifest entries),
// sorted by doc_id. Zero-byte and non-UTF-8 files raise UnreadableFile.
std::vector<SourceDocument> load_corpus(const std::filesystem::path& root,
                                        const std::optional<std::vector<std::string>>& manifest,
                                        const KindPatterns& patterns = default_kind_patterns());

std::vector<Chunk> chunk_document(const SourceDocument& doc, std::size_t size, std::size_t overlap);
std::vector<Chunk> chunk_corpus(const std::vector<SourceDocument>& docs, const ChunkParams& params);

// Re-tags documents matching any code pattern as kind=code. Documents that
// match nothing keep their kind.
std::vector<SourceDocument> tag_code_corpus(std::vector<SourceDocument> docs,
                                            const std::vector<std::string>& code_patterns);

bool glob_match(std::string_view pattern, std::string_view doc_id);

}  // namespace rchat

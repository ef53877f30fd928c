#include "rchat/corpus.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <set>

#include "rchat/errors.hpp"
#include "rchat/text.hpp"

namespace fs = std::filesystem;

namespace rchat {

std::string_view to_string(DocumentKind kind) {
  switch (kind) {
    case DocumentKind::documentation: return "documentation";
    case DocumentKind::paper: return "paper";
    case DocumentKind::code: return "code";
    case DocumentKind::qa_pairs: return "qa_pairs";
    case DocumentKind::issues: return "issues";
  }
  return "documentation";
}

std::optional<DocumentKind> parse_document_kind(std::string_view s) {
  for (auto k : {DocumentKind::documentation, DocumentKind::paper, DocumentKind::code,
                 DocumentKind::qa_pairs, DocumentKind::issues}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

KindPatterns default_kind_patterns() {
  return {
      {"codes.md", DocumentKind::code},     {"*.py", DocumentKind::code},
      {"*.ipynb", DocumentKind::code},      {"papers/*", DocumentKind::paper},
      {"issues/*", DocumentKind::issues},   {"qa/*", DocumentKind::qa_pairs},
  };
}

bool glob_match(std::string_view pattern, std::string_view doc_id) {
  const std::string pat(pattern);
  const std::string id(doc_id);
  if (::fnmatch(pat.c_str(), id.c_str(), 0) == 0) return true;
  const auto slash = id.rfind('/');
  if (slash == std::string::npos) return false;
  const std::string base = id.substr(slash + 1);
  return ::fnmatch(pat.c_str(), base.c_str(), 0) == 0;
}

namespace {

DocumentKind classify_path(const std::string& doc_id, const KindPatterns& patterns) {
  for (const auto& rule : patterns) {
    if (glob_match(rule.pattern, doc_id)) return rule.kind;
  }
  return DocumentKind::documentation;
}

SourceDocument read_document(const fs::path& root, const std::string& doc_id,
                             const KindPatterns& patterns) {
  const fs::path p = root / doc_id;
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) {
    throw Error(ErrorCode::unreadable_file, doc_id + " (not a readable regular file)");
  }
  std::string content;
  try {
    content = text::read_file(p.string());
  } catch (const Error&) {
    throw Error(ErrorCode::unreadable_file, doc_id);
  }
  if (content.empty()) throw Error(ErrorCode::unreadable_file, doc_id + " (empty file)");
  if (!text::is_valid_utf8(content)) {
    throw Error(ErrorCode::unreadable_file, doc_id + " (invalid UTF-8)");
  }
  SourceDocument doc;
  doc.doc_id = doc_id;
  doc.kind = classify_path(doc_id, patterns);
  doc.byte_len = content.size();
  doc.text = std::move(content);
  return doc;
}

}  // namespace

std::vector<std::string> read_manifest(const fs::path& manifest_file) {
  const std::string content = text::read_file(manifest_file.string());
  std::vector<std::string> out;
  for (const auto& raw : text::split(content, "\n")) {
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    out.emplace_back(line);
  }
  return out;
}

std::vector<SourceDocument> load_corpus(const fs::path& root,
                                        const std::optional<std::vector<std::string>>& manifest,
                                        const KindPatterns& patterns) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::missing_root, root.string());

  std::set<std::string> ids;
  if (manifest) {
    for (const auto& entry : *manifest) {
      auto id = fs::path(entry).lexically_normal().generic_string();
      if (id.empty() || id.starts_with("..") || fs::path(id).is_absolute()) {
        throw Error(ErrorCode::unreadable_file, entry + " (outside corpus root)");
      }
      ids.insert(std::move(id));
    }
  } else {
    for (auto it = fs::recursive_directory_iterator(root, ec); it != fs::recursive_directory_iterator();
         it.increment(ec)) {
      if (ec) throw Error(ErrorCode::unreadable_file, it->path().string());
      const auto name = it->path().filename().string();
      if (!name.empty() && name.front() == '.') {
        if (it->is_directory()) it.disable_recursion_pending();
        continue;
      }
      if (it->is_regular_file()) {
        ids.insert(fs::relative(it->path(), root).generic_string());
      }
    }
  }
  if (ids.empty()) throw Error(ErrorCode::empty_corpus, root.string());

  std::vector<SourceDocument> docs;
  docs.reserve(ids.size());
  for (const auto& id : ids) docs.push_back(read_document(root, id, patterns));
  return docs;
}

void validate(const ChunkParams& params) {
  if (params.size < 1 || params.size <= params.overlap) {
    throw Error(ErrorCode::invalid_chunk_params,
                "size=" + std::to_string(params.size) + " overlap=" + std::to_string(params.overlap) +
                    " (need size > overlap >= 0)");
  }
}

std::vector<Chunk> chunk_document(const SourceDocument& doc, std::size_t size, std::size_t overlap) {
  validate(ChunkParams{size, overlap});
  std::vector<std::size_t> bounds;
  if (!text::utf8_boundaries(doc.text, bounds)) {
    throw Error(ErrorCode::unreadable_file, doc.doc_id + " (invalid UTF-8)");
  }
  const std::size_t length = bounds.size() - 1;  // in code points
  std::vector<Chunk> chunks;
  if (length == 0) return chunks;

  const std::size_t stride = size - overlap;
  std::size_t start = 0;
  for (std::size_t index = 0;; ++index) {
    const std::size_t end = std::min(start + size, length);
    Chunk c;
    c.doc_id = doc.doc_id;
    c.start = start;
    c.end = end;
    c.index = index;
    c.text = doc.text.substr(bounds[start], bounds[end] - bounds[start]);
    c.chunk_id = doc.doc_id + "#" + std::to_string(start) + ".." + std::to_string(end);
    chunks.push_back(std::move(c));
    if (end == length) break;
    start += stride;
  }
  return chunks;
}

std::vector<Chunk> chunk_corpus(const std::vector<SourceDocument>& docs, const ChunkParams& params) {
  std::vector<Chunk> all;
  for (const auto& d : docs) {
    auto cs = chunk_document(d, params.size, params.overlap);
    std::move(cs.begin(), cs.end(), std::back_inserter(all));
  }
  return all;
}

std::vector<SourceDocument> tag_code_corpus(std::vector<SourceDocument> docs,
                                            const std::vector<std::string>& code_patterns) {
  if (code_patterns.empty()) {
    throw Error(ErrorCode::invalid_argument, "tag_code_corpus: empty pattern list");
  }
  for (auto& d : docs) {
    const bool is_code = std::any_of(code_patterns.begin(), code_patterns.end(),
                                     [&](const std::string& p) { return glob_match(p, d.doc_id); });
    if (is_code) d.kind = DocumentKind::code;
  }
  return docs;
}

}  // namespace rchat

#include "rchat/embedding_index.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "rchat/errors.hpp"
#include "rchat/text.hpp"

namespace rchat {

double euclidean_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "cosine over dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_vector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

bool hit_order(const SimilarityHit& a, const SimilarityHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.item_id < b.item_id;
}

EmbeddingIndex::EmbeddingIndex(std::vector<IndexedItem> items) : items_(std::move(items)) {
  if (items_.empty()) return;
  dim_ = items_.front().vector.size();
  if (dim_ == 0) throw Error(ErrorCode::dimension_mismatch, "index vectors must have d > 0");
  by_id_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto& it = items_[i];
    if (it.vector.size() != dim_) {
      throw Error(ErrorCode::dimension_mismatch, "item " + it.item_id + " has dim " +
                                                     std::to_string(it.vector.size()) + ", expected " +
                                                     std::to_string(dim_));
    }
    it.norm = euclidean_norm(it.vector);
    if (it.norm == 0.0) throw Error(ErrorCode::zero_vector, "item " + it.item_id);
    if (!by_id_.emplace(it.item_id, i).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate item id " + it.item_id);
    }
  }
}

const IndexedItem* EmbeddingIndex::find(const std::string& item_id) const {
  const auto it = by_id_.find(item_id);
  return it == by_id_.end() ? nullptr : &items_[it->second];
}

std::vector<SimilarityHit> EmbeddingIndex::top_k(std::span<const double> query, std::size_t k,
                                                 double threshold) const {
  return scan(query, k, threshold, {});
}

std::vector<SimilarityHit> EmbeddingIndex::scan(std::span<const double> query, std::size_t k,
                                                double threshold,
                                                const std::function<bool(const IndexedItem&)>& accept) const {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "top_k requires k >= 1");
  if (items_.empty()) throw Error(ErrorCode::empty_index, "query against an empty index");
  if (query.size() != dim_) {
    throw Error(ErrorCode::dimension_mismatch, "query dim " + std::to_string(query.size()) +
                                                   " vs index dim " + std::to_string(dim_));
  }
  const double qnorm = euclidean_norm(query);
  if (qnorm == 0.0) throw Error(ErrorCode::zero_vector, "query vector");

  std::vector<SimilarityHit> hits;
  for (const auto& it : items_) {
    if (accept && !accept(it)) continue;
    double dot = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) dot += query[i] * it.vector[i];
    const double score = std::clamp(dot / (qnorm * it.norm), -1.0, 1.0);
    if (score >= threshold) hits.push_back({it.item_id, score});
  }
  const auto keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_order);
  hits.resize(keep);
  return hits;
}

EmbeddingIndex EmbeddingIndex::subset(const std::vector<std::string>& ids) const {
  std::vector<bool> take(items_.size(), false);
  for (const auto& id : ids) {
    if (auto it = by_id_.find(id); it != by_id_.end()) take[it->second] = true;
  }
  std::vector<IndexedItem> out;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (take[i]) out.push_back(items_[i]);
  }
  return EmbeddingIndex(std::move(out));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void append_field(std::string& out, std::string_view field) {
  const bool quote = field.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!quote) {
    out += field;
    return;
  }
  out += '"';
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

// RFC-4180 reader; quoted fields may span lines.
std::vector<Record> read_records(std::string_view s) {
  std::vector<Record> out;
  std::size_t i = 0;
  std::size_t line = 1;
  const auto n = s.size();
  while (i < n) {
    Record rec;
    rec.line = line;
    std::string field;
    bool done = false;
    while (!done) {
      if (i < n && s[i] == '"') {
        ++i;
        while (true) {
          if (i >= n) throw RowError(ErrorCode::malformed_row, rec.line, "unterminated quoted field");
          if (s[i] == '"') {
            if (i + 1 < n && s[i + 1] == '"') {
              field += '"';
              i += 2;
              continue;
            }
            ++i;
            break;
          }
          if (s[i] == '\n') ++line;
          field += s[i++];
        }
        if (i < n && s[i] != ',' && s[i] != '\n' && s[i] != '\r') {
          throw RowError(ErrorCode::malformed_row, rec.line, "garbage after closing quote");
        }
      } else {
        while (i < n && s[i] != ',' && s[i] != '\n' && s[i] != '\r') {
          if (s[i] == '"') throw RowError(ErrorCode::malformed_row, rec.line, "stray quote");
          field += s[i++];
        }
      }
      rec.fields.push_back(std::move(field));
      field.clear();
      if (i >= n) {
        done = true;
      } else if (s[i] == ',') {
        ++i;
      } else {
        if (s[i] == '\r') ++i;
        if (i < n && s[i] == '\n') ++i;
        ++line;
        done = true;
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && std::isfinite(out);
}

}  // namespace

std::string to_csv(const EmbeddingIndex& index) {
  std::string out = "item_id,text,dim";
  for (std::size_t i = 0; i < index.dim(); ++i) out += ",v" + std::to_string(i);
  out += '\n';
  for (const auto& it : index.items()) {
    append_field(out, it.item_id);
    out += ',';
    append_field(out, it.text);
    out += ',';
    out += std::to_string(it.vector.size());
    for (double v : it.vector) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void save_csv(const EmbeddingIndex& index, const std::filesystem::path& path) {
  text::write_file(path.string(), to_csv(index));
}

EmbeddingIndex parse_csv(std::string_view content) {
  const auto records = read_records(content);
  if (records.empty()) throw RowError(ErrorCode::malformed_row, 1, "missing header");
  const auto& header = records.front().fields;
  if (header.size() < 3 || header[0] != "item_id" || header[1] != "text" || header[2] != "dim") {
    throw RowError(ErrorCode::malformed_row, 1, "header must start with item_id,text,dim");
  }
  const std::size_t header_dim = header.size() - 3;
  std::vector<IndexedItem> items;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;  // blank line
    if (rec.fields.size() < 3) throw RowError(ErrorCode::malformed_row, rec.line, "fewer than 3 fields");
    double dim_value = 0;
    if (!parse_double(rec.fields[2], dim_value) || dim_value < 1 || dim_value != std::floor(dim_value)) {
      throw RowError(ErrorCode::malformed_row, rec.line, "bad dim field '" + rec.fields[2] + "'");
    }
    const auto dim = static_cast<std::size_t>(dim_value);
    const std::size_t got = rec.fields.size() - 3;
    if (got != dim || dim != header_dim) {
      throw RowError(ErrorCode::inconsistent_dimension, rec.line,
                     "row has " + std::to_string(got) + " values, dim field " + std::to_string(dim) +
                         ", header " + std::to_string(header_dim));
    }
    IndexedItem item;
    item.item_id = rec.fields[0];
    item.text = rec.fields[1];
    item.vector.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      if (!parse_double(rec.fields[3 + k], item.vector[k])) {
        throw RowError(ErrorCode::malformed_row, rec.line, "bad number '" + rec.fields[3 + k] + "'");
      }
    }
    items.push_back(std::move(item));
  }
  return EmbeddingIndex(std::move(items));
}

EmbeddingIndex load_csv(const std::filesystem::path& path) {
  return parse_csv(text::read_file(path.string()));
}

EmbeddingIndex build_index(const std::vector<TextItem>& inputs, Provider& provider, std::size_t batch_size) {
  if (inputs.empty()) throw Error(ErrorCode::invalid_argument, "build_index: no inputs");
  if (batch_size == 0) batch_size = 1;
  std::vector<IndexedItem> items;
  items.reserve(inputs.size());
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const auto end = std::min(start + batch_size, inputs.size());
    std::vector<std::string> texts;
    texts.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) texts.push_back(inputs[i].text);
    auto vectors = embed_texts(provider, texts);
    for (std::size_t i = start; i < end; ++i) {
      items.push_back({inputs[i].id, inputs[i].text, std::move(vectors[i - start]), 0.0});
    }
  }
  return EmbeddingIndex(std::move(items));
}

}  // namespace rchat

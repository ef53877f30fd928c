#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rchat/model_client.hpp"

namespace rchat {

inline constexpr std::size_t kDefaultTopK = 5;
inline constexpr double kDefaultThreshold = 0.75;

struct IndexedItem {
  std::string item_id;
  std::string text;
  Vector vector;
  double norm = 0.0;
};

struct SimilarityHit {
  std::string item_id;
  double score = 0.0;

  friend bool operator==(const SimilarityHit&, const SimilarityHit&) = default;
};

double euclidean_norm(std::span<const double> v);

// dot(a,b)/(|a||b|). Throws DimensionMismatch or ZeroVector.
double cosine(std::span<const double> a, std::span<const double> b);

// Descending score, then ascending item_id.
bool hit_order(const SimilarityHit& a, const SimilarityHit& b);

// Immutable set of (id, text, vector) triples answered by exact linear scan.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  // Validates dimensions, rejects zero vectors and duplicate ids, and
  // computes the cached norms.
  explicit EmbeddingIndex(std::vector<IndexedItem> items);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t dim() const { return dim_; }
  const std::vector<IndexedItem>& items() const { return items_; }
  const IndexedItem* find(const std::string& item_id) const;

  std::vector<SimilarityHit> top_k(std::span<const double> query, std::size_t k = kDefaultTopK,
                                   double threshold = kDefaultThreshold) const;

  // Same scan restricted to ids accepted by the filter.
  template <typename Pred>
  std::vector<SimilarityHit> top_k_where(std::span<const double> query, std::size_t k, double threshold,
                                         Pred&& accept) const;

  // Subset view holding only the listed ids (order of this index kept).
  EmbeddingIndex subset(const std::vector<std::string>& ids) const;

 private:
  std::vector<SimilarityHit> scan(std::span<const double> query, std::size_t k, double threshold,
                                  const std::function<bool(const IndexedItem&)>& accept) const;

  std::vector<IndexedItem> items_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::size_t dim_ = 0;
};

template <typename Pred>
std::vector<SimilarityHit> EmbeddingIndex::top_k_where(std::span<const double> query, std::size_t k,
                                                       double threshold, Pred&& accept) const {
  return scan(query, k, threshold, std::function<bool(const IndexedItem&)>(std::forward<Pred>(accept)));
}

// CSV layout: header `item_id,text,dim,v0,...,v{d-1}`, RFC-4180 quoting,
// LF line endings, doubles written with 17 significant digits.
void save_csv(const EmbeddingIndex& index, const std::filesystem::path& path);
std::string to_csv(const EmbeddingIndex& index);
EmbeddingIndex load_csv(const std::filesystem::path& path);
EmbeddingIndex parse_csv(std::string_view content);

struct TextItem {
  std::string id;
  std::string text;
};

inline constexpr std::size_t kDefaultEmbedBatch = 64;

EmbeddingIndex build_index(const std::vector<TextItem>& inputs, Provider& provider,
                           std::size_t batch_size = kDefaultEmbedBatch);

}  // namespace rchat

#pragma once
#include <map>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mkgrag/backends.hpp"

namespace mkgrag::index {

enum class Kind { Document, Entity, Edge, Segment };

std::string kind_name(Kind k);
Kind kind_from_name(const std::string& s);

struct IndexEntry {
  std::string item_id;
  Kind kind = Kind::Document;
  backends::EmbeddingVector vector;
  std::string payload_ref;
};

struct ScoredHit {
  std::string item_id;
  Kind kind = Kind::Document;
  double score = 0;  // cosine in [-1, 1]
};

// dot(a,b)/(|a||b|), accumulated in double, clamped to [-1,1].
double cosine_similarity(const backends::EmbeddingVector& a,
                         const backends::EmbeddingVector& b);

struct UpsertResult {
  std::size_t applied = 0;
  std::vector<std::string> errors;
};

// Exact flat cosine index, partitioned by kind. Many concurrent readers;
// writes are exclusive.
class VectorIndex {
 public:
  explicit VectorIndex(int dim) : dim_(dim) {}
  VectorIndex(VectorIndex&& other) noexcept
      : dim_(other.dim_), partitions_(std::move(other.partitions_)) {}

  int dim() const { return dim_; }
  std::size_t size() const;
  std::size_t size(Kind kind) const;

  UpsertResult upsert(const std::vector<IndexEntry>& entries);

  // min(k, partition size) hits, score descending, ties by item_id
  // ascending.
  std::vector<ScoredHit> search_topk(const backends::EmbeddingVector& query, Kind kind,
                                     std::size_t k) const;

  const IndexEntry* find(Kind kind, const std::string& item_id) const;

  void save(const std::string& path) const;
  static VectorIndex load(const std::string& path);

 private:
  int dim_;
  // kind -> item_id -> entry (sorted ids give the deterministic scan order).
  std::map<Kind, std::map<std::string, IndexEntry>> partitions_;
  mutable std::shared_mutex mutex_;
};

}  // namespace mkgrag::index

#pragma once
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mkgrag/backends.hpp"
#include "mkgrag/fusion.hpp"
#include "mkgrag/index.hpp"

namespace mkgrag::retrieval {

struct Query {
  std::string question;
  std::string image_id;
};

// "entity:<NAME>" or "edge:<A>|<B>" with the canonical sorted pair.
std::string entity_element_id(const std::string& name);
std::string edge_element_id(const fusion::EdgeKey& key);

struct ComposedGraph {
  fusion::MultimodalKG graph;  // merged over the candidate documents

  const fusion::MMEntity* find_entity(const std::string& element_id) const;
  const fusion::MMEdge* find_edge(const std::string& element_id) const;
  std::vector<std::string> element_ids() const;  // entities then edges, sorted
};

struct ScoredElement {
  std::string element_id;
  double score = 0;
  int hop = 0;
  bool operator==(const ScoredElement&) const = default;
};

struct RetrievedSubgraph {
  std::vector<ScoredElement> seeds;      // hop 0
  std::vector<ScoredElement> expansion;  // closure including seeds
  int l = 0;
};

struct AssembledContext {
  std::string graph_block;
  std::string segment_block;
  std::vector<std::string> segment_ids;  // retained, relevance order
  std::size_t token_count = 0;
};

struct StoredSegment {
  std::string segment_id;
  std::string doc_id;
  std::string text;
  std::vector<std::string> image_ids;
};

// Immutable after load; maps segment ids to their text and groups them per
// document.
class SegmentStore {
 public:
  void add(StoredSegment seg);
  const StoredSegment* find(const std::string& segment_id) const;
  std::vector<std::string> segments_of(const std::string& doc_id) const;
  std::size_t size() const { return segments_.size(); }

  void save(const std::string& path) const;  // JSONL
  static SegmentStore load(const std::string& path);

 private:
  std::map<std::string, StoredSegment> segments_;
  std::map<std::string, std::vector<std::string>> by_doc_;
};

backends::EmbeddingVector embed_query(backends::EmbeddingBackend& backend,
                                      const Query& query, int dim);

// Evidence-role embedding content of a graph element: names, type,
// descriptions, and attached region image ids.
backends::EmbeddingVector embed_entity(backends::EmbeddingBackend& backend,
                                       const fusion::MMEntity& entity, int dim);
backends::EmbeddingVector embed_edge(backends::EmbeddingBackend& backend,
                                     const fusion::MMEdge& edge, int dim);

class Engine {
 public:
  Engine(std::shared_ptr<index::VectorIndex> idx, std::string kg_dir,
         std::shared_ptr<SegmentStore> segments,
         std::shared_ptr<backends::EmbeddingBackend> embedder);

  std::vector<index::ScoredHit> retrieve_documents(const Query& query, std::size_t k_d) const;

  ComposedGraph compose_query_graph(const std::vector<std::string>& doc_ids) const;

  // All elements of g pooled, score descending, ties by element id.
  std::vector<ScoredElement> rank_elements(const Query& query, const ComposedGraph& g) const;
  std::vector<ScoredElement> score_elements(const Query& query, const ComposedGraph& g,
                                            std::size_t k_g) const;

  // BFS over the entity/edge incidence structure. One hop crosses one edge:
  // the edge and its far endpoint join at the same hop. A neighbor element
  // is admitted iff cosine(query, element) >= rho * min seed score.
  RetrievedSubgraph expand_subgraph(const ComposedGraph& g,
                                    const std::vector<ScoredElement>& seeds, int l,
                                    const Query& query, double rho) const;

  AssembledContext assemble_context(const RetrievedSubgraph& sub, const ComposedGraph& g,
                                    std::size_t budget) const;

  const index::VectorIndex& vector_index() const { return *index_; }
  const SegmentStore& segment_store() const { return *segments_; }
  backends::EmbeddingBackend& embedder() const { return *embedder_; }
  int dim() const { return index_->dim(); }

 private:
  std::shared_ptr<index::VectorIndex> index_;
  std::string kg_dir_;
  std::shared_ptr<SegmentStore> segments_;
  std::shared_ptr<backends::EmbeddingBackend> embedder_;
};

}  // namespace mkgrag::retrieval

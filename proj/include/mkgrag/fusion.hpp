#pragma once
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mkgrag/extraction.hpp"
#include "mkgrag/scenegraph.hpp"

namespace mkgrag::fusion {

// nullopt region = whole-image attachment.
struct RegionKey {
  std::string image_id;
  std::optional<scenegraph::BBox> region;

  auto tie() const {
    double x1 = region ? region->x1 : -1, y1 = region ? region->y1 : -1,
           x2 = region ? region->x2 : -1, y2 = region ? region->y2 : -1;
    return std::make_tuple(image_id, region.has_value(), x1, y1, x2, y2);
  }
  bool operator<(const RegionKey& o) const { return tie() < o.tie(); }
  bool operator==(const RegionKey& o) const { return tie() == o.tie(); }
};

struct MMEntity {
  std::string name;
  std::string entity_type;
  // text -> smallest contributing segment_id; deduplicated by exact text.
  std::map<std::string, std::string> descriptions;
  // attachment -> max strength seen.
  std::map<RegionKey, double> regions;
  std::set<std::string> source_segments;
};

using EdgeKey = std::pair<std::string, std::string>;  // sorted name pair

struct MMEdge {
  std::string source;  // display orientation of the first record seen
  std::string target;
  std::map<std::string, std::string> descriptions;
  double strength = 0;  // max over merged records
  std::map<RegionKey, double> regions;
  std::set<std::string> source_segments;
};

struct MultimodalKG {
  std::string doc_id;
  std::map<std::string, MMEntity> nodes;
  std::map<EdgeKey, MMEdge> edges;
  std::size_t dangling_dropped = 0;
  std::vector<std::string> drop_reasons;

  std::set<std::string> doc_provenance() const;  // doc ids from segment ids
  std::string canonical_json() const;
};

EdgeKey make_edge_key(const std::string& a, const std::string& b);

// One node per distinct canonical entity name; relationships with missing
// endpoints are dropped and counted.
MultimodalKG build_textual_subgraph(const extraction::RecordBatch& batch,
                                    const std::string& segment_id);

void apply_matchings(MultimodalKG& frag,
                     const std::vector<extraction::MatchRecord>& matches,
                     const scenegraph::VisualGraph& vg);

MultimodalKG aggregate_document_graph(const std::vector<MultimodalKG>& fragments,
                                      const std::string& doc_id);

// Merges `src` into `dst` in place (the reduce step behind aggregation and
// query-time composition).
void merge_into(MultimodalKG& dst, const MultimodalKG& src);

std::string to_json(const MultimodalKG& kg);
MultimodalKG from_json(const std::string& content);

void save_kg(const MultimodalKG& kg, const std::string& path);
MultimodalKG load_kg(const std::string& path);

}  // namespace mkgrag::fusion

#pragma once
#include <string>
#include <vector>

namespace mkgrag::scenegraph {

// Normalized image coordinates, top-left origin.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid() const {
    return 0.0 <= x1 && x1 <= x2 && x2 <= 1.0 && 0.0 <= y1 && y1 <= y2 && y2 <= 1.0;
  }
  bool operator==(const BBox&) const = default;
};

BBox bbox_union(const BBox& a, const BBox& b);

// Coordinate formatting used in prompts: at most 2 decimals, trailing zeros
// stripped but at least one decimal kept ("1.0", "0.8", "0.06").
std::string format_coord(double v);

struct VisualObject {
  std::string object_id;  // "<object-k>"
  std::string category;
  BBox bbox;
};

struct VisualRelation {
  std::string relation_id;  // "<relation-k>"
  std::string subject_id;
  std::string predicate;
  std::string object_id;
};

struct VisualGraph {
  std::string image_id;
  std::vector<VisualObject> objects;
  std::vector<VisualRelation> relations;
  std::vector<std::string> drop_reasons;

  const VisualObject* find_object(const std::string& id) const;
  const VisualRelation* find_relation(const std::string& id) const;
};

// Sidecar JSON: {objects: [{id, category, bbox: [x1,y1,x2,y2]}],
//                relations: [{id, subject, predicate, object}]}.
// Malformed entries are dropped with reasons; unreadable content throws.
VisualGraph ingest_scene_graph(const std::string& raw, const std::string& image_id);

// One "- <object-k>: <category>, (x1, y1, x2, y2)" line per object followed
// by one "- <relation-k>: <object-i> <predicate> <object-j>" line per
// relation.
std::string render_scene_graph_block(const VisualGraph& vg);

}  // namespace mkgrag::scenegraph

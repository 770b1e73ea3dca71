#include "mkgrag/scenegraph.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace mkgrag::scenegraph {

using nlohmann::json;

BBox bbox_union(const BBox& a, const BBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s(buf);
  if (s.size() >= 2 && s.back() == '0' && s[s.size() - 3] == '.') s.pop_back();
  return s;
}

const VisualObject* VisualGraph::find_object(const std::string& id) const {
  for (const auto& o : objects)
    if (o.object_id == id) return &o;
  return nullptr;
}

const VisualRelation* VisualGraph::find_relation(const std::string& id) const {
  for (const auto& r : relations)
    if (r.relation_id == id) return &r;
  return nullptr;
}

VisualGraph ingest_scene_graph(const std::string& raw, const std::string& image_id) {
  VisualGraph vg;
  vg.image_id = image_id;
  if (raw.empty() || raw.find_first_not_of(" \t\r\n") == std::string::npos) return vg;

  json j = json::parse(raw, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw std::runtime_error("unreadable scene graph for image " + image_id);

  std::unordered_set<std::string> object_ids;
  for (const auto& jo : j.value("objects", json::array())) {
    VisualObject obj;
    obj.object_id = jo.value("id", std::string{});
    obj.category = jo.value("category", std::string{});
    if (obj.object_id.empty()) {
      vg.drop_reasons.push_back("object without id");
      continue;
    }
    if (!object_ids.insert(obj.object_id).second) {
      vg.drop_reasons.push_back(obj.object_id + ": duplicate id");
      continue;
    }
    auto jb = jo.value("bbox", json::array());
    if (!jb.is_array() || jb.size() != 4 || !jb[0].is_number()) {
      vg.drop_reasons.push_back(obj.object_id + ": malformed bbox");
      object_ids.erase(obj.object_id);
      continue;
    }
    obj.bbox = {jb[0].get<double>(), jb[1].get<double>(), jb[2].get<double>(),
                jb[3].get<double>()};
    if (!obj.bbox.valid()) {
      std::string reason = obj.bbox.x1 > obj.bbox.x2 ? "x1 > x2"
                           : obj.bbox.y1 > obj.bbox.y2 ? "y1 > y2"
                                                       : "bbox out of [0,1]";
      vg.drop_reasons.push_back(obj.object_id + ": " + reason);
      object_ids.erase(obj.object_id);
      continue;
    }
    vg.objects.push_back(std::move(obj));
  }

  std::unordered_set<std::string> relation_ids;
  for (const auto& jr : j.value("relations", json::array())) {
    VisualRelation rel;
    rel.relation_id = jr.value("id", std::string{});
    rel.subject_id = jr.value("subject", std::string{});
    rel.predicate = jr.value("predicate", std::string{});
    rel.object_id = jr.value("object", std::string{});
    if (rel.relation_id.empty()) {
      vg.drop_reasons.push_back("relation without id");
      continue;
    }
    if (!relation_ids.insert(rel.relation_id).second) {
      vg.drop_reasons.push_back(rel.relation_id + ": duplicate id");
      continue;
    }
    if (rel.subject_id == rel.object_id) {
      vg.drop_reasons.push_back(rel.relation_id + ": self relation");
      continue;
    }
    if (!object_ids.count(rel.subject_id) || !object_ids.count(rel.object_id)) {
      vg.drop_reasons.push_back(rel.relation_id + ": unresolved endpoint");
      continue;
    }
    vg.relations.push_back(std::move(rel));
  }
  return vg;
}

std::string render_scene_graph_block(const VisualGraph& vg) {
  std::string out;
  for (const auto& o : vg.objects) {
    out += "- <" + o.object_id + ">: " + o.category + ", (" + format_coord(o.bbox.x1) +
           ", " + format_coord(o.bbox.y1) + ", " + format_coord(o.bbox.x2) + ", " +
           format_coord(o.bbox.y2) + ")\n";
  }
  for (const auto& r : vg.relations) {
    out += "- <" + r.relation_id + ">: <" + r.subject_id + "> " + r.predicate + " <" +
           r.object_id + ">\n";
  }
  return out;
}

}  // namespace mkgrag::scenegraph

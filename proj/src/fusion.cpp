#include "mkgrag/fusion.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mkgrag::fusion {

using nlohmann::json;

EdgeKey make_edge_key(const std::string& a, const std::string& b) {
  return a <= b ? EdgeKey{a, b} : EdgeKey{b, a};
}

std::set<std::string> MultimodalKG::doc_provenance() const {
  std::set<std::string> docs;
  auto add = [&](const std::set<std::string>& segs) {
    for (const auto& s : segs) docs.insert(s.substr(0, s.find('#')));
  };
  for (const auto& [_, n] : nodes) add(n.source_segments);
  for (const auto& [_, e] : edges) add(e.source_segments);
  return docs;
}

MultimodalKG build_textual_subgraph(const extraction::RecordBatch& batch,
                                    const std::string& segment_id) {
  MultimodalKG frag;
  for (const auto& e : batch.entities) {
    MMEntity& node = frag.nodes[e.name];
    node.name = e.name;
    if (node.entity_type.empty() ||
        (!e.entity_type.empty() && e.entity_type < node.entity_type))
      node.entity_type = e.entity_type;
    if (!e.description.empty()) {
      auto [it, inserted] = node.descriptions.emplace(e.description, segment_id);
      if (!inserted && segment_id < it->second) it->second = segment_id;
    }
    node.source_segments.insert(segment_id);
  }
  for (const auto& r : batch.relationships) {
    if (!frag.nodes.count(r.source) || !frag.nodes.count(r.target)) {
      ++frag.dangling_dropped;
      continue;
    }
    EdgeKey key = make_edge_key(r.source, r.target);
    auto [it, inserted] = frag.edges.try_emplace(key);
    MMEdge& edge = it->second;
    if (inserted) {
      edge.source = r.source;
      edge.target = r.target;
    }
    if (!r.description.empty()) {
      auto [dit, dins] = edge.descriptions.emplace(r.description, segment_id);
      if (!dins && segment_id < dit->second) dit->second = segment_id;
    }
    edge.strength = std::max(edge.strength, r.strength);
    edge.source_segments.insert(segment_id);
  }
  return frag;
}

namespace {
void attach(std::map<RegionKey, double>& regions, RegionKey key, double strength) {
  auto [it, inserted] = regions.emplace(std::move(key), strength);
  if (!inserted) it->second = std::max(it->second, strength);
}
}  // namespace

void apply_matchings(MultimodalKG& frag,
                     const std::vector<extraction::MatchRecord>& matches,
                     const scenegraph::VisualGraph& vg) {
  for (const auto& m : matches) {
    if (const auto* im = std::get_if<extraction::ImageMatch>(&m)) {
      auto it = frag.nodes.find(im->entity_name);
      if (it == frag.nodes.end()) {
        frag.drop_reasons.push_back("image match names unknown entity: " + im->entity_name);
        continue;
      }
      attach(it->second.regions, {vg.image_id, std::nullopt}, im->strength);
    } else if (const auto* om = std::get_if<extraction::ObjectMatch>(&m)) {
      auto it = frag.nodes.find(om->entity_name);
      if (it == frag.nodes.end()) {
        frag.drop_reasons.push_back("object match names unknown entity: " + om->entity_name);
        continue;
      }
      const auto* obj = vg.find_object(om->object_id);
      if (!obj) {
        frag.drop_reasons.push_back("object match names unknown object: " + om->object_id);
        continue;
      }
      attach(it->second.regions, {vg.image_id, obj->bbox}, om->strength);
    } else if (const auto* rm = std::get_if<extraction::RelationMatch>(&m)) {
      auto it = frag.edges.find(make_edge_key(rm->source_entity, rm->target_entity));
      if (it == frag.edges.end()) {
        frag.drop_reasons.push_back("relation match names unknown edge: {" +
                                    rm->source_entity + ", " + rm->target_entity + "}");
        continue;
      }
      const auto* rel = vg.find_relation(rm->relation_id);
      if (!rel) {
        frag.drop_reasons.push_back("relation match names unknown relation: " +
                                    rm->relation_id);
        continue;
      }
      const auto* subj = vg.find_object(rel->subject_id);
      const auto* obj = vg.find_object(rel->object_id);
      if (!subj || !obj) {
        frag.drop_reasons.push_back(rm->relation_id + ": unresolved relation endpoint");
        continue;
      }
      attach(it->second.regions, {vg.image_id, scenegraph::bbox_union(subj->bbox, obj->bbox)},
             rm->strength);
    }
  }
}

void merge_into(MultimodalKG& dst, const MultimodalKG& src) {
  for (const auto& [name, n] : src.nodes) {
    MMEntity& node = dst.nodes[name];
    node.name = name;
    if (node.entity_type.empty() ||
        (!n.entity_type.empty() && n.entity_type < node.entity_type))
      node.entity_type = n.entity_type;
    for (const auto& [txt, seg] : n.descriptions) {
      auto [it, inserted] = node.descriptions.emplace(txt, seg);
      if (!inserted && seg < it->second) it->second = seg;
    }
    for (const auto& [key, strength] : n.regions) attach(node.regions, key, strength);
    node.source_segments.insert(n.source_segments.begin(), n.source_segments.end());
  }
  for (const auto& [key, e] : src.edges) {
    auto [it, inserted] = dst.edges.try_emplace(key);
    MMEdge& edge = it->second;
    if (inserted) {
      // Display orientation follows the canonical key so merge order cannot
      // change the result.
      edge.source = key.first;
      edge.target = key.second;
    }
    for (const auto& [txt, seg] : e.descriptions) {
      auto [dit, dins] = edge.descriptions.emplace(txt, seg);
      if (!dins && seg < dit->second) dit->second = seg;
    }
    edge.strength = std::max(edge.strength, e.strength);
    for (const auto& [rkey, strength] : e.regions) attach(edge.regions, rkey, strength);
    edge.source_segments.insert(e.source_segments.begin(), e.source_segments.end());
  }
  dst.dangling_dropped += src.dangling_dropped;
}

MultimodalKG aggregate_document_graph(const std::vector<MultimodalKG>& fragments,
                                      const std::string& doc_id) {
  MultimodalKG kg;
  kg.doc_id = doc_id;
  for (const auto& frag : fragments) merge_into(kg, frag);
  return kg;
}

namespace {

json region_to_json(const RegionKey& key, double strength) {
  json j = {{"image_id", key.image_id}, {"strength", strength}};
  if (key.region) {
    j["bbox"] = {key.region->x1, key.region->y1, key.region->x2, key.region->y2};
  } else {
    j["whole_image"] = true;
  }
  return j;
}

std::pair<RegionKey, double> region_from_json(const json& j) {
  RegionKey key;
  key.image_id = j.at("image_id").get<std::string>();
  if (j.contains("bbox")) {
    const auto& b = j["bbox"];
    key.region = scenegraph::BBox{b[0].get<double>(), b[1].get<double>(),
                                  b[2].get<double>(), b[3].get<double>()};
  }
  return {key, j.at("strength").get<double>()};
}

json descriptions_to_json(const std::map<std::string, std::string>& descs) {
  json arr = json::array();
  for (const auto& [txt, seg] : descs) arr.push_back({{"text", txt}, {"segment_id", seg}});
  return arr;
}

}  // namespace

std::string to_json(const MultimodalKG& kg) {
  json j;
  j["doc_id"] = kg.doc_id;
  j["nodes"] = json::array();
  for (const auto& [name, n] : kg.nodes) {
    json jn = {{"name", name},
               {"entity_type", n.entity_type},
               {"descriptions", descriptions_to_json(n.descriptions)},
               {"regions", json::array()},
               {"source_segments", n.source_segments}};
    for (const auto& [key, strength] : n.regions)
      jn["regions"].push_back(region_to_json(key, strength));
    j["nodes"].push_back(std::move(jn));
  }
  j["edges"] = json::array();
  for (const auto& [key, e] : kg.edges) {
    json je = {{"source", e.source},
               {"target", e.target},
               {"descriptions", descriptions_to_json(e.descriptions)},
               {"strength", e.strength},
               {"regions", json::array()},
               {"source_segments", e.source_segments}};
    for (const auto& [rkey, strength] : e.regions)
      je["regions"].push_back(region_to_json(rkey, strength));
    j["edges"].push_back(std::move(je));
  }
  return j.dump(2);
}

std::string MultimodalKG::canonical_json() const { return to_json(*this); }

MultimodalKG from_json(const std::string& content) {
  json j = json::parse(content);
  MultimodalKG kg;
  kg.doc_id = j.value("doc_id", std::string{});
  for (const auto& jn : j.value("nodes", json::array())) {
    MMEntity n;
    n.name = jn.at("name").get<std::string>();
    n.entity_type = jn.value("entity_type", std::string{});
    for (const auto& jd : jn.value("descriptions", json::array()))
      n.descriptions[jd.at("text").get<std::string>()] =
          jd.at("segment_id").get<std::string>();
    for (const auto& jr : jn.value("regions", json::array())) {
      auto [key, strength] = region_from_json(jr);
      n.regions[key] = strength;
    }
    for (const auto& js : jn.value("source_segments", json::array()))
      n.source_segments.insert(js.get<std::string>());
    kg.nodes[n.name] = std::move(n);
  }
  for (const auto& je : j.value("edges", json::array())) {
    MMEdge e;
    e.source = je.at("source").get<std::string>();
    e.target = je.at("target").get<std::string>();
    e.strength = je.value("strength", 0.0);
    for (const auto& jd : je.value("descriptions", json::array()))
      e.descriptions[jd.at("text").get<std::string>()] =
          jd.at("segment_id").get<std::string>();
    for (const auto& jr : je.value("regions", json::array())) {
      auto [key, strength] = region_from_json(jr);
      e.regions[key] = strength;
    }
    for (const auto& js : je.value("source_segments", json::array()))
      e.source_segments.insert(js.get<std::string>());
    kg.edges[make_edge_key(e.source, e.target)] = std::move(e);
  }
  return kg;
}

void save_kg(const MultimodalKG& kg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write KG file: " + path);
  out << to_json(kg);
}

MultimodalKG load_kg(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read KG file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace mkgrag::fusion

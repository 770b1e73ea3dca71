#include "mkgrag/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mkgrag/text.hpp"

namespace mkgrag::retrieval {

using nlohmann::json;

std::string entity_element_id(const std::string& name) { return "entity:" + name; }

std::string edge_element_id(const fusion::EdgeKey& key) {
  return "edge:" + key.first + "|" + key.second;
}

namespace {

bool is_entity_id(const std::string& element_id) {
  return element_id.rfind("entity:", 0) == 0;
}

fusion::EdgeKey parse_edge_id(const std::string& element_id) {
  std::string rest = element_id.substr(5);  // "edge:"
  auto bar = rest.find('|');
  return {rest.substr(0, bar), rest.substr(bar + 1)};
}

}  // namespace

const fusion::MMEntity* ComposedGraph::find_entity(const std::string& element_id) const {
  if (!is_entity_id(element_id)) return nullptr;
  auto it = graph.nodes.find(element_id.substr(7));
  return it == graph.nodes.end() ? nullptr : &it->second;
}

const fusion::MMEdge* ComposedGraph::find_edge(const std::string& element_id) const {
  if (element_id.rfind("edge:", 0) != 0) return nullptr;
  auto it = graph.edges.find(parse_edge_id(element_id));
  return it == graph.edges.end() ? nullptr : &it->second;
}

std::vector<std::string> ComposedGraph::element_ids() const {
  std::vector<std::string> ids;
  for (const auto& [name, _] : graph.nodes) ids.push_back(entity_element_id(name));
  for (const auto& [key, _] : graph.edges) ids.push_back(edge_element_id(key));
  return ids;
}

void SegmentStore::add(StoredSegment seg) {
  by_doc_[seg.doc_id].push_back(seg.segment_id);
  segments_[seg.segment_id] = std::move(seg);
}

const StoredSegment* SegmentStore::find(const std::string& segment_id) const {
  auto it = segments_.find(segment_id);
  return it == segments_.end() ? nullptr : &it->second;
}

std::vector<std::string> SegmentStore::segments_of(const std::string& doc_id) const {
  auto it = by_doc_.find(doc_id);
  return it == by_doc_.end() ? std::vector<std::string>{} : it->second;
}

void SegmentStore::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write segment store: " + path);
  for (const auto& [_, seg] : segments_) {
    json j = {{"segment_id", seg.segment_id},
              {"doc_id", seg.doc_id},
              {"text", seg.text},
              {"image_ids", seg.image_ids}};
    out << j.dump() << "\n";
  }
}

SegmentStore SegmentStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read segment store: " + path);
  SegmentStore store;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    json j = json::parse(line);
    StoredSegment seg;
    seg.segment_id = j.at("segment_id").get<std::string>();
    seg.doc_id = j.at("doc_id").get<std::string>();
    seg.text = j.at("text").get<std::string>();
    for (const auto& ji : j.value("image_ids", json::array()))
      seg.image_ids.push_back(ji.get<std::string>());
    store.add(std::move(seg));
  }
  return store;
}

backends::EmbeddingVector embed_query(backends::EmbeddingBackend& backend,
                                      const Query& query, int dim) {
  if (text::trim(query.question).empty())
    throw std::invalid_argument("empty question");
  backends::EmbeddingRequest req;
  req.role = backends::Role::Query;
  req.dim = dim;
  if (!query.image_id.empty())
    req.parts.push_back({backends::Part::Kind::Image, query.image_id});
  req.parts.push_back({backends::Part::Kind::Text, query.question});
  return backend.embed(req);
}

namespace {

void append_region_parts(const std::map<fusion::RegionKey, double>& regions,
                         std::vector<backends::Part>& parts) {
  std::set<std::string> image_ids;
  for (const auto& [key, _] : regions) image_ids.insert(key.image_id);
  for (const auto& id : image_ids) parts.push_back({backends::Part::Kind::Image, id});
}

}  // namespace

backends::EmbeddingVector embed_entity(backends::EmbeddingBackend& backend,
                                       const fusion::MMEntity& entity, int dim) {
  std::string content = entity.name;
  if (!entity.entity_type.empty()) content += " " + entity.entity_type;
  for (const auto& [txt, _] : entity.descriptions) content += " " + txt;
  backends::EmbeddingRequest req;
  req.role = backends::Role::Evidence;
  req.dim = dim;
  req.parts.push_back({backends::Part::Kind::Text, std::move(content)});
  append_region_parts(entity.regions, req.parts);
  return backend.embed(req);
}

backends::EmbeddingVector embed_edge(backends::EmbeddingBackend& backend,
                                     const fusion::MMEdge& edge, int dim) {
  std::string content = edge.source + " " + edge.target;
  for (const auto& [txt, _] : edge.descriptions) content += " " + txt;
  backends::EmbeddingRequest req;
  req.role = backends::Role::Evidence;
  req.dim = dim;
  req.parts.push_back({backends::Part::Kind::Text, std::move(content)});
  append_region_parts(edge.regions, req.parts);
  return backend.embed(req);
}

Engine::Engine(std::shared_ptr<index::VectorIndex> idx, std::string kg_dir,
               std::shared_ptr<SegmentStore> segments,
               std::shared_ptr<backends::EmbeddingBackend> embedder)
    : index_(std::move(idx)),
      kg_dir_(std::move(kg_dir)),
      segments_(std::move(segments)),
      embedder_(std::move(embedder)) {}

std::vector<index::ScoredHit> Engine::retrieve_documents(const Query& query,
                                                         std::size_t k_d) const {
  if (index_->size(index::Kind::Document) == 0)
    throw std::runtime_error("document index is empty");
  auto qvec = embed_query(*embedder_, query, index_->dim());
  return index_->search_topk(qvec, index::Kind::Document, k_d);
}

ComposedGraph Engine::compose_query_graph(const std::vector<std::string>& doc_ids) const {
  std::set<std::string> unique_ids(doc_ids.begin(), doc_ids.end());
  ComposedGraph composed;
  for (const auto& doc_id : unique_ids) {
    std::string path = kg_dir_ + "/" + doc_id + ".json";
    std::ifstream probe(path);
    if (!probe) throw std::runtime_error("missing KG for document: " + doc_id);
    fusion::merge_into(composed.graph, fusion::load_kg(path));
  }
  return composed;
}

std::vector<ScoredElement> Engine::rank_elements(const Query& query,
                                                 const ComposedGraph& g) const {
  if (g.graph.nodes.empty() && g.graph.edges.empty()) return {};
  auto qvec = embed_query(*embedder_, query, index_->dim());
  std::vector<ScoredElement> ranked;
  for (const auto& [name, entity] : g.graph.nodes) {
    auto v = embed_entity(*embedder_, entity, index_->dim());
    ranked.push_back({entity_element_id(name), index::cosine_similarity(qvec, v), 0});
  }
  for (const auto& [key, edge] : g.graph.edges) {
    auto v = embed_edge(*embedder_, edge, index_->dim());
    ranked.push_back({edge_element_id(key), index::cosine_similarity(qvec, v), 0});
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredElement& a, const ScoredElement& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.element_id < b.element_id;
  });
  return ranked;
}

std::vector<ScoredElement> Engine::score_elements(const Query& query, const ComposedGraph& g,
                                                  std::size_t k_g) const {
  auto ranked = rank_elements(query, g);
  if (ranked.size() > k_g) ranked.resize(k_g);
  return ranked;
}

RetrievedSubgraph Engine::expand_subgraph(const ComposedGraph& g,
                                          const std::vector<ScoredElement>& seeds, int l,
                                          const Query& query, double rho) const {
  if (l < 0) throw std::invalid_argument("hop budget must be >= 0");
  RetrievedSubgraph result;
  result.seeds = seeds;
  result.l = l;
  if (seeds.empty()) return result;

  double s_min = seeds.front().score;
  for (const auto& s : seeds) s_min = std::min(s_min, s.score);
  double threshold = rho * s_min;

  auto qvec = embed_query(*embedder_, query, index_->dim());
  std::map<std::string, double> score_cache;
  auto score_of = [&](const std::string& element_id) {
    auto it = score_cache.find(element_id);
    if (it != score_cache.end()) return it->second;
    double s;
    if (const auto* entity = g.find_entity(element_id)) {
      s = index::cosine_similarity(qvec, embed_entity(*embedder_, *entity, index_->dim()));
    } else if (const auto* edge = g.find_edge(element_id)) {
      s = index::cosine_similarity(qvec, embed_edge(*embedder_, *edge, index_->dim()));
    } else {
      throw std::invalid_argument("seed not in composed graph: " + element_id);
    }
    score_cache[element_id] = s;
    return s;
  };

  // name -> incident edge keys, deterministic order.
  std::map<std::string, std::vector<fusion::EdgeKey>> adjacency;
  for (const auto& [key, _] : g.graph.edges) {
    adjacency[key.first].push_back(key);
    adjacency[key.second].push_back(key);
  }

  std::map<std::string, ScoredElement> included;
  for (const auto& s : seeds) {
    if (!g.find_entity(s.element_id) && !g.find_edge(s.element_id))
      throw std::invalid_argument("seed not in composed graph: " + s.element_id);
    included[s.element_id] = {s.element_id, s.score, 0};
  }

  // Entity frontier for the next hop, processed in (score desc, id asc) order.
  std::vector<ScoredElement> frontier;
  for (const auto& s : seeds)
    if (is_entity_id(s.element_id)) frontier.push_back({s.element_id, s.score, 0});

  auto sort_frontier = [](std::vector<ScoredElement>& f) {
    std::sort(f.begin(), f.end(), [](const ScoredElement& a, const ScoredElement& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.element_id < b.element_id;
    });
  };

  for (int hop = 1; hop <= l; ++hop) {
    std::vector<ScoredElement> next_frontier;
    auto admit_entity = [&](const std::string& name) {
      std::string id = entity_element_id(name);
      if (included.count(id)) return;
      double s = score_of(id);
      if (s < threshold) return;
      included[id] = {id, s, hop};
      next_frontier.push_back({id, s, hop});
    };

    if (hop == 1) {
      // Endpoints of seed edges are one hop out.
      for (const auto& s : seeds) {
        if (is_entity_id(s.element_id)) continue;
        auto key = parse_edge_id(s.element_id);
        admit_entity(key.first);
        admit_entity(key.second);
      }
    }

    sort_frontier(frontier);
    for (const auto& from : frontier) {
      std::string name = from.element_id.substr(7);
      auto adj = adjacency.find(name);
      if (adj == adjacency.end()) continue;
      for (const auto& key : adj->second) {
        std::string edge_id = edge_element_id(key);
        if (!included.count(edge_id)) {
          double s = score_of(edge_id);
          if (s < threshold) continue;
          included[edge_id] = {edge_id, s, hop};
        }
        admit_entity(key.first == name ? key.second : key.first);
      }
    }
    frontier = std::move(next_frontier);
    if (frontier.empty()) break;
  }

  for (const auto& [_, elem] : included) result.expansion.push_back(elem);
  std::sort(result.expansion.begin(), result.expansion.end(),
            [](const ScoredElement& a, const ScoredElement& b) {
              if (a.hop != b.hop) return a.hop < b.hop;
              if (a.score != b.score) return a.score > b.score;
              return a.element_id < b.element_id;
            });
  return result;
}

namespace {

std::string join_descriptions(const std::map<std::string, std::string>& descs) {
  std::string out;
  for (const auto& [txt, _] : descs) {
    if (!out.empty()) out += "; ";
    out += txt;
  }
  return out;
}

}  // namespace

AssembledContext Engine::assemble_context(const RetrievedSubgraph& sub,
                                          const ComposedGraph& g,
                                          std::size_t budget) const {
  if (budget < 1) throw std::invalid_argument("context budget must be >= 1");

  std::set<std::string> seed_ids;
  for (const auto& s : sub.seeds) seed_ids.insert(s.element_id);

  struct Line {
    std::string text;
    double score;
    bool is_seed;
    bool is_entity;
    std::string element_id;
  };
  std::vector<Line> lines;
  for (const auto& elem : sub.expansion) {
    Line line;
    line.score = elem.score;
    line.is_seed = seed_ids.count(elem.element_id) > 0;
    line.element_id = elem.element_id;
    if (const auto* entity = g.find_entity(elem.element_id)) {
      line.is_entity = true;
      line.text = entity->name + " (" + entity->entity_type +
                  "): " + join_descriptions(entity->descriptions);
    } else if (const auto* edge = g.find_edge(elem.element_id)) {
      line.is_entity = false;
      line.text = edge->source + " -> " + edge->target + ": " +
                  join_descriptions(edge->descriptions);
    } else {
      throw std::invalid_argument("element not in composed graph: " + elem.element_id);
    }
    lines.push_back(std::move(line));
  }
  // Entities first, then relationships; score desc, id asc within each.
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    if (a.is_entity != b.is_entity) return a.is_entity;
    if (a.score != b.score) return a.score > b.score;
    return a.element_id < b.element_id;
  });

  auto line_tokens = [](const Line& l) { return text::count_words(l.text); };
  std::size_t seed_tokens = 0;
  for (const auto& l : lines)
    if (l.is_seed) seed_tokens += line_tokens(l);
  if (seed_tokens > budget)
    throw std::runtime_error("budget below seed outline");

  // Drop non-seed graph lines, lowest score first, until the outline fits.
  std::size_t graph_tokens = 0;
  for (const auto& l : lines) graph_tokens += line_tokens(l);
  if (graph_tokens > budget) {
    std::vector<std::size_t> droppable;
    for (std::size_t i = 0; i < lines.size(); ++i)
      if (!lines[i].is_seed) droppable.push_back(i);
    std::sort(droppable.begin(), droppable.end(), [&](std::size_t a, std::size_t b) {
      if (lines[a].score != lines[b].score) return lines[a].score < lines[b].score;
      return lines[a].element_id > lines[b].element_id;
    });
    std::set<std::size_t> dropped;
    for (std::size_t i : droppable) {
      if (graph_tokens <= budget) break;
      graph_tokens -= line_tokens(lines[i]);
      dropped.insert(i);
    }
    std::vector<Line> kept;
    for (std::size_t i = 0; i < lines.size(); ++i)
      if (!dropped.count(i)) kept.push_back(std::move(lines[i]));
    lines = std::move(kept);
  }

  AssembledContext ctx;
  std::map<std::string, double> retained_elements;  // surviving the budget cut
  for (const auto& l : lines) {
    ctx.graph_block += "- " + l.text + "\n";
    retained_elements[l.element_id] = l.score;
  }
  ctx.token_count = graph_tokens;

  // Segments cited by retained elements, ordered by the best contributing
  // element score.
  std::map<std::string, double> segment_scores;
  for (const auto& [element_id, score] : retained_elements) {
    const std::set<std::string>* segs = nullptr;
    if (const auto* entity = g.find_entity(element_id))
      segs = &entity->source_segments;
    else if (const auto* edge = g.find_edge(element_id))
      segs = &edge->source_segments;
    if (!segs) continue;
    for (const auto& seg_id : *segs) {
      auto [it, inserted] = segment_scores.emplace(seg_id, score);
      if (!inserted) it->second = std::max(it->second, score);
    }
  }
  std::vector<std::pair<std::string, double>> ordered(segment_scores.begin(),
                                                      segment_scores.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  for (const auto& [seg_id, _] : ordered) {
    const StoredSegment* seg = segments_->find(seg_id);
    if (!seg) continue;
    std::string entry = "[" + seg_id + "] " + seg->text + "\n";
    std::size_t n = text::count_words(entry);
    if (ctx.token_count + n > budget) break;  // whole-segment truncation, tail first
    ctx.segment_block += entry;
    ctx.segment_ids.push_back(seg_id);
    ctx.token_count += n;
  }
  return ctx;
}

}  // namespace mkgrag::retrieval

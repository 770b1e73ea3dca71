#include "mkgrag/builder.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mkgrag/fusion.hpp"
#include "mkgrag/scenegraph.hpp"

namespace mkgrag::builder {

namespace fs = std::filesystem;

namespace {

std::optional<std::string> read_sidecar(const std::string& dir, const std::string& image_id) {
  if (dir.empty()) return std::nullopt;
  fs::path path = fs::path(dir) / (image_id + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

extraction::PromptParts default_matching_prompt(const corpus::ImageAsset& image,
                                                const extraction::TextualGraphView& tg,
                                                const scenegraph::VisualGraph& vg) {
  extraction::PromptParts parts;
  parts.push_back({extraction::PromptPart::Kind::Text,
                   "Match visual objects and relations in the image with the textual "
                   "entities and relationships below.\n"});
  parts.push_back({extraction::PromptPart::Kind::Image, image.image_id});
  std::string text_graph;
  for (const auto& e : tg.entities) text_graph += extraction::serialize_entity(e) + "\n";
  for (const auto& r : tg.relationships)
    text_graph += extraction::serialize_relationship(r) + "\n";
  parts.push_back({extraction::PromptPart::Kind::Text, std::move(text_graph)});
  parts.push_back({extraction::PromptPart::Kind::Text,
                   scenegraph::render_scene_graph_block(vg)});
  return parts;
}

backends::ChatRequest to_chat_request(const std::string& template_id,
                                      const extraction::PromptParts& parts) {
  backends::ChatRequest req;
  req.template_id = template_id;
  for (const auto& p : parts) {
    req.parts.push_back({p.kind == extraction::PromptPart::Kind::Text
                             ? backends::Part::Kind::Text
                             : backends::Part::Kind::Image,
                         p.value});
  }
  return req;
}

}  // namespace

BuildStats build_kg(const corpus::CorpusHandle& handle, backends::ChatBackend& extractor,
                    const BuildOptions& options, const std::string& out_dir,
                    const std::string& segments_path) {
  fs::create_directories(out_dir);
  BuildStats stats;
  retrieval::SegmentStore store;

  for (const auto& doc : handle.documents()) {
    auto segments = corpus::segment_document(doc, options.chunk_policy);
    std::vector<fusion::MultimodalKG> fragments;

    for (const auto& seg : segments) {
      store.add({seg.segment_id, seg.doc_id, seg.text, seg.image_ids});

      backends::ChatRequest extract_req;
      if (options.extract_template) {
        extract_req = to_chat_request(
            "extract", options.extract_template->render({{"INPUT", seg.text}}, ""));
      } else {
        extract_req.template_id = "extract";
        extract_req.parts.push_back({backends::Part::Kind::Text, seg.text});
      }
      auto batch = extraction::parse_records(extractor.chat_complete(extract_req));
      stats.rejects += batch.rejects.size();

      auto frag = fusion::build_textual_subgraph(batch, seg.segment_id);

      for (const auto& image : corpus::resolve_images(seg, handle)) {
        auto sidecar = read_sidecar(options.scenegraph_dir, image.image_id);
        if (!sidecar) continue;
        auto vg = scenegraph::ingest_scene_graph(*sidecar, image.image_id);
        extraction::TextualGraphView tg{batch.entities, batch.relationships};
        auto parts = options.matching_template
                         ? extraction::render_matching_prompt(*options.matching_template,
                                                              image, tg, vg, {})
                         : default_matching_prompt(image, tg, vg);
        auto matches =
            extraction::parse_records(extractor.chat_complete(to_chat_request("match", parts)))
                .matches;
        fusion::apply_matchings(frag, matches, vg);
      }
      fragments.push_back(std::move(frag));
    }

    auto kg = fusion::aggregate_document_graph(fragments, doc.doc_id);
    fusion::save_kg(kg, (fs::path(out_dir) / (doc.doc_id + ".json")).string());
    ++stats.documents;
    stats.segments += segments.size();
    stats.nodes += kg.nodes.size();
    stats.edges += kg.edges.size();
  }
  store.save(segments_path);
  return stats;
}

IndexStats embed_index(const std::string& kg_dir, const retrieval::SegmentStore& segments,
                       backends::EmbeddingBackend& embedder, int dim,
                       index::VectorIndex& out) {
  IndexStats stats;
  std::vector<index::IndexEntry> entries;

  std::vector<fs::path> kg_files;
  for (const auto& entry : fs::directory_iterator(kg_dir))
    if (entry.path().extension() == ".json") kg_files.push_back(entry.path());
  std::sort(kg_files.begin(), kg_files.end());

  for (const auto& path : kg_files) {
    auto kg = fusion::load_kg(path.string());
    const std::string& doc_id = kg.doc_id;

    // Document vector: all segment texts plus image refs, evidence role.
    backends::EmbeddingRequest doc_req;
    doc_req.role = backends::Role::Evidence;
    doc_req.dim = dim;
    std::string doc_text;
    for (const auto& seg_id : segments.segments_of(doc_id)) {
      const auto* seg = segments.find(seg_id);
      doc_text += seg->text + "\n";
      backends::EmbeddingRequest seg_req;
      seg_req.role = backends::Role::Evidence;
      seg_req.dim = dim;
      seg_req.parts.push_back({backends::Part::Kind::Text, seg->text});
      for (const auto& img : seg->image_ids)
        seg_req.parts.push_back({backends::Part::Kind::Image, img});
      entries.push_back({seg_id, index::Kind::Segment, embedder.embed(seg_req), doc_id});
      ++stats.segments;
    }
    doc_req.parts.push_back({backends::Part::Kind::Text, std::move(doc_text)});
    entries.push_back({doc_id, index::Kind::Document, embedder.embed(doc_req), doc_id});
    ++stats.documents;

    for (const auto& [name, node] : kg.nodes) {
      entries.push_back({doc_id + "/" + retrieval::entity_element_id(name),
                         index::Kind::Entity,
                         retrieval::embed_entity(embedder, node, dim), doc_id});
      ++stats.entities;
    }
    for (const auto& [key, edge] : kg.edges) {
      entries.push_back({doc_id + "/" + retrieval::edge_element_id(key), index::Kind::Edge,
                         retrieval::embed_edge(embedder, edge, dim), doc_id});
      ++stats.edges;
    }
  }
  auto result = out.upsert(entries);
  if (!result.errors.empty())
    throw std::runtime_error("embed_index: " + result.errors.front());
  return stats;
}

}  // namespace mkgrag::builder

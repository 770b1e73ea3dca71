#pragma once
#include <optional>
#include <string>

#include "mkgrag/backends.hpp"
#include "mkgrag/corpus.hpp"
#include "mkgrag/extraction.hpp"
#include "mkgrag/index.hpp"
#include "mkgrag/retrieval.hpp"

namespace mkgrag::builder {

struct BuildOptions {
  corpus::ChunkPolicy chunk_policy;
  // Directory of per-image scene-graph sidecars (<image_id>.json); empty
  // disables vision-text matching.
  std::string scenegraph_dir;
  // Optional templates; minimal built-in prompts are used when absent. The
  // extraction template sees the segment text as {INPUT}.
  std::optional<extraction::PromptTemplate> matching_template;
  std::optional<extraction::PromptTemplate> extract_template;
};

struct BuildStats {
  std::size_t documents = 0;
  std::size_t segments = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t rejects = 0;
};

// Runs segmentation, textual extraction, vision-text matching, and
// per-document aggregation; writes <out_dir>/<doc_id>.json KG files and the
// segment store to segments_path.
BuildStats build_kg(const corpus::CorpusHandle& handle, backends::ChatBackend& extractor,
                    const BuildOptions& options, const std::string& out_dir,
                    const std::string& segments_path);

struct IndexStats {
  std::size_t documents = 0;
  std::size_t segments = 0;
  std::size_t entities = 0;
  std::size_t edges = 0;
};

// Embeds documents, segments, and per-document graph elements into a fresh
// index (entity/edge ids are "<doc_id>/entity:..." style).
IndexStats embed_index(const std::string& kg_dir, const retrieval::SegmentStore& segments,
                       backends::EmbeddingBackend& embedder, int dim,
                       index::VectorIndex& out);

}  // namespace mkgrag::builder

#pragma once
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mkgrag::corpus {

struct ImageAsset {
  std::string image_id;
  std::string uri;
  std::optional<std::string> caption;
};

struct Section {
  std::string heading;
  std::string text;
  std::vector<std::string> image_ids;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::vector<Section> sections;
  std::vector<ImageAsset> images;

  const ImageAsset* find_image(const std::string& image_id) const;
};

struct Segment {
  std::string doc_id;
  std::string segment_id;  // "<doc_id>#<k>"
  std::string text;
  std::vector<std::string> image_ids;
  std::vector<std::size_t> source_sections;
};

struct ChunkPolicy {
  std::size_t max_tokens = 512;
  std::size_t min_tokens = 64;
};

struct LoadIssue {
  std::size_t line = 0;
  std::string reason;
};

// Immutable after load; safe for concurrent readers.
class CorpusHandle {
 public:
  const std::vector<Document>& documents() const { return docs_; }
  const std::vector<LoadIssue>& issues() const { return issues_; }
  const Document* find(const std::string& doc_id) const;

 private:
  friend CorpusHandle load_corpus(const std::string& path);
  friend CorpusHandle load_corpus_from_string(const std::string& content);
  std::vector<Document> docs_;
  std::vector<LoadIssue> issues_;
};

// One JSON document per line: {doc_id, title, sections[], images[]}.
// Malformed documents are rejected with line numbers; loading continues.
CorpusHandle load_corpus(const std::string& path);
CorpusHandle load_corpus_from_string(const std::string& content);

// The text a section contributes to its segments ("heading: body" when a
// heading is present).
std::string section_chunk_text(const Section& sec);

std::vector<Segment> segment_document(const Document& doc, const ChunkPolicy& policy);

std::vector<ImageAsset> resolve_images(const Segment& seg, const CorpusHandle& corpus);

}  // namespace mkgrag::corpus

#include "mkgrag/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "mkgrag/text.hpp"

namespace mkgrag::corpus {

using nlohmann::json;

const ImageAsset* Document::find_image(const std::string& image_id) const {
  for (const auto& img : images)
    if (img.image_id == image_id) return &img;
  return nullptr;
}

const Document* CorpusHandle::find(const std::string& doc_id) const {
  for (const auto& d : docs_)
    if (d.doc_id == doc_id) return &d;
  return nullptr;
}

namespace {

// Returns the rejection reason, or empty on success.
std::string parse_document(const json& j, Document& doc) {
  if (!j.is_object()) return "document is not an object";
  if (!j.contains("doc_id") || !j["doc_id"].is_string() || j["doc_id"].get<std::string>().empty())
    return "missing doc_id";
  doc.doc_id = j["doc_id"].get<std::string>();
  doc.title = j.value("title", std::string{});

  std::unordered_set<std::string> image_ids;
  for (const auto& ji : j.value("images", json::array())) {
    ImageAsset img;
    if (!ji.contains("image_id") || !ji["image_id"].is_string())
      return "image without image_id";
    img.image_id = ji["image_id"].get<std::string>();
    if (!image_ids.insert(img.image_id).second)
      return "duplicate image id: " + img.image_id;
    img.uri = ji.value("uri", std::string{});
    if (ji.contains("caption") && ji["caption"].is_string())
      img.caption = ji["caption"].get<std::string>();
    doc.images.push_back(std::move(img));
  }

  for (const auto& js : j.value("sections", json::array())) {
    Section sec;
    sec.heading = js.value("heading", std::string{});
    sec.text = js.value("text", std::string{});
    if (text::collapse_whitespace(sec.text).empty()) return "empty section text";
    for (const auto& jid : js.value("image_ids", json::array())) {
      if (!jid.is_string()) return "non-string image ref";
      std::string id = jid.get<std::string>();
      if (!image_ids.count(id)) return "dangling image ref: " + id;
      sec.image_ids.push_back(std::move(id));
    }
    doc.sections.push_back(std::move(sec));
  }
  return {};
}

void load_from_stream(std::istream& in, std::vector<Document>& docs,
                      std::vector<LoadIssue>& issues) {
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      issues.push_back({lineno, "invalid JSON"});
      continue;
    }
    Document doc;
    std::string reason = parse_document(j, doc);
    if (!reason.empty()) {
      issues.push_back({lineno, reason});
      continue;
    }
    if (!seen_ids.insert(doc.doc_id).second) {
      issues.push_back({lineno, "duplicate doc_id: " + doc.doc_id});
      continue;
    }
    docs.push_back(std::move(doc));
  }
}

// Greedy sentence packing; a single sentence above the budget falls back to
// whitespace splits.
std::vector<std::string> split_to_budget(const std::string& chunk, std::size_t max_tokens) {
  std::vector<std::string> pieces;
  std::string cur;
  std::size_t cur_tokens = 0;
  auto flush = [&] {
    if (!cur.empty()) {
      pieces.push_back(cur);
      cur.clear();
      cur_tokens = 0;
    }
  };
  for (const auto& sent : text::sentences(chunk)) {
    std::size_t n = text::count_words(sent);
    if (n > max_tokens) {
      flush();
      auto ws = text::words(sent);
      for (std::size_t i = 0; i < ws.size(); i += max_tokens) {
        std::string piece;
        for (std::size_t k = i; k < std::min(i + max_tokens, ws.size()); ++k) {
          if (!piece.empty()) piece += ' ';
          piece += ws[k];
        }
        pieces.push_back(std::move(piece));
      }
      continue;
    }
    if (cur_tokens + n > max_tokens) flush();
    if (!cur.empty()) cur += ' ';
    cur += sent;
    cur_tokens += n;
  }
  flush();
  return pieces;
}

}  // namespace

CorpusHandle load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  CorpusHandle handle;
  load_from_stream(in, handle.docs_, handle.issues_);
  return handle;
}

CorpusHandle load_corpus_from_string(const std::string& content) {
  std::istringstream in(content);
  CorpusHandle handle;
  load_from_stream(in, handle.docs_, handle.issues_);
  return handle;
}

std::string section_chunk_text(const Section& sec) {
  if (sec.heading.empty()) return sec.text;
  return sec.heading + ": " + sec.text;
}

std::vector<Segment> segment_document(const Document& doc, const ChunkPolicy& policy) {
  if (policy.min_tokens < 1 || policy.max_tokens < policy.min_tokens)
    throw std::invalid_argument("chunk policy requires max_tokens >= min_tokens >= 1");

  std::vector<Segment> segments;
  auto next_id = [&] { return doc.doc_id + "#" + std::to_string(segments.size()); };

  std::string chunk;
  std::size_t chunk_tokens = 0;
  std::vector<std::size_t> chunk_sections;

  auto flush_chunk = [&] {
    if (chunk.empty()) return;
    if (chunk_tokens <= policy.max_tokens) {
      segments.push_back({doc.doc_id, next_id(), chunk, {}, chunk_sections});
    } else {
      for (auto& piece : split_to_budget(chunk, policy.max_tokens))
        segments.push_back({doc.doc_id, next_id(), std::move(piece), {}, chunk_sections});
    }
    chunk.clear();
    chunk_tokens = 0;
    chunk_sections.clear();
  };

  for (std::size_t si = 0; si < doc.sections.size(); ++si) {
    const Section& sec = doc.sections[si];
    std::string sec_text = section_chunk_text(sec);
    if (!sec.image_ids.empty()) {
      // Image-bearing sections stay whole, regardless of size.
      flush_chunk();
      segments.push_back({doc.doc_id, next_id(), sec_text, sec.image_ids, {si}});
      continue;
    }
    std::size_t n = text::count_words(sec_text);
    // Keep merging while the running chunk is under min_tokens, even past
    // the max budget; oversized chunks are split at flush time.
    if (!chunk.empty() && chunk_tokens >= policy.min_tokens &&
        chunk_tokens + n > policy.max_tokens)
      flush_chunk();
    if (!chunk.empty()) chunk += "\n\n";
    chunk += sec_text;
    chunk_tokens += n;
    chunk_sections.push_back(si);
  }
  flush_chunk();
  return segments;
}

std::vector<ImageAsset> resolve_images(const Segment& seg, const CorpusHandle& corpus) {
  const Document* doc = corpus.find(seg.doc_id);
  if (!doc) throw std::runtime_error("segment from unknown document: " + seg.doc_id);
  std::vector<ImageAsset> out;
  for (const auto& id : seg.image_ids) {
    const ImageAsset* img = doc->find_image(id);
    if (!img) throw std::runtime_error("dangling image ref: " + id);
    out.push_back(*img);
  }
  return out;
}

}  // namespace mkgrag::corpus

#pragma once
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mkgrag/corpus.hpp"
#include "mkgrag/scenegraph.hpp"

namespace mkgrag::backends {
class ChatBackend;
}

namespace mkgrag::extraction {

struct TextualEntity {
  std::string name;  // canonical: trimmed, uppercased
  std::string entity_type;
  std::string description;
  bool operator==(const TextualEntity&) const = default;
};

struct TextualRelationship {
  std::string source;  // canonical entity names
  std::string target;
  std::string description;
  double strength = 0;  // [0,10]
  bool operator==(const TextualRelationship&) const = default;
};

struct ImageMatch {
  std::string entity_name;
  double strength = 0;
  bool operator==(const ImageMatch&) const = default;
};
struct ObjectMatch {
  std::string object_id;  // "<object-k>"
  std::string entity_name;
  double strength = 0;
  bool operator==(const ObjectMatch&) const = default;
};
struct RelationMatch {
  std::string relation_id;  // "<relation-k>"
  std::string source_entity;
  std::string target_entity;
  double strength = 0;
  bool operator==(const RelationMatch&) const = default;
};
using MatchRecord = std::variant<ImageMatch, ObjectMatch, RelationMatch>;

struct Reject {
  std::string raw_line;
  std::string reason;
};

struct RecordBatch {
  std::vector<TextualEntity> entities;
  std::vector<TextualRelationship> relationships;
  std::vector<MatchRecord> matches;
  std::vector<Reject> rejects;
  // Relationship indices whose endpoints are not declared as entities in
  // this batch. Fusion drops them.
  std::vector<std::size_t> dangling_relationships;
};

// Total over arbitrary byte strings. Lines that do not look like a record
// frame are ignored; frames with invalid payloads land in rejects.
RecordBatch parse_records(const std::string& raw);

// Emits the plain-quoted normal form; parse_records(serialize_records(b))
// reproduces entities/relationships/matches exactly.
std::string serialize_records(const RecordBatch& batch);

std::string serialize_entity(const TextualEntity& e);
std::string serialize_relationship(const TextualRelationship& r);
std::string serialize_match(const MatchRecord& m);

struct TextualGraphView {
  const std::vector<TextualEntity>& entities;
  const std::vector<TextualRelationship>& relationships;
};

struct PromptPart {
  enum class Kind { Text, Image } kind = Kind::Text;
  std::string value;  // text content, or image id
};
using PromptParts = std::vector<PromptPart>;

// Template file with {PREFIX}/{IMAGE}/{TEXT_GRAPH}/{SCENE_GRAPH}/{EXEMPLARS}
// placeholders; {IMAGE} becomes an image part carrying the asset id.
struct PromptTemplate {
  std::string id;
  std::string body;

  static PromptTemplate load(const std::string& id, const std::string& path);
  PromptParts render(const std::vector<std::pair<std::string, std::string>>& values,
                     const std::string& image_id) const;
};

PromptParts render_matching_prompt(const PromptTemplate& tpl,
                                   const corpus::ImageAsset& image,
                                   const TextualGraphView& tg,
                                   const scenegraph::VisualGraph& vg,
                                   const std::vector<std::string>& exemplars);

std::string reformulate_question(const std::string& question,
                                 backends::ChatBackend& backend);

}  // namespace mkgrag::extraction

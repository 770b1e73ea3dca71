#include "mkgrag/extraction.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mkgrag/backends.hpp"
#include "mkgrag/text.hpp"

namespace mkgrag::extraction {

namespace {

// Splits on unescaped '|'; backslash escapes the next byte.
std::vector<std::string> split_fields(std::string_view s) {
  std::vector<std::string> fields;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\\' && i + 1 < s.size()) {
      cur.push_back(s[++i]);
    } else if (c == '|') {
      fields.push_back(text::trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(text::trim(cur));
  return fields;
}

std::string escape_field(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\\' || c == '|') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

// Strips plain or typographic quoting: "entity", ``entity'', `entity',
// and the UTF-8 curly pair.
std::string strip_quotes(std::string s) {
  auto drop_front = [&](std::string_view q) {
    if (s.rfind(q, 0) == 0) {
      s.erase(0, q.size());
      return true;
    }
    return false;
  };
  auto drop_back = [&](std::string_view q) {
    if (s.size() >= q.size() && s.compare(s.size() - q.size(), q.size(), q) == 0) {
      s.erase(s.size() - q.size());
      return true;
    }
    return false;
  };
  while (drop_front("\"") || drop_front("`") || drop_front("\xe2\x80\x9c")) {
  }
  while (drop_back("\"") || drop_back("'") || drop_back("\xe2\x80\x9d")) {
  }
  return s;
}

bool parse_strength(const std::string& s, double& out) {
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end && *end == '\0' && !s.empty() && std::isfinite(out);
}

bool is_tagged_id(const std::string& s, std::string_view prefix) {
  // "<object-3>", "<relation-12>"
  if (s.size() < prefix.size() + 3) return false;
  if (s.front() != '<' || s.back() != '>') return false;
  if (s.compare(1, prefix.size(), prefix) != 0) return false;
  if (s[1 + prefix.size()] != '-') return false;
  for (std::size_t i = prefix.size() + 2; i + 1 < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

std::string canonical_name(const std::string& s) { return text::to_upper(text::trim(s)); }

}  // namespace

RecordBatch parse_records(const std::string& raw) {
  RecordBatch batch;
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    std::string trimmed = text::trim(line);
    auto open = trimmed.find('(');
    auto close = trimmed.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close <= open)
      continue;
    auto fields = split_fields(std::string_view(trimmed).substr(open + 1, close - open - 1));
    if (fields.size() < 2) continue;
    std::string keyword = text::to_lower(strip_quotes(fields[0]));

    auto reject = [&](std::string reason) {
      batch.rejects.push_back({trimmed, std::move(reason)});
    };

    if (keyword == "entity") {
      if (fields.size() != 4) {
        reject("entity record needs 4 fields");
        continue;
      }
      TextualEntity e{canonical_name(fields[1]), fields[2], fields[3]};
      if (e.name.empty()) {
        reject("empty entity name");
        continue;
      }
      batch.entities.push_back(std::move(e));
    } else if (keyword == "relationship" || keyword == "relation") {
      if (fields.size() != 5) {
        reject("relationship record needs 5 fields");
        continue;
      }
      TextualRelationship r{canonical_name(fields[1]), canonical_name(fields[2]),
                            fields[3], 0};
      if (r.source.empty() || r.target.empty()) {
        reject("empty relationship endpoint");
        continue;
      }
      if (r.source == r.target) {
        reject("self relationship");
        continue;
      }
      if (!parse_strength(fields[4], r.strength)) {
        reject("invalid strength");
        continue;
      }
      if (r.strength < 0 || r.strength > 10) {
        reject("strength out of range");
        continue;
      }
      batch.relationships.push_back(std::move(r));
    } else if (keyword == "matching" || keyword == "mapping") {
      const std::string& ref = fields[1];
      double strength = 0;
      if (ref == "<image>") {
        if (fields.size() != 4) {
          reject("image matching needs 4 fields");
          continue;
        }
        std::string name = canonical_name(fields[2]);
        if (name.empty()) {
          reject("empty entity name");
          continue;
        }
        if (!parse_strength(fields[3], strength)) {
          reject("invalid strength");
          continue;
        }
        if (strength < 0 || strength > 10) {
          reject("strength out of range");
          continue;
        }
        batch.matches.emplace_back(ImageMatch{name, strength});
      } else if (is_tagged_id(ref, "object")) {
        if (fields.size() != 4) {
          reject("object matching needs 4 fields");
          continue;
        }
        std::string name = canonical_name(fields[2]);
        if (name.empty()) {
          reject("empty entity name");
          continue;
        }
        if (!parse_strength(fields[3], strength)) {
          reject("invalid strength");
          continue;
        }
        if (strength < 0 || strength > 10) {
          reject("strength out of range");
          continue;
        }
        batch.matches.emplace_back(ObjectMatch{ref.substr(1, ref.size() - 2), name, strength});
      } else if (is_tagged_id(ref, "relation")) {
        if (fields.size() != 5) {
          reject("relation matching needs 5 fields");
          continue;
        }
        std::string src = canonical_name(fields[2]);
        std::string tgt = canonical_name(fields[3]);
        if (src.empty() || tgt.empty()) {
          reject("empty entity name");
          continue;
        }
        if (!parse_strength(fields[4], strength)) {
          reject("invalid strength");
          continue;
        }
        if (strength < 0 || strength > 10) {
          reject("strength out of range");
          continue;
        }
        batch.matches.emplace_back(
            RelationMatch{ref.substr(1, ref.size() - 2), src, tgt, strength});
      } else {
        reject("unrecognized matching target: " + ref);
      }
    }
    // Other keywords: not a record frame we know; ignored.
  }

  for (std::size_t i = 0; i < batch.relationships.size(); ++i) {
    const auto& r = batch.relationships[i];
    auto declared = [&](const std::string& name) {
      for (const auto& e : batch.entities)
        if (e.name == name) return true;
      return false;
    };
    if (!declared(r.source) || !declared(r.target))
      batch.dangling_relationships.push_back(i);
  }
  return batch;
}

namespace {
std::string format_strength(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::string serialize_entity(const TextualEntity& e) {
  return "(\"entity\"|" + escape_field(e.name) + "|" + escape_field(e.entity_type) +
         "|" + escape_field(e.description) + ")";
}

std::string serialize_relationship(const TextualRelationship& r) {
  return "(\"relationship\"|" + escape_field(r.source) + "|" + escape_field(r.target) +
         "|" + escape_field(r.description) + "|" + format_strength(r.strength) + ")";
}

std::string serialize_match(const MatchRecord& m) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ImageMatch>) {
          return "(\"matching\"|<image>|" + escape_field(v.entity_name) + "|" +
                 format_strength(v.strength) + ")";
        } else if constexpr (std::is_same_v<T, ObjectMatch>) {
          return "(\"matching\"|<" + v.object_id + ">|" + escape_field(v.entity_name) +
                 "|" + format_strength(v.strength) + ")";
        } else {
          return "(\"matching\"|<" + v.relation_id + ">|" + escape_field(v.source_entity) +
                 "|" + escape_field(v.target_entity) + "|" + format_strength(v.strength) +
                 ")";
        }
      },
      m);
}

std::string serialize_records(const RecordBatch& batch) {
  std::string out;
  for (const auto& e : batch.entities) out += serialize_entity(e) + "\n";
  for (const auto& r : batch.relationships) out += serialize_relationship(r) + "\n";
  for (const auto& m : batch.matches) out += serialize_match(m) + "\n";
  return out;
}

PromptTemplate PromptTemplate::load(const std::string& id, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prompt template: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return {id, ss.str()};
}

PromptParts PromptTemplate::render(
    const std::vector<std::pair<std::string, std::string>>& values,
    const std::string& image_id) const {
  std::string expanded = body;
  for (const auto& [key, value] : values) {
    std::string placeholder = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = expanded.find(placeholder, pos)) != std::string::npos) {
      expanded.replace(pos, placeholder.size(), value);
      pos += value.size();
    }
  }
  PromptParts parts;
  const std::string image_ph = "{IMAGE}";
  std::size_t pos = 0;
  while (true) {
    std::size_t at = expanded.find(image_ph, pos);
    std::string chunk = expanded.substr(pos, at == std::string::npos ? at : at - pos);
    if (!chunk.empty()) parts.push_back({PromptPart::Kind::Text, std::move(chunk)});
    if (at == std::string::npos) break;
    parts.push_back({PromptPart::Kind::Image, image_id});
    pos = at + image_ph.size();
  }
  if (parts.empty()) parts.push_back({PromptPart::Kind::Text, ""});
  return parts;
}

PromptParts render_matching_prompt(const PromptTemplate& tpl,
                                   const corpus::ImageAsset& image,
                                   const TextualGraphView& tg,
                                   const scenegraph::VisualGraph& vg,
                                   const std::vector<std::string>& exemplars) {
  std::string text_graph;
  for (const auto& e : tg.entities) text_graph += serialize_entity(e) + "\n";
  for (const auto& r : tg.relationships) text_graph += serialize_relationship(r) + "\n";

  std::string exemplar_block;
  for (const auto& ex : exemplars) exemplar_block += ex + "\n";

  return tpl.render({{"TEXT_GRAPH", text_graph},
                     {"SCENE_GRAPH", scenegraph::render_scene_graph_block(vg)},
                     {"EXEMPLARS", exemplar_block}},
                    image.image_id);
}

std::string reformulate_question(const std::string& question,
                                 backends::ChatBackend& backend) {
  if (text::trim(question).empty()) throw std::invalid_argument("empty question");
  backends::ChatRequest req;
  req.template_id = "reformulate";
  req.parts.push_back({backends::Part::Kind::Text, question});
  return text::trim(backend.chat_complete(req));
}

}  // namespace mkgrag::extraction

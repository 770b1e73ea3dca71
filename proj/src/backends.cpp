#include "mkgrag/backends.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mkgrag/text.hpp"

namespace mkgrag::backends {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

EmbeddingVector mock_embedding(const std::vector<Part>& parts, Role role, int dim) {
  if (dim < 8) throw std::invalid_argument("embedding dim must be >= 8");
  if (parts.empty()) throw std::invalid_argument("embedding request has no parts");

  std::vector<std::string> tokens;
  for (const auto& p : parts) {
    if (p.kind == Part::Kind::Text) {
      for (auto& t : text::alnum_tokens(p.value)) tokens.push_back(std::move(t));
    } else {
      tokens.push_back(p.value);
    }
  }
  tokens.push_back(role == Role::Query ? "#role=query" : "#role=evidence");

  EmbeddingVector v = EmbeddingVector::Zero(dim);
  for (const auto& t : tokens) {
    auto slot = static_cast<int>(fnv1a64(t, kSlotHashSeed) % static_cast<std::uint64_t>(dim));
    float sign = (fnv1a64(t, kSignHashSeed) & 1ull) ? 1.0f : -1.0f;
    v[slot] += sign;
  }
  float norm = v.norm();
  if (norm == 0.0f) {
    v[0] = 1.0f;
    return v;
  }
  return v / norm;
}

ChatFixtureSet ChatFixtureSet::from_json(const std::string& content) {
  json j = json::parse(content);
  ChatFixtureSet set;
  for (auto& [tid, jt] : j.items()) {
    Template t;
    json triggers = jt.value("triggers", json::object());
    for (auto& [trigger, resp] : triggers.items())
      t.triggers[trigger] = resp.get<std::string>();
    if (jt.contains("fallback")) {
      t.fallback = jt["fallback"].get<std::string>();
      t.has_fallback = true;
    }
    set.templates[tid] = std::move(t);
  }
  return set;
}

ChatFixtureSet ChatFixtureSet::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string MockChatBackend::chat_complete(const ChatRequest& req) {
  bool has_text = false;
  for (const auto& p : req.parts)
    if (p.kind == Part::Kind::Text) has_text = true;
  if (!has_text) throw std::invalid_argument("chat request has no text part");

  auto it = fixtures_.templates.find(req.template_id);
  if (it == fixtures_.templates.end())
    throw std::runtime_error("no fixture for template: " + req.template_id);
  const ChatFixtureSet::Template& tpl = it->second;

  for (const auto& p : req.parts) {
    if (p.kind != Part::Kind::Text) continue;
    for (const auto& tok : text::alnum_tokens(p.value)) {
      auto hit = tpl.triggers.find(tok);
      if (hit != tpl.triggers.end()) return hit->second;
    }
  }
  if (tpl.has_fallback) return tpl.fallback;
  throw std::runtime_error("no fixture for template: " + req.template_id);
}

EmbeddingVector MockEmbeddingBackend::embed(const EmbeddingRequest& req) {
  int dim = req.dim > 0 ? req.dim : dim_;
  return mock_embedding(req.parts, req.role, dim);
}

namespace wire {

json parts_to_json(const std::vector<Part>& parts) {
  json arr = json::array();
  for (const auto& p : parts) {
    if (p.kind == Part::Kind::Text)
      arr.push_back({{"text", p.value}});
    else
      arr.push_back({{"image", p.value}});
  }
  return arr;
}

std::vector<Part> parts_from_json(const json& arr) {
  std::vector<Part> parts;
  for (const auto& jp : arr) {
    if (jp.contains("text"))
      parts.push_back({Part::Kind::Text, jp["text"].get<std::string>()});
    else if (jp.contains("image"))
      parts.push_back({Part::Kind::Image, jp["image"].get<std::string>()});
    else
      throw std::runtime_error("part must carry text or image");
  }
  return parts;
}

}  // namespace wire

}  // namespace mkgrag::backends

#pragma once
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mkgrag::backends {

struct Part {
  enum class Kind { Text, Image } kind = Kind::Text;
  std::string value;  // text content or image-ref id
  bool operator==(const Part&) const = default;
};

struct ChatRequest {
  std::string template_id;
  std::vector<Part> parts;
  double temperature = 0.0;
  std::int64_t seed = 0;
};

enum class Role { Query, Evidence };

struct EmbeddingRequest {
  Role role = Role::Evidence;
  std::vector<Part> parts;
  int dim = 256;
};

using EmbeddingVector = Eigen::VectorXf;

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat_complete(const ChatRequest& req) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual EmbeddingVector embed(const EmbeddingRequest& req) = 0;
};

// The normative deterministic construction backing MockEmbeddingBackend:
// lowercase alphanumeric tokens from text parts, image-ref ids and a role
// tag as extra tokens; each token t adds sign(H2(t)) to slot H1(t) % dim
// (H1/H2 are 64-bit FNV-1a with fixed seeds); the sum is L2-normalized
// (zero vector -> e_0).
EmbeddingVector mock_embedding(const std::vector<Part>& parts, Role role, int dim);

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed);
inline constexpr std::uint64_t kSlotHashSeed = 14695981039346656037ull;   // FNV offset basis
inline constexpr std::uint64_t kSignHashSeed = 0x9e3779b97f4a7c15ull;

/// Chat fixtures: per template, trigger token -> canned response, plus an
// optional fallback. The key is the first token of the request's text parts
// that appears in the trigger map.
struct ChatFixtureSet {
  struct Template {
    std::map<std::string, std::string> triggers;
    std::string fallback;
    bool has_fallback = false;
  };
  std::map<std::string, Template> templates;

  static ChatFixtureSet from_json_file(const std::string& path);
  static ChatFixtureSet from_json(const std::string& content);
};

class MockChatBackend : public ChatBackend {
 public:
  explicit MockChatBackend(ChatFixtureSet fixtures) : fixtures_(std::move(fixtures)) {}
  std::string chat_complete(const ChatRequest& req) override;

 private:
  ChatFixtureSet fixtures_;
};

class MockEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit MockEmbeddingBackend(int dim = 256) : dim_(dim) {}
  EmbeddingVector embed(const EmbeddingRequest& req) override;
  int dim() const { return dim_; }

 private:
  int dim_;
};

// Clients for the HTTP wire contract:
//   POST /v1/chat  {template_id, parts[], temperature, seed} -> {text}
//   POST /v1/embed {role, parts[], dim} -> {values[]}
// parts[] entries are {"text": ...} or {"image": ...}.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(std::string base_url) : base_url_(std::move(base_url)) {}
  std::string chat_complete(const ChatRequest& req) override;

 private:
  std::string base_url_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(std::string base_url) : base_url_(std::move(base_url)) {}
  EmbeddingVector embed(const EmbeddingRequest& req) override;

 private:
  std::string base_url_;
};

// In-process server exposing any backend pair over the wire contract.
class BackendServer {
 public:
  BackendServer(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embed);
  ~BackendServer();
  // Binds to 127.0.0.1 on an OS-assigned port; returns the base URL.
  std::string start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mkgrag::backends

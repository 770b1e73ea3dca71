#include "mkgrag/backends.hpp"

#include <stdexcept>
#include <thread>

// httplib pulls in resolv.h, whose _res macro clashes with Eigen internals;
// Eigen must come first via backends.hpp.
#include <httplib.h>
#include <json.hpp>

namespace mkgrag::backends {

using nlohmann::json;

namespace wire {
json parts_to_json(const std::vector<Part>& parts);
std::vector<Part> parts_from_json(const json& arr);
}  // namespace wire

namespace {
std::string role_name(Role r) { return r == Role::Query ? "query" : "evidence"; }
Role role_from_name(const std::string& s) {
  if (s == "query") return Role::Query;
  if (s == "evidence") return Role::Evidence;
  throw std::runtime_error("unknown embedding role: " + s);
}
}  // namespace

std::string HttpChatBackend::chat_complete(const ChatRequest& req) {
  httplib::Client client(base_url_);
  json body = {{"template_id", req.template_id},
               {"parts", wire::parts_to_json(req.parts)},
               {"temperature", req.temperature},
               {"seed", req.seed}};
  auto res = client.Post("/v1/chat", body.dump(), "application/json");
  if (!res) throw std::runtime_error("chat backend unreachable: " + base_url_);
  if (res->status != 200)
    throw std::runtime_error("chat backend error " + std::to_string(res->status) + ": " +
                             res->body);
  return json::parse(res->body).at("text").get<std::string>();
}

EmbeddingVector HttpEmbeddingBackend::embed(const EmbeddingRequest& req) {
  httplib::Client client(base_url_);
  json body = {{"role", role_name(req.role)},
               {"parts", wire::parts_to_json(req.parts)},
               {"dim", req.dim}};
  auto res = client.Post("/v1/embed", body.dump(), "application/json");
  if (!res) throw std::runtime_error("embedding backend unreachable: " + base_url_);
  if (res->status != 200)
    throw std::runtime_error("embedding backend error " + std::to_string(res->status) +
                             ": " + res->body);
  json values = json::parse(res->body).at("values");
  EmbeddingVector v(values.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = values[i].get<float>();
  return v;
}

struct BackendServer::Impl {
  std::shared_ptr<ChatBackend> chat;
  std::shared_ptr<EmbeddingBackend> embed;
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

BackendServer::BackendServer(std::shared_ptr<ChatBackend> chat,
                             std::shared_ptr<EmbeddingBackend> embed)
    : impl_(std::make_unique<Impl>()) {
  impl_->chat = std::move(chat);
  impl_->embed = std::move(embed);

  impl_->server.Post("/v1/chat", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      json body = json::parse(req.body);
      ChatRequest creq;
      creq.template_id = body.at("template_id").get<std::string>();
      creq.parts = wire::parts_from_json(body.at("parts"));
      creq.temperature = body.value("temperature", 0.0);
      creq.seed = body.value("seed", std::int64_t{0});
      res.set_content(json{{"text", impl_->chat->chat_complete(creq)}}.dump(),
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });

  impl_->server.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      json body = json::parse(req.body);
      EmbeddingRequest ereq;
      ereq.role = role_from_name(body.at("role").get<std::string>());
      ereq.parts = wire::parts_from_json(body.at("parts"));
      ereq.dim = body.value("dim", 256);
      EmbeddingVector v = impl_->embed->embed(ereq);
      json values = json::array();
      for (Eigen::Index i = 0; i < v.size(); ++i) values.push_back(v[i]);
      res.set_content(json{{"values", values}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

BackendServer::~BackendServer() { stop(); }

std::string BackendServer::start() {
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  if (impl_->port <= 0) throw std::runtime_error("cannot bind backend server");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return "http://127.0.0.1:" + std::to_string(impl_->port);
}

void BackendServer::stop() {
  if (impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

}  // namespace mkgrag::backends

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "mkgrag/builder.hpp"
#include "mkgrag/harness.hpp"

using namespace mkgrag;

namespace {

std::shared_ptr<backends::ChatBackend> make_chat(const std::string& fixtures,
                                                 const std::string& url) {
  const char* env = std::getenv("MKGRAG_BACKEND_URL");
  std::string base = env && *env ? env : url;
  if (!base.empty()) return std::make_shared<backends::HttpChatBackend>(base);
  auto set = fixtures.empty() ? backends::ChatFixtureSet{}
                              : backends::ChatFixtureSet::from_json_file(fixtures);
  return std::make_shared<backends::MockChatBackend>(std::move(set));
}

std::shared_ptr<backends::EmbeddingBackend> make_embedder(const std::string& url, int dim) {
  const char* env = std::getenv("MKGRAG_BACKEND_URL");
  std::string base = env && *env ? env : url;
  if (!base.empty()) return std::make_shared<backends::HttpEmbeddingBackend>(base);
  return std::make_shared<backends::MockEmbeddingBackend>(dim);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mkgrag: multimodal knowledge-graph retrieval-augmented generation"};
  app.require_subcommand(1);

  // build-kg
  std::string corpus_path, out_dir, segments_path, fixtures_path, scenegraph_dir,
      template_path, backend_url;
  std::size_t max_tokens = 512, min_tokens = 64;
  auto* build = app.add_subcommand("build-kg", "Construct per-document multimodal KGs");
  build->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  build->add_option("--out", out_dir, "Output KG directory")->required();
  build->add_option("--segments", segments_path, "Segment store output path");
  build->add_option("--fixtures", fixtures_path, "Mock chat fixture file");
  build->add_option("--scenegraphs", scenegraph_dir, "Scene-graph sidecar directory");
  build->add_option("--matching-template", template_path, "Matching prompt template file");
  std::string extract_template_path;
  build->add_option("--extract-template", extract_template_path,
                    "Entity extraction prompt template file");
  build->add_option("--backend-url", backend_url, "HTTP backend base URL");
  build->add_option("--max-tokens", max_tokens, "Chunk budget");
  build->add_option("--min-tokens", min_tokens, "Merge-forward threshold");

  // embed-index
  std::string kg_dir, index_path;
  int dim = 256;
  auto* embed = app.add_subcommand("embed-index", "Embed KGs and segments into an index");
  embed->add_option("--kg", kg_dir, "KG directory")->required();
  embed->add_option("--segments", segments_path, "Segment store path")->required();
  embed->add_option("--out", index_path, "Index output path")->required();
  embed->add_option("--dim", dim, "Embedding dimension");
  embed->add_option("--backend-url", backend_url, "HTTP backend base URL");

  // query
  std::string image_id, question;
  std::size_t k_d = 10, k_g = 10, budget = 4096;
  int hops = 1;
  double rho = 0.9;
  auto* query_cmd = app.add_subcommand("query", "Answer one image-question pair");
  query_cmd->add_option("--index", index_path, "Index file")->required();
  query_cmd->add_option("--kg", kg_dir, "KG directory")->required();
  query_cmd->add_option("--segments", segments_path, "Segment store path")->required();
  query_cmd->add_option("--image", image_id, "Query image id");
  query_cmd->add_option("--question", question, "Question text")->required();
  query_cmd->add_option("--k-d", k_d, "Documents to recall");
  query_cmd->add_option("--k-g", k_g, "Graph elements to retrieve");
  query_cmd->add_option("--hops", hops, "Expansion hops");
  query_cmd->add_option("--rho", rho, "Neighbor relevance relaxation");
  query_cmd->add_option("--budget", budget, "Context token budget");
  query_cmd->add_option("--fixtures", fixtures_path, "Mock chat fixture file");
  query_cmd->add_option("--backend-url", backend_url, "HTTP backend base URL");
  query_cmd->add_option("--dim", dim, "Embedding dimension");

  // eval
  std::string config_path, dataset_path, report_path;
  auto* eval = app.add_subcommand("eval", "Run an experiment over a dataset");
  eval->add_option("--config", config_path, "Experiment config JSON")->required();
  eval->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
  eval->add_option("--report", report_path, "Report output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      if (segments_path.empty())
        segments_path = (std::filesystem::path(out_dir) / "segments.jsonl").string();
      auto chat = make_chat(fixtures_path, backend_url);
      builder::BuildOptions options;
      options.chunk_policy = {max_tokens, min_tokens};
      options.scenegraph_dir = scenegraph_dir;
      if (!template_path.empty())
        options.matching_template =
            extraction::PromptTemplate::load("match", template_path);
      if (!extract_template_path.empty())
        options.extract_template =
            extraction::PromptTemplate::load("extract", extract_template_path);
      auto handle = corpus::load_corpus(corpus_path);
      for (const auto& issue : handle.issues())
        std::cerr << "line " << issue.line << ": " << issue.reason << "\n";
      auto stats = builder::build_kg(handle, *chat, options, out_dir, segments_path);
      std::cout << "documents=" << stats.documents << " segments=" << stats.segments
                << " nodes=" << stats.nodes << " edges=" << stats.edges
                << " rejects=" << stats.rejects << "\n";
    } else if (*embed) {
      auto embedder = make_embedder(backend_url, dim);
      auto segments = retrieval::SegmentStore::load(segments_path);
      index::VectorIndex idx(dim);
      auto stats = builder::embed_index(kg_dir, segments, *embedder, dim, idx);
      idx.save(index_path);
      std::cout << "documents=" << stats.documents << " segments=" << stats.segments
                << " entities=" << stats.entities << " edges=" << stats.edges << "\n";
    } else if (*query_cmd) {
      auto embedder = make_embedder(backend_url, dim);
      auto chat = make_chat(fixtures_path, backend_url);
      auto idx = std::make_shared<index::VectorIndex>(index::VectorIndex::load(index_path));
      auto segments = std::make_shared<retrieval::SegmentStore>(
          retrieval::SegmentStore::load(segments_path));
      retrieval::Engine engine(idx, kg_dir, segments, embedder);

      retrieval::Query query{question, image_id};
      auto hits = engine.retrieve_documents(query, k_d);
      std::vector<std::string> doc_ids;
      for (const auto& h : hits) doc_ids.push_back(h.item_id);
      auto composed = engine.compose_query_graph(doc_ids);
      auto seeds = engine.score_elements(query, composed, k_g);
      auto sub = engine.expand_subgraph(composed, seeds, hops, query, rho);
      auto ctx = engine.assemble_context(sub, composed, budget);
      std::string answer = harness::generate_answer(query, ctx, *chat);

      nlohmann::json out;
      out["documents"] = nlohmann::json::array();
      for (const auto& h : hits)
        out["documents"].push_back({{"doc_id", h.item_id}, {"score", h.score}});
      out["seeds"] = nlohmann::json::array();
      for (const auto& s : seeds)
        out["seeds"].push_back({{"element", s.element_id}, {"score", s.score}});
      out["expansion"] = nlohmann::json::array();
      for (const auto& e : sub.expansion)
        out["expansion"].push_back(
            {{"element", e.element_id}, {"hop", e.hop}, {"score", e.score}});
      out["context"] = {{"graph_block", ctx.graph_block},
                        {"segment_block", ctx.segment_block},
                        {"token_count", ctx.token_count}};
      out["answer"] = answer;
      std::cout << out.dump(2) << "\n";
    } else if (*eval) {
      auto cfg = harness::ExperimentConfig::from_json_file(config_path);
      auto dataset = harness::load_dataset(dataset_path);
      auto pipeline = harness::build_pipeline(cfg);
      harness::Runner runner(pipeline.engine, pipeline.chat);
      auto report = runner.run_experiment(cfg, dataset);
      std::ofstream out(report_path);
      if (!out) throw std::runtime_error("cannot write report: " + report_path);
      out << report.to_json() << "\n";
      std::cout << "report written to " << report_path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#pragma once
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mkgrag/backends.hpp"
#include "mkgrag/retrieval.hpp"

namespace mkgrag::harness {

enum class Mode { Graph, Chunk };

struct ExperimentConfig {
  std::size_t k_d = 10;
  std::size_t k_g = 10;
  int hops = 1;
  double rho = 0.9;
  corpus::ChunkPolicy chunk_policy;
  std::size_t context_budget = 4096;
  Mode mode = Mode::Graph;
  std::int64_t seed = 0;

  std::string index_path;
  std::string kg_dir;
  std::string segments_path;

  // Backend selection: "mock" with fixture/dim settings, or "http" with a
  // base URL. MKGRAG_BACKEND_URL overrides the http URL.
  std::string chat_backend = "mock";
  std::string chat_fixtures_path;
  std::string embed_backend = "mock";
  std::string backend_url;
  int embed_dim = 256;

  // Sweeps: when non-empty, run_experiment reports one metrics block per
  // combination.
  std::vector<std::size_t> sweep_k_g;
  std::vector<int> sweep_hops;
  std::vector<Mode> sweep_modes;

  void validate() const;
  static ExperimentConfig from_json(const std::string& content);
  static ExperimentConfig from_json_file(const std::string& path);
};

struct EvalRecord {
  retrieval::Query query;
  std::string gold_doc_id;
  std::vector<std::string> gold_answers;
  std::string gold_element;  // optional element id, e.g. "entity:X"
  std::string gold_segment;  // optional segment id
  std::string split;         // optional dataset split label
  std::string predicted;
  std::size_t gold_doc_rank = 0;     // 1-based; 0 = not retrieved
  std::size_t gold_element_rank = 0; // 1-based; 0 = absent
};

std::vector<EvalRecord> load_dataset(const std::string& path);

// lowercase, strip punctuation, collapse whitespace, drop leading articles.
std::string normalize_answer(const std::string& s);

enum class MatchMode { Exact, Contains };

std::string generate_answer(const retrieval::Query& query,
                            const retrieval::AssembledContext& ctx,
                            backends::ChatBackend& backend);

double vqa_accuracy(const std::vector<EvalRecord>& records, MatchMode mode);
double recall_at_k(const std::vector<EvalRecord>& records, std::size_t k);

struct Metrics {
  double accuracy_exact = 0;
  double accuracy_contains = 0;
  std::map<std::size_t, double> recall;  // k -> R@k
  double gold_element_recall = 0;        // fraction with gold element in seeds
  double mean_non_gold_segments = 0;     // context noise measure
};

struct StageTimings {
  double retrieve_s = 0;
  double compose_s = 0;
  double score_s = 0;
  double expand_s = 0;
  double assemble_s = 0;
  double generate_s = 0;
  double total_s = 0;
};

struct SweepPoint {
  std::size_t k_g = 0;
  int hops = 0;
  Mode mode = Mode::Graph;
  Metrics metrics;
  std::vector<EvalRecord> records;
};

struct Report {
  static constexpr int kSchemaVersion = 1;
  ExperimentConfig config;
  std::vector<SweepPoint> points;
  StageTimings timings;

  std::string to_json() const;
  // Timings excluded; byte-identical across runs with fixed seed and mock
  // backends.
  std::string deterministic_json() const;
};

class Runner {
 public:
  Runner(std::shared_ptr<retrieval::Engine> engine,
         std::shared_ptr<backends::ChatBackend> chat);

  // Runs one query through the configured pipeline and fills prediction and
  // rank fields of the record.
  retrieval::AssembledContext run_query(EvalRecord& record, const ExperimentConfig& cfg,
                                        StageTimings* timings = nullptr) const;

  Report run_experiment(const ExperimentConfig& cfg,
                        const std::vector<EvalRecord>& dataset) const;

 private:
  std::shared_ptr<retrieval::Engine> engine_;
  std::shared_ptr<backends::ChatBackend> chat_;
};

// Builds engine + chat backend from config (mock or http).
struct Pipeline {
  std::shared_ptr<retrieval::Engine> engine;
  std::shared_ptr<backends::ChatBackend> chat;
  std::shared_ptr<backends::EmbeddingBackend> embedder;
};
Pipeline build_pipeline(const ExperimentConfig& cfg);

}  // namespace mkgrag::harness

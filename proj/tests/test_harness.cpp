#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mkgrag/harness.hpp"
#include "planted.hpp"

using namespace mkgrag;
using namespace mkgrag::harness;

namespace {

const planted::World& world() {
  static planted::World w = planted::make_world(
      (std::filesystem::temp_directory_path() / "mkgrag_planted_harness").string(), 8, 4);
  return w;
}

ExperimentConfig base_config() {
  const auto& w = world();
  ExperimentConfig cfg;
  cfg.k_d = 5;
  cfg.k_g = 2;
  cfg.hops = 1;
  cfg.rho = 0.0;
  cfg.context_budget = 400;
  cfg.embed_dim = w.dim;
  cfg.index_path = w.index_path;
  cfg.kg_dir = w.kg_dir;
  cfg.segments_path = w.segments_path;
  cfg.chat_fixtures_path = w.fixtures_path;
  return cfg;
}

}  // namespace

TEST_CASE("answer normalization: case, punctuation, whitespace, articles") {
  CHECK(normalize_answer("  The Mount   Fuji! ") == "mount fuji");
  CHECK(normalize_answer("A dog's day") == "dog s day");
  CHECK(normalize_answer("an answer") == "answer");
  CHECK(normalize_answer("THE THE END") == "the end");  // one article only
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer("42.5%") == "42 5");
}

TEST_CASE("vqa accuracy in exact and containment modes") {
  std::vector<EvalRecord> records(3);
  records[0].gold_answers = {"Mount Fuji"};
  records[0].predicted = "the mount fuji";
  records[1].gold_answers = {"fence", "a wall"};
  records[1].predicted = "It is a big Fence.";
  records[2].gold_answers = {"snow"};
  records[2].predicted = "rain";
  CHECK(vqa_accuracy(records, MatchMode::Exact) == doctest::Approx(1.0 / 3));
  CHECK(vqa_accuracy(records, MatchMode::Contains) == doctest::Approx(2.0 / 3));
  CHECK_THROWS(vqa_accuracy({}, MatchMode::Exact));
}

TEST_CASE("recall@k counts gold ranks and grows with k") {
  std::vector<EvalRecord> records(4);
  records[0].gold_doc_rank = 1;
  records[1].gold_doc_rank = 3;
  records[2].gold_doc_rank = 0;  // never retrieved
  records[3].gold_doc_rank = 7;
  CHECK(recall_at_k(records, 1) == doctest::Approx(0.25));
  CHECK(recall_at_k(records, 5) == doctest::Approx(0.5));
  CHECK(recall_at_k(records, 10) == doctest::Approx(0.75));
  double prev = 0;
  for (std::size_t k = 1; k <= 10; ++k) {
    double r = recall_at_k(records, k);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK_THROWS(recall_at_k(records, 0));
}

TEST_CASE("config json round trip and validation") {
  auto cfg = ExperimentConfig::from_json(R"({
    "k_d": 7, "k_g": 3, "hops": 2, "rho": 0.5,
    "chunk": {"max_tokens": 128, "min_tokens": 16},
    "context_budget": 999, "mode": "chunk", "seed": 11,
    "sweep_modes": ["graph", "chunk"], "sweep_hops": [0, 1], "sweep_k_g": [2, 4]
  })");
  CHECK(cfg.k_d == 7);
  CHECK(cfg.k_g == 3);
  CHECK(cfg.hops == 2);
  CHECK(cfg.rho == 0.5);
  CHECK(cfg.chunk_policy.max_tokens == 128);
  CHECK(cfg.mode == Mode::Chunk);
  CHECK(cfg.sweep_modes.size() == 2);
  CHECK(cfg.sweep_hops == std::vector<int>{0, 1});
  CHECK_THROWS(ExperimentConfig::from_json(R"({"k_d": 0})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"hops": -1})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"mode": "quantum"})"));
}

TEST_CASE("dataset loader insists on gold answers") {
  namespace fs = std::filesystem;
  auto path = fs::temp_directory_path() / "mkgrag_dataset_test.jsonl";
  {
    std::ofstream out(path);
    out << R"({"question": "q1", "gold_doc_id": "d", "gold_answers": ["x"]})" << "\n";
    out << "\n";
    out << R"({"question": "q2", "gold_doc_id": "d", "gold_answers": ["y", "z"]})" << "\n";
  }
  auto records = load_dataset(path.string());
  REQUIRE(records.size() == 2);
  CHECK(records[0].query.question == "q1");
  CHECK(records[1].gold_answers.size() == 2);
  {
    std::ofstream out(path);
    out << R"({"question": "q", "gold_doc_id": "d"})" << "\n";
  }
  CHECK_THROWS(load_dataset(path.string()));
  fs::remove(path);
}

TEST_CASE("planted end-to-end: graph mode answers from the planted evidence") {
  auto cfg = base_config();
  auto pipeline = build_pipeline(cfg);
  Runner runner(pipeline.engine, pipeline.chat);
  auto dataset = load_dataset(world().dataset_path);
  REQUIRE(static_cast<int>(dataset.size()) == world().n_queries);

  auto report = runner.run_experiment(cfg, dataset);
  REQUIRE(report.points.size() == 1);
  const auto& m = report.points[0].metrics;
  CHECK(m.accuracy_exact == doctest::Approx(1.0));
  CHECK(m.recall.at(1) == doctest::Approx(1.0));
  CHECK(m.gold_element_recall == doctest::Approx(1.0));
  CHECK(m.mean_non_gold_segments == doctest::Approx(0.0));
  for (const auto& r : report.points[0].records) {
    CHECK(r.gold_doc_rank == 1);
    CHECK(r.gold_element_rank >= 1);
    CHECK(r.gold_element_rank <= 2);
  }
}

TEST_CASE("planted end-to-end: no expansion, no answer") {
  auto cfg = base_config();
  cfg.hops = 0;
  auto pipeline = build_pipeline(cfg);
  Runner runner(pipeline.engine, pipeline.chat);
  auto dataset = load_dataset(world().dataset_path);
  auto report = runner.run_experiment(cfg, dataset);
  // The evidence lives one hop away; without expansion the model falls back.
  CHECK(report.points[0].metrics.accuracy_exact == doctest::Approx(0.0));
  CHECK(report.points[0].metrics.recall.at(1) == doctest::Approx(1.0));
}

TEST_CASE("planted end-to-end: chunk mode pulls in salted noise") {
  auto cfg = base_config();
  cfg.mode = Mode::Chunk;
  cfg.k_g = 4;
  auto pipeline = build_pipeline(cfg);
  Runner runner(pipeline.engine, pipeline.chat);
  auto dataset = load_dataset(world().dataset_path);
  auto report = runner.run_experiment(cfg, dataset);
  const auto& m = report.points[0].metrics;
  // The noise segment shares the salt, so chunk contexts are contaminated
  // while the graph contexts above stay clean.
  CHECK(m.mean_non_gold_segments > 0.0);
  CHECK(m.accuracy_exact == doctest::Approx(0.0));  // evidence only in the KG
}

TEST_CASE("sweeps produce one point per combination") {
  auto cfg = base_config();
  cfg.sweep_modes = {Mode::Graph, Mode::Chunk};
  cfg.sweep_hops = {0, 1};
  cfg.sweep_k_g = {2};
  auto pipeline = build_pipeline(cfg);
  Runner runner(pipeline.engine, pipeline.chat);
  auto dataset = load_dataset(world().dataset_path);
  auto report = runner.run_experiment(cfg, dataset);
  REQUIRE(report.points.size() == 4);
  // Graph mode with expansion beats graph mode without; chunk mode is noisier
  // than graph mode.
  double graph_h0 = -1, graph_h1 = -1;
  for (const auto& p : report.points) {
    if (p.mode == Mode::Graph && p.hops == 0) graph_h0 = p.metrics.accuracy_exact;
    if (p.mode == Mode::Graph && p.hops == 1) graph_h1 = p.metrics.accuracy_exact;
  }
  CHECK(graph_h1 > graph_h0);
}

TEST_CASE("reports are deterministic across repeated runs") {
  auto cfg = base_config();
  auto dataset = load_dataset(world().dataset_path);

  auto run_once = [&] {
    auto pipeline = build_pipeline(cfg);
    Runner runner(pipeline.engine, pipeline.chat);
    return runner.run_experiment(cfg, dataset);
  };
  auto a = run_once();
  auto b = run_once();
  CHECK(a.deterministic_json() == b.deterministic_json());
  // The timing block is the only admissible difference.
  CHECK(a.to_json().size() > a.deterministic_json().size());
}

TEST_CASE("run_experiment rejects empty datasets") {
  auto cfg = base_config();
  auto pipeline = build_pipeline(cfg);
  Runner runner(pipeline.engine, pipeline.chat);
  CHECK_THROWS(runner.run_experiment(cfg, {}));
}

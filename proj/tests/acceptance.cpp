// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances and time limits are pinned in code next to each check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mkgrag/builder.hpp"
#include "mkgrag/harness.hpp"
#include "mkgrag/objectives.hpp"
#include "planted.hpp"

using namespace mkgrag;

namespace {

int failures = 0;

void report(int criterion, const std::string& what, bool ok, double seconds,
            double limit_s) {
  bool in_time = seconds <= limit_s;
  std::printf("%s criterion %2d: %s (%.2fs, limit %.0fs)\n",
              ok && in_time ? "PASS" : "FAIL", criterion, what.c_str(), seconds, limit_s);
  if (!(ok && in_time)) ++failures;
}

void run(int criterion, const std::string& what, double limit_s,
         const std::function<bool()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  try {
    ok = body();
  } catch (const std::exception& e) {
    std::printf("  exception: %s\n", e.what());
  }
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(criterion, what, ok, seconds, limit_s);
}

// The fixed vision-text example: four entities, three relationships, the
// four match records, and the four-object scene.
const char* kExampleRecords =
    "(\"entity\"|MOUNT FUJI|mountain|Highest peak in Japan)\n"
    "(\"entity\"|HONSHU ISLAND|island|Largest island of the archipelago)\n"
    "(\"entity\"|CHERRY BLOSSOMS|flora|Flowering trees near the base)\n"
    "(\"entity\"|SHINKANSEN|train|High-speed rail line)\n"
    "(\"relationship\"|MOUNT FUJI|HONSHU ISLAND|The peak sits on the island|9)\n"
    "(\"relationship\"|CHERRY BLOSSOMS|MOUNT FUJI|The trees bloom at the base|8)\n"
    "(\"relationship\"|SHINKANSEN|MOUNT FUJI|The train passes the peak|7)\n"
    "(\"matching\"|<image>|MOUNT FUJI|8)\n"
    "(\"matching\"|<object-3>|MOUNT FUJI|9)\n"
    "(\"matching\"|<object-0>|SHINKANSEN|7)\n"
    "(\"matching\"|<relation-2>|MOUNT FUJI|SHINKANSEN|7)\n";

const char* kExampleScene = R"({
  "objects": [
    {"id": "object-0", "category": "train",    "bbox": [0.06, 0.64, 1.0, 0.77]},
    {"id": "object-1", "category": "fence",    "bbox": [0.0, 0.8, 0.98, 0.88]},
    {"id": "object-2", "category": "snow",     "bbox": [0.25, 0.29, 0.67, 0.49]},
    {"id": "object-3", "category": "mountain", "bbox": [0.0, 0.3, 1.0, 0.64]}
  ],
  "relations": [
    {"id": "relation-0", "subject": "object-0", "predicate": "over",   "object": "object-1"},
    {"id": "relation-1", "subject": "object-2", "predicate": "on",     "object": "object-3"},
    {"id": "relation-2", "subject": "object-3", "predicate": "behind", "object": "object-0"}
  ]
})";

bool criterion_1() {
  auto b = extraction::parse_records(kExampleRecords);
  if (b.entities.size() != 4 || b.relationships.size() != 3 || b.matches.size() != 4)
    return false;
  if (b.relationships[0].strength != 9 || b.relationships[1].strength != 8 ||
      b.relationships[2].strength != 7)
    return false;
  int image = 0, object = 0, relation = 0;
  for (const auto& m : b.matches) {
    if (std::holds_alternative<extraction::ImageMatch>(m)) ++image;
    if (std::holds_alternative<extraction::ObjectMatch>(m)) ++object;
    if (std::holds_alternative<extraction::RelationMatch>(m)) ++relation;
  }
  return image == 1 && object == 2 && relation == 1 && b.rejects.empty();
}

bool criterion_2() {
  auto batch = extraction::parse_records(kExampleRecords);
  auto vg = scenegraph::ingest_scene_graph(kExampleScene, "img-1");
  auto kg = fusion::build_textual_subgraph(batch, "d#0");
  fusion::apply_matchings(kg, batch.matches, vg);
  const auto& edge = kg.edges.at(fusion::make_edge_key("MOUNT FUJI", "SHINKANSEN"));
  fusion::RegionKey want{"img-1", scenegraph::BBox{0.0, 0.3, 1.0, 0.77}};
  auto it = edge.regions.find(want);
  // Exact floats: the union must be the coordinate-wise min/max of the
  // object-0 and object-3 boxes, no tolerance.
  return it != edge.regions.end() && it->first.region == want.region;
}

bool criterion_3() {
  std::mt19937 rng(301);
  const int dim = 128;
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<index::IndexEntry> entries;
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXf v(dim);
    for (int d = 0; d < dim; ++d) v[d] = g(rng);
    char id[32];
    std::snprintf(id, sizeof id, "item-%05d", i);
    // A block of duplicated vectors guarantees exact ties.
    if (i % 97 == 0 && i > 0) v = entries[static_cast<std::size_t>(i) - 1].vector;
    entries.push_back({id, index::Kind::Document, v, ""});
  }
  index::VectorIndex idx(dim);
  idx.upsert(entries);

  for (int qi = 0; qi < 50; ++qi) {
    Eigen::VectorXf q(dim);
    for (int d = 0; d < dim; ++d) q[d] = g(rng);
    // Exhaustive-scan oracle with identical double accumulation.
    std::vector<index::ScoredHit> want;
    for (const auto& e : entries)
      want.push_back({e.item_id, e.kind, index::cosine_similarity(e.vector, q)});
    std::sort(want.begin(), want.end(),
              [](const index::ScoredHit& a, const index::ScoredHit& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.item_id < b.item_id;
              });
    want.resize(10);
    auto got = idx.search_topk(q, index::Kind::Document, 10);
    if (got.size() != want.size()) return false;
    for (std::size_t i = 0; i < got.size(); ++i)
      if (got[i].item_id != want[i].item_id) return false;
  }
  return true;
}

// --- BFS reference (independent of the engine implementation) ------------
// Plain set-based BFS over the entity/edge incidence structure: one edge
// crossing per hop, the crossed edge and its far endpoint admitted at the
// same hop, both filtered at rho * min seed score.

std::map<std::string, std::pair<double, int>> reference_bfs(
    const retrieval::ComposedGraph& g, const std::vector<retrieval::ScoredElement>& seeds,
    int l, const retrieval::Query& query, double rho,
    backends::EmbeddingBackend& embedder, int dim) {
  auto qvec = retrieval::embed_query(embedder, query, dim);
  auto score_of = [&](const std::string& id) {
    if (const auto* e = g.find_entity(id))
      return index::cosine_similarity(qvec, retrieval::embed_entity(embedder, *e, dim));
    return index::cosine_similarity(qvec,
                                    retrieval::embed_edge(embedder, *g.find_edge(id), dim));
  };
  double s_min = seeds.front().score;
  for (const auto& s : seeds) s_min = std::min(s_min, s.score);
  double threshold = rho * s_min;

  std::map<std::string, std::pair<double, int>> out;  // id -> (score, hop)
  std::set<std::string> entity_frontier;
  std::set<fusion::EdgeKey> edge_frontier;
  for (const auto& s : seeds) {
    out[s.element_id] = {s.score, 0};
    if (s.element_id.rfind("entity:", 0) == 0)
      entity_frontier.insert(s.element_id.substr(7));
    else {
      auto rest = s.element_id.substr(5);
      auto bar = rest.find('|');
      edge_frontier.insert({rest.substr(0, bar), rest.substr(bar + 1)});
    }
  }
  for (int hop = 1; hop <= l; ++hop) {
    std::set<std::string> next;
    auto admit = [&](const std::string& name) {
      std::string id = retrieval::entity_element_id(name);
      if (out.count(id)) return;
      double s = score_of(id);
      if (s < threshold) return;
      out[id] = {s, hop};
      next.insert(name);
    };
    for (const auto& key : edge_frontier) {
      admit(key.first);
      admit(key.second);
    }
    edge_frontier.clear();
    for (const auto& name : entity_frontier) {
      for (const auto& [key, edge] : g.graph.edges) {
        if (key.first != name && key.second != name) continue;
        std::string edge_id = retrieval::edge_element_id(key);
        if (!out.count(edge_id)) {
          double s = score_of(edge_id);
          if (s < threshold) continue;
          out[edge_id] = {s, hop};
        }
        admit(key.first == name ? key.second : key.first);
      }
    }
    entity_frontier = std::move(next);
    if (entity_frontier.empty()) break;
  }
  return out;
}

bool bfs_matches_reference(const retrieval::Engine& engine,
                           const retrieval::ComposedGraph& g,
                           const std::vector<retrieval::ScoredElement>& seeds, int l,
                           const retrieval::Query& query, double rho,
                           backends::EmbeddingBackend& embedder, int dim) {
  auto got = engine.expand_subgraph(g, seeds, l, query, rho);
  auto want = reference_bfs(g, seeds, l, query, rho, embedder, dim);
  if (got.expansion.size() != want.size()) return false;
  for (const auto& e : got.expansion) {
    auto it = want.find(e.element_id);
    if (it == want.end()) return false;
    if (e.score != it->second.first || e.hop != it->second.second) return false;
  }
  return true;
}

bool criterion_4() {
  const int dim = 64;
  backends::MockEmbeddingBackend embedder(dim);
  retrieval::Engine engine(std::make_shared<index::VectorIndex>(dim), "/nonexistent",
                           std::make_shared<retrieval::SegmentStore>(),
                           std::make_shared<backends::MockEmbeddingBackend>(dim));
  auto make_graph = [](const std::string& records) {
    retrieval::ComposedGraph g;
    g.graph = fusion::build_textual_subgraph(extraction::parse_records(records), "d#0");
    return g;
  };
  const std::vector<std::string> pool = {"amber", "basalt", "cobalt", "dune", "ember",
                                         "flint", "garnet", "heath",  "iris", "jade"};

  // Hand-built 12-element graph: a 5-chain plus a branch.
  std::mt19937 rng(401);
  std::string fixed;
  for (char c = 'A'; c <= 'G'; ++c)
    fixed += std::string("(\"entity\"|") + c + "|t|" + pool[(c - 'A') % pool.size()] +
             " probe)\n";
  fixed +=
      "(\"relationship\"|A|B|probe|5)\n(\"relationship\"|B|C|probe|5)\n"
      "(\"relationship\"|C|D|probe|5)\n(\"relationship\"|D|E|probe|5)\n"
      "(\"relationship\"|B|F|probe|5)\n";
  auto g12 = make_graph(fixed);
  if (g12.graph.nodes.size() + g12.graph.edges.size() != 12) return false;
  retrieval::Query query12{"amber probe", ""};
  auto seeds12 = engine.score_elements(query12, g12, 2);
  for (int l = 0; l <= 4; ++l)
    if (!bfs_matches_reference(engine, g12, seeds12, l, query12, 0.0, embedder, dim))
      return false;

  for (int it = 0; it < 100; ++it) {
    std::uniform_int_distribution<int> n_nodes(2, 25);
    int n = n_nodes(rng);
    std::string records;
    for (int i = 0; i < n; ++i)
      records += "(\"entity\"|N" + std::to_string(i) + "|t|" + pool[rng() % pool.size()] +
                 " " + pool[rng() % pool.size()] + ")\n";
    std::uniform_int_distribution<int> n_edges(0, n);
    for (int e = 0, k = n_edges(rng); e < k; ++e) {
      int a = static_cast<int>(rng() % n), b = static_cast<int>(rng() % n);
      if (a == b) continue;
      records += "(\"relationship\"|N" + std::to_string(a) + "|N" + std::to_string(b) +
                 "|" + pool[rng() % pool.size()] + "|5)\n";
    }
    auto g = make_graph(records);
    retrieval::Query query{pool[rng() % pool.size()] + " " + pool[rng() % pool.size()], ""};
    auto ranked = engine.rank_elements(query, g);
    std::uniform_int_distribution<std::size_t> n_seeds(
        1, std::min<std::size_t>(3, ranked.size()));
    std::vector<retrieval::ScoredElement> seeds(ranked.begin(),
                                                ranked.begin() + n_seeds(rng));
    std::uniform_int_distribution<int> hops(0, 4);
    std::uniform_real_distribution<double> rho_dist(0.0, 1.1);
    int l = hops(rng);
    if (!bfs_matches_reference(engine, g, seeds, l, query, rho_dist(rng), embedder, dim))
      return false;

    // Monotonicity at a fixed threshold: result(l) is a subset of result(l+1).
    auto small = engine.expand_subgraph(g, seeds, l, query, 0.5);
    auto big = engine.expand_subgraph(g, seeds, l + 1, query, 0.5);
    std::set<std::string> big_ids;
    for (const auto& e : big.expansion) big_ids.insert(e.element_id);
    for (const auto& e : small.expansion)
      if (!big_ids.count(e.element_id)) return false;
  }
  return true;
}

bool criterion_5() {
  std::mt19937 rng(501);
  const std::vector<std::string> pool = {"amber", "basalt", "cobalt", "dune", "ember",
                                         "flint", "garnet", "heath",  "iris", "jade"};
  for (int it = 0; it < 200; ++it) {
    std::uniform_int_distribution<int> n_frags(1, 5);
    std::vector<fusion::MultimodalKG> frags;
    for (int f = 0, k = n_frags(rng); f < k; ++f) {
      std::uniform_int_distribution<int> n_nodes(1, 6);
      int n = n_nodes(rng);
      std::string records;
      for (int i = 0; i < n; ++i)
        records += "(\"entity\"|E" + std::to_string(static_cast<int>(rng() % 8)) + "|t|" +
                   pool[rng() % pool.size()] + ")\n";
      auto parsed = extraction::parse_records(records);
      for (std::size_t i = 0; i + 1 < parsed.entities.size(); ++i)
        records += "(\"relationship\"|" + parsed.entities[i].name + "|" +
                   parsed.entities[i + 1].name + "|" + pool[rng() % pool.size()] + "|" +
                   std::to_string(1 + static_cast<int>(rng() % 10)) + ")\n";
      frags.push_back(fusion::build_textual_subgraph(extraction::parse_records(records),
                                                     "d#" + std::to_string(f)));
    }
    auto ref = fusion::aggregate_document_graph(frags, "d").canonical_json();
    // Order-insensitive.
    std::shuffle(frags.begin(), frags.end(), rng);
    if (fusion::aggregate_document_graph(frags, "d").canonical_json() != ref) return false;
    // Idempotent: merging the aggregate into itself changes nothing.
    auto kg = fusion::aggregate_document_graph(frags, "d");
    fusion::merge_into(kg, fusion::aggregate_document_graph(frags, "d"));
    if (kg.canonical_json() != ref) return false;
  }

  // compose_query_graph shares the same algebra through the on-disk KGs.
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "mkgrag_acceptance_compose";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> ids;
  for (int d = 0; d < 5; ++d) {
    std::string records = "(\"entity\"|SHARED|t|seen in all)\n(\"entity\"|ONLY" +
                          std::to_string(d) + "|t|" + pool[rng() % pool.size()] +
                          ")\n(\"relationship\"|SHARED|ONLY" + std::to_string(d) +
                          "|tie|5)\n";
    auto kg = fusion::build_textual_subgraph(extraction::parse_records(records),
                                             "k" + std::to_string(d) + "#0");
    kg.doc_id = "k" + std::to_string(d);
    fusion::save_kg(kg, (dir / (kg.doc_id + ".json")).string());
    ids.push_back(kg.doc_id);
  }
  const int dim = 32;
  retrieval::Engine engine(std::make_shared<index::VectorIndex>(dim), dir.string(),
                           std::make_shared<retrieval::SegmentStore>(),
                           std::make_shared<backends::MockEmbeddingBackend>(dim));
  auto ref = engine.compose_query_graph(ids).graph.canonical_json();
  for (int it = 0; it < 20; ++it) {
    auto shuffled = ids;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    shuffled.push_back(shuffled.front());  // duplicates must not change the result
    if (engine.compose_query_graph(shuffled).graph.canonical_json() != ref) return false;
  }
  fs::remove_all(dir);
  return true;
}

const planted::World& world() {
  static planted::World w = planted::make_world(
      (std::filesystem::temp_directory_path() / "mkgrag_planted_acceptance").string(), 200,
      50);
  return w;
}

harness::ExperimentConfig planted_config() {
  const auto& w = world();
  harness::ExperimentConfig cfg;
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

harness::Report run_planted(const harness::ExperimentConfig& cfg,
                            std::vector<harness::EvalRecord> dataset) {
  auto pipeline = harness::build_pipeline(cfg);
  harness::Runner runner(pipeline.engine, pipeline.chat);
  return runner.run_experiment(cfg, dataset);
}

bool criterion_6() {
  auto cfg = planted_config();
  auto dataset = harness::load_dataset(world().dataset_path);
  if (dataset.size() != 50) return false;
  auto report = run_planted(cfg, dataset);
  const auto& point = report.points.at(0);
  if (point.metrics.recall.at(1) != 1.0) return false;        // R@1 = 1.00 exactly
  if (point.metrics.accuracy_exact != 1.0) return false;      // VQA exact = 1.00
  for (const auto& r : point.records)
    if (r.gold_element_rank != 1) return false;               // gold element on top
  return true;
}

bool criterion_7() {
  using namespace mkgrag::objectives;
  // B = 1: the softmax over a single candidate is 1, loss exactly 0.
  BatchEmbeddings single;
  single.queries = Eigen::MatrixXd::Ones(1, 8);
  single.evidences = Eigen::MatrixXd::Ones(1, 8);
  if (mean_infonce(single) != 0.0) return false;

  Eigen::VectorXd p(3);
  p << 0.3, -1.2, 2.0;
  if (std::abs(kl_divergence(p, p)) > 1e-12) return false;

  // softmax(0, ln 3) vs uniform: 0.25 ln 0.5 + 0.75 ln 1.5 = 0.13081...
  Eigen::VectorXd a(2), b(2);
  a << 0.0, std::log(3.0);
  b << 0.0, 0.0;
  double closed = 0.25 * std::log(0.5) + 0.75 * std::log(1.5);
  if (std::abs(kl_divergence(a, b) - closed) > 1e-6) return false;
  if (std::abs(closed - 0.13081) > 1e-5) return false;

  std::mt19937 rng(701);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int batch_i = 0; batch_i < 20; ++batch_i) {
    BatchEmbeddings batch;
    batch.queries = Eigen::MatrixXd::NullaryExpr(4, 8, [&] { return g(rng); });
    batch.evidences = Eigen::MatrixXd::NullaryExpr(4, 8, [&] { return g(rng); });
    batch.declaratives = Eigen::MatrixXd::NullaryExpr(4, 8, [&] { return g(rng); });
    // Central differences at h and h/2 must agree within 1e-4: the objective
    // is smooth and stabilized, so the finite-difference limit exists.
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 8; j += 2) {
        auto fd = [&](double h) {
          BatchEmbeddings hi = batch, lo = batch;
          hi.queries(i, j) += h;
          lo.queries(i, j) -= h;
          return (combined_objective(hi) - combined_objective(lo)) / (2 * h);
        };
        double g1 = fd(1e-5), g2 = fd(5e-6);
        if (!std::isfinite(g1) || std::abs(g1 - g2) > 1e-4 * (1.0 + std::abs(g2)))
          return false;
      }
  }
  return true;
}

bool criterion_8() {
  auto dataset = harness::load_dataset(world().dataset_path);

  // (a) gold-element recall nondecreasing over k_g; the deep element (the
  // one-hop neighbour) only enters the seed set as k_g grows.
  auto deep = dataset;
  for (std::size_t i = 0; i < deep.size(); ++i)
    deep[i].gold_element = "entity:SECRET" + planted::pad(static_cast<int>(i));
  auto cfg = planted_config();
  cfg.sweep_k_g = {1, 5, 10, 20};
  auto sweep = run_planted(cfg, deep);
  double prev = -1.0;
  for (const auto& p : sweep.points) {
    if (p.metrics.gold_element_recall < prev) return false;
    prev = p.metrics.gold_element_recall;
  }
  if (sweep.points.front().metrics.gold_element_recall >=
      sweep.points.back().metrics.gold_element_recall)
    return false;  // the trend must actually improve at desk scale

  // (b) one hop of expansion strictly beats none on the one-hop dataset.
  cfg = planted_config();
  cfg.sweep_hops = {0, 1};
  auto hops = run_planted(cfg, dataset);
  if (!(hops.points.at(1).metrics.accuracy_exact >
        hops.points.at(0).metrics.accuracy_exact))
    return false;

  // (c) graph-mode contexts carry strictly fewer non-gold segments than
  // chunk-mode contexts on the salted noise corpus.
  cfg = planted_config();
  cfg.k_g = 4;
  cfg.sweep_modes = {harness::Mode::Graph, harness::Mode::Chunk};
  auto modes = run_planted(cfg, dataset);
  return modes.points.at(0).metrics.mean_non_gold_segments <
         modes.points.at(1).metrics.mean_non_gold_segments;
}

bool criterion_9() {
  // Declared non-reproducible: published full-scale retrieval and accuracy
  // numbers need a multi-million-page knowledge base and trained multi-billion
  // parameter models. The oracle and property suite above (criteria 1-8) is
  // the desk-scale substitute.
  std::printf(
      "  note: full-scale benchmark numbers are out of scope by design; "
      "criteria 1-8 substitute oracle checks\n");
  return true;
}

bool criterion_10() {
  auto cfg = planted_config();
  auto dataset = harness::load_dataset(world().dataset_path);
  auto a = run_planted(cfg, dataset).deterministic_json();
  auto b = run_planted(cfg, dataset).deterministic_json();
  return !a.empty() && a == b;  // byte-identical
}

}  // namespace

int main() {
  // Build the planted world up front so its one-time cost is not billed to
  // any single criterion.
  (void)world();

  run(1, "vision-text example parses to 4 entities / 3 relationships / 4 matches", 1.0,
      criterion_1);
  run(2, "relation match attaches the (0.0, 0.3, 1.0, 0.77) union box", 1.0, criterion_2);
  run(3, "top-k equals the exhaustive-scan oracle on 1000x128 entries", 2.0, criterion_3);
  run(4, "subgraph expansion equals reference BFS; result(l) within result(l+1)", 5.0,
      criterion_4);
  run(5, "document aggregation and query composition are order-insensitive", 5.0,
      criterion_5);
  run(6, "planted corpus: R@1 = 1.00, gold element rank 1, exact accuracy = 1.00", 10.0,
      criterion_6);
  run(7, "objective values, closed forms, and finite-difference smoothness", 10.0,
      criterion_7);
  run(8, "ablations: k_g recall trend, expansion gain, graph-vs-chunk noise", 30.0,
      criterion_8);
  run(9, "full-scale benchmark numbers declared out of scope", 1.0, criterion_9);
  run(10, "repeated planted runs produce byte-identical reports", 20.0, criterion_10);

  if (failures) std::printf("%d criterion(s) failed\n", failures);
  else std::printf("all criteria passed\n");
  return failures == 0 ? 0 : 1;
}

#include "mkgrag/harness.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mkgrag/text.hpp"

namespace mkgrag::harness {

using nlohmann::json;

namespace {

std::string mode_name(Mode m) { return m == Mode::Graph ? "graph" : "chunk"; }

Mode mode_from_name(const std::string& s) {
  if (s == "graph") return Mode::Graph;
  if (s == "chunk") return Mode::Chunk;
  throw std::runtime_error("unknown mode: " + s);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (k_d < 1 || k_g < 1 || context_budget < 1)
    throw std::invalid_argument("counts must be >= 1");
  if (hops < 0) throw std::invalid_argument("hops must be >= 0");
  if (rho < 0) throw std::invalid_argument("rho must be >= 0");
}

ExperimentConfig ExperimentConfig::from_json(const std::string& content) {
  json j = json::parse(content);
  ExperimentConfig cfg;
  cfg.k_d = j.value("k_d", cfg.k_d);
  cfg.k_g = j.value("k_g", cfg.k_g);
  cfg.hops = j.value("hops", cfg.hops);
  cfg.rho = j.value("rho", cfg.rho);
  if (j.contains("chunk")) {
    cfg.chunk_policy.max_tokens = j["chunk"].value("max_tokens", cfg.chunk_policy.max_tokens);
    cfg.chunk_policy.min_tokens = j["chunk"].value("min_tokens", cfg.chunk_policy.min_tokens);
  }
  cfg.context_budget = j.value("context_budget", cfg.context_budget);
  cfg.mode = mode_from_name(j.value("mode", std::string("graph")));
  cfg.seed = j.value("seed", cfg.seed);
  cfg.index_path = j.value("index_path", std::string{});
  cfg.kg_dir = j.value("kg_dir", std::string{});
  cfg.segments_path = j.value("segments_path", std::string{});
  cfg.chat_backend = j.value("chat_backend", std::string("mock"));
  cfg.chat_fixtures_path = j.value("chat_fixtures", std::string{});
  cfg.embed_backend = j.value("embed_backend", std::string("mock"));
  cfg.backend_url = j.value("backend_url", std::string{});
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  for (const auto& v : j.value("sweep_k_g", json::array()))
    cfg.sweep_k_g.push_back(v.get<std::size_t>());
  for (const auto& v : j.value("sweep_hops", json::array()))
    cfg.sweep_hops.push_back(v.get<int>());
  for (const auto& v : j.value("sweep_modes", json::array()))
    cfg.sweep_modes.push_back(mode_from_name(v.get<std::string>()));
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::vector<EvalRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<EvalRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    json j = json::parse(line);
    EvalRecord r;
    r.query.question = j.at("question").get<std::string>();
    r.query.image_id = j.value("image_id", std::string{});
    r.gold_doc_id = j.value("gold_doc_id", std::string{});
    for (const auto& a : j.value("gold_answers", json::array()))
      r.gold_answers.push_back(a.get<std::string>());
    if (r.gold_answers.empty()) throw std::runtime_error("record without gold answers");
    r.gold_element = j.value("gold_element", std::string{});
    r.gold_segment = j.value("gold_segment", std::string{});
    r.split = j.value("split", std::string{});
    records.push_back(std::move(r));
  }
  return records;
}

std::string normalize_answer(const std::string& s) {
  std::string stripped;
  for (unsigned char c : s) {
    if (std::isalnum(c) || std::isspace(c))
      stripped.push_back(static_cast<char>(std::tolower(c)));
    else
      stripped.push_back(' ');
  }
  std::string out = text::collapse_whitespace(stripped);
  for (const char* article : {"a ", "an ", "the "}) {
    std::string prefix(article);
    if (out.rfind(prefix, 0) == 0) {
      out = out.substr(prefix.size());
      break;
    }
  }
  return out;
}

std::string generate_answer(const retrieval::Query& query,
                            const retrieval::AssembledContext& ctx,
                            backends::ChatBackend& backend) {
  backends::ChatRequest req;
  req.template_id = "answer";
  if (!query.image_id.empty())
    req.parts.push_back({backends::Part::Kind::Image, query.image_id});
  req.parts.push_back({backends::Part::Kind::Text, query.question});
  req.parts.push_back({backends::Part::Kind::Text, ctx.graph_block});
  req.parts.push_back({backends::Part::Kind::Text, ctx.segment_block});
  return text::trim(backend.chat_complete(req));
}

double vqa_accuracy(const std::vector<EvalRecord>& records, MatchMode mode) {
  if (records.empty()) throw std::invalid_argument("empty record list");
  std::size_t hits = 0;
  for (const auto& r : records) {
    std::string pred = normalize_answer(r.predicted);
    bool hit = false;
    for (const auto& gold : r.gold_answers) {
      std::string g = normalize_answer(gold);
      if (mode == MatchMode::Exact ? (pred == g)
                                   : (!g.empty() && pred.find(g) != std::string::npos)) {
        hit = true;
        break;
      }
    }
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double recall_at_k(const std::vector<EvalRecord>& records, std::size_t k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (records.empty()) return 0;
  std::size_t hits = 0;
  for (const auto& r : records)
    if (r.gold_doc_rank >= 1 && r.gold_doc_rank <= k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

Runner::Runner(std::shared_ptr<retrieval::Engine> engine,
               std::shared_ptr<backends::ChatBackend> chat)
    : engine_(std::move(engine)), chat_(std::move(chat)) {}

retrieval::AssembledContext Runner::run_query(EvalRecord& record,
                                              const ExperimentConfig& cfg,
                                              StageTimings* timings) const {
  auto t_start = std::chrono::steady_clock::now();
  auto t0 = t_start;

  // Rank enough documents to resolve recall up to R@50.
  std::size_t rank_depth = std::max<std::size_t>(cfg.k_d, 50);
  auto hits = engine_->retrieve_documents(record.query, rank_depth);
  record.gold_doc_rank = 0;
  for (std::size_t i = 0; i < hits.size(); ++i)
    if (hits[i].item_id == record.gold_doc_id) {
      record.gold_doc_rank = i + 1;
      break;
    }
  std::vector<std::string> doc_ids;
  for (std::size_t i = 0; i < std::min(cfg.k_d, hits.size()); ++i)
    doc_ids.push_back(hits[i].item_id);
  if (timings) timings->retrieve_s += seconds_since(t0);

  retrieval::AssembledContext ctx;
  if (cfg.mode == Mode::Graph) {
    t0 = std::chrono::steady_clock::now();
    auto composed = engine_->compose_query_graph(doc_ids);
    if (timings) timings->compose_s += seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    auto ranked = engine_->rank_elements(record.query, composed);
    record.gold_element_rank = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i)
      if (ranked[i].element_id == record.gold_element) {
        record.gold_element_rank = i + 1;
        break;
      }
    auto seeds = ranked;
    if (seeds.size() > cfg.k_g) seeds.resize(cfg.k_g);
    if (timings) timings->score_s += seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    auto sub = engine_->expand_subgraph(composed, seeds, cfg.hops, record.query, cfg.rho);
    if (timings) timings->expand_s += seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    ctx = engine_->assemble_context(sub, composed, cfg.context_budget);
    if (timings) timings->assemble_s += seconds_since(t0);
  } else {
    // Chunk ablation: top-k_g fixed-size chunks of the candidate documents
    // by the same embedding machinery.
    t0 = std::chrono::steady_clock::now();
    auto qvec = retrieval::embed_query(engine_->embedder(), record.query, engine_->dim());
    std::vector<retrieval::ScoredElement> ranked;
    for (const auto& doc_id : doc_ids) {
      for (const auto& seg_id : engine_->segment_store().segments_of(doc_id)) {
        const auto* entry = engine_->vector_index().find(index::Kind::Segment, seg_id);
        double score;
        if (entry) {
          score = index::cosine_similarity(qvec, entry->vector);
        } else {
          const auto* seg = engine_->segment_store().find(seg_id);
          backends::EmbeddingRequest req;
          req.role = backends::Role::Evidence;
          req.dim = engine_->dim();
          req.parts.push_back({backends::Part::Kind::Text, seg->text});
          for (const auto& img : seg->image_ids)
            req.parts.push_back({backends::Part::Kind::Image, img});
          score = index::cosine_similarity(qvec, engine_->embedder().embed(req));
        }
        ranked.push_back({seg_id, score, 0});
      }
    }
    std::sort(ranked.begin(), ranked.end(),
              [](const retrieval::ScoredElement& a, const retrieval::ScoredElement& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.element_id < b.element_id;
              });
    record.gold_element_rank = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i)
      if (ranked[i].element_id == record.gold_segment) {
        record.gold_element_rank = i + 1;
        break;
      }
    if (ranked.size() > cfg.k_g) ranked.resize(cfg.k_g);
    for (const auto& s : ranked) {
      const auto* seg = engine_->segment_store().find(s.element_id);
      if (!seg) continue;
      std::string entry = "[" + s.element_id + "] " + seg->text + "\n";
      std::size_t n = text::count_words(entry);
      if (ctx.token_count + n > cfg.context_budget) break;
      ctx.segment_block += entry;
      ctx.segment_ids.push_back(s.element_id);
      ctx.token_count += n;
    }
    if (timings) timings->assemble_s += seconds_since(t0);
  }

  t0 = std::chrono::steady_clock::now();
  record.predicted = generate_answer(record.query, ctx, *chat_);
  if (timings) {
    timings->generate_s += seconds_since(t0);
    timings->total_s += seconds_since(t_start);
  }
  return ctx;
}

namespace {

std::size_t count_non_gold_segments(const retrieval::AssembledContext& ctx,
                                    const EvalRecord& record) {
  std::size_t n = 0;
  for (const auto& seg_id : ctx.segment_ids)
    if (seg_id.substr(0, seg_id.find('#')) != record.gold_doc_id) ++n;
  return n;
}

}  // namespace

Report Runner::run_experiment(const ExperimentConfig& cfg,
                              const std::vector<EvalRecord>& dataset) const {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("empty dataset");

  auto k_gs = cfg.sweep_k_g.empty() ? std::vector<std::size_t>{cfg.k_g} : cfg.sweep_k_g;
  auto hops = cfg.sweep_hops.empty() ? std::vector<int>{cfg.hops} : cfg.sweep_hops;
  auto modes = cfg.sweep_modes.empty() ? std::vector<Mode>{cfg.mode} : cfg.sweep_modes;

  Report report;
  report.config = cfg;
  for (Mode mode : modes) {
    for (int l : hops) {
      for (std::size_t k_g : k_gs) {
        ExperimentConfig point_cfg = cfg;
        point_cfg.mode = mode;
        point_cfg.hops = l;
        point_cfg.k_g = k_g;

        SweepPoint point;
        point.mode = mode;
        point.hops = l;
        point.k_g = k_g;
        point.records = dataset;

        std::size_t with_gold_element = 0, gold_element_hits = 0;
        double non_gold_total = 0;
        for (auto& record : point.records) {
          auto ctx = run_query(record, point_cfg, &report.timings);
          non_gold_total += static_cast<double>(count_non_gold_segments(ctx, record));
          if (!record.gold_element.empty() || mode == Mode::Chunk) {
            std::string gold = mode == Mode::Chunk && !record.gold_segment.empty()
                                   ? record.gold_segment
                                   : record.gold_element;
            if (!gold.empty()) {
              ++with_gold_element;
              if (record.gold_element_rank >= 1 && record.gold_element_rank <= k_g)
                ++gold_element_hits;
            }
          }
        }
        point.metrics.accuracy_exact = vqa_accuracy(point.records, MatchMode::Exact);
        point.metrics.accuracy_contains = vqa_accuracy(point.records, MatchMode::Contains);
        for (std::size_t k : {1u, 5u, 10u, 20u, 50u})
          point.metrics.recall[k] = recall_at_k(point.records, k);
        point.metrics.gold_element_recall =
            with_gold_element ? static_cast<double>(gold_element_hits) /
                                    static_cast<double>(with_gold_element)
                              : 0.0;
        point.metrics.mean_non_gold_segments =
            non_gold_total / static_cast<double>(point.records.size());
        report.points.push_back(std::move(point));
      }
    }
  }
  return report;
}

namespace {

json config_to_json(const ExperimentConfig& cfg) {
  return {{"k_d", cfg.k_d},
          {"k_g", cfg.k_g},
          {"hops", cfg.hops},
          {"rho", cfg.rho},
          {"chunk",
           {{"max_tokens", cfg.chunk_policy.max_tokens},
            {"min_tokens", cfg.chunk_policy.min_tokens}}},
          {"context_budget", cfg.context_budget},
          {"mode", mode_name(cfg.mode)},
          {"seed", cfg.seed},
          {"embed_dim", cfg.embed_dim}};
}

json report_body(const Report& report) {
  json j;
  j["schema_version"] = Report::kSchemaVersion;
  j["config"] = config_to_json(report.config);
  j["points"] = json::array();
  for (const auto& p : report.points) {
    json jp = {{"mode", mode_name(p.mode)},
               {"hops", p.hops},
               {"k_g", p.k_g},
               {"metrics",
                {{"accuracy_exact", p.metrics.accuracy_exact},
                 {"accuracy_contains", p.metrics.accuracy_contains},
                 {"gold_element_recall", p.metrics.gold_element_recall},
                 {"mean_non_gold_segments", p.metrics.mean_non_gold_segments}}}};
    for (const auto& [k, v] : p.metrics.recall)
      jp["metrics"]["recall"]["R@" + std::to_string(k)] = v;
    jp["records"] = json::array();
    for (const auto& r : p.records) {
      jp["records"].push_back({{"question", r.query.question},
                               {"gold_doc_id", r.gold_doc_id},
                               {"gold_doc_rank", r.gold_doc_rank},
                               {"gold_element_rank", r.gold_element_rank},
                               {"predicted", r.predicted},
                               {"split", r.split}});
    }
    j["points"].push_back(std::move(jp));
  }
  return j;
}

}  // namespace

std::string Report::to_json() const {
  json j = report_body(*this);
  j["timings"] = {{"retrieve_s", timings.retrieve_s}, {"compose_s", timings.compose_s},
                  {"score_s", timings.score_s},       {"expand_s", timings.expand_s},
                  {"assemble_s", timings.assemble_s}, {"generate_s", timings.generate_s},
                  {"total_s", timings.total_s}};
  return j.dump(2);
}

std::string Report::deterministic_json() const { return report_body(*this).dump(2); }

Pipeline build_pipeline(const ExperimentConfig& cfg) {
  Pipeline p;
  std::string url = cfg.backend_url;
  if (const char* env = std::getenv("MKGRAG_BACKEND_URL"); env && *env) url = env;

  if (cfg.embed_backend == "http") {
    p.embedder = std::make_shared<backends::HttpEmbeddingBackend>(url);
  } else {
    p.embedder = std::make_shared<backends::MockEmbeddingBackend>(cfg.embed_dim);
  }
  if (cfg.chat_backend == "http") {
    p.chat = std::make_shared<backends::HttpChatBackend>(url);
  } else {
    auto fixtures = cfg.chat_fixtures_path.empty()
                        ? backends::ChatFixtureSet{}
                        : backends::ChatFixtureSet::from_json_file(cfg.chat_fixtures_path);
    p.chat = std::make_shared<backends::MockChatBackend>(std::move(fixtures));
  }

  auto idx = std::make_shared<index::VectorIndex>(index::VectorIndex::load(cfg.index_path));
  auto segments = std::make_shared<retrieval::SegmentStore>(
      retrieval::SegmentStore::load(cfg.segments_path));
  p.engine = std::make_shared<retrieval::Engine>(idx, cfg.kg_dir, segments, p.embedder);
  return p;
}

}  // namespace mkgrag::harness

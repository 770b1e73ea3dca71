#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "mkgrag/corpus.hpp"
#include "mkgrag/text.hpp"

using namespace mkgrag;
using namespace mkgrag::corpus;

namespace {

std::string make_words(const std::string& stem, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += stem + std::to_string(i);
  }
  return out;
}

Document doc_with_sections(std::vector<Section> sections) {
  Document d;
  d.doc_id = "d";
  d.sections = std::move(sections);
  return d;
}

}  // namespace

TEST_CASE("loader accepts well-formed lines and reports bad ones") {
  std::string jsonl =
      R"({"doc_id": "a", "title": "A", "sections": [{"heading": "h", "text": "body words"}]})"
      "\n"
      R"({"title": "no id", "sections": [{"text": "x"}]})"
      "\n"
      "not json\n"
      R"({"doc_id": "a", "sections": [{"text": "dup"}]})"
      "\n"
      R"({"doc_id": "b", "sections": [{"text": "ok", "image_ids": ["missing"]}]})"
      "\n"
      R"({"doc_id": "c", "sections": [{"text": "   "}]})"
      "\n";
  auto h = load_corpus_from_string(jsonl);
  REQUIRE(h.documents().size() == 1);
  CHECK(h.documents()[0].doc_id == "a");
  REQUIRE(h.issues().size() == 5);
  CHECK(h.issues()[0].line == 2);
  CHECK(h.issues()[0].reason == "missing doc_id");
  CHECK(h.issues()[1].reason == "invalid JSON");
  CHECK(h.issues()[2].reason == "duplicate doc_id: a");
  CHECK(h.issues()[3].reason == "dangling image ref: missing");
  CHECK(h.issues()[4].reason == "empty section text");
}

TEST_CASE("image assets resolve through segments") {
  std::string jsonl =
      R"({"doc_id": "d", "images": [{"image_id": "i1", "uri": "u", "caption": "cap"}],)"
      R"( "sections": [{"text": "pictured here", "image_ids": ["i1"]}]})"
      "\n";
  auto h = load_corpus_from_string(jsonl);
  REQUIRE(h.documents().size() == 1);
  auto segs = segment_document(h.documents()[0], {});
  REQUIRE(segs.size() == 1);
  auto imgs = resolve_images(segs[0], h);
  REQUIRE(imgs.size() == 1);
  CHECK(imgs[0].image_id == "i1");
  REQUIRE(imgs[0].caption.has_value());
  CHECK(*imgs[0].caption == "cap");
}

TEST_CASE("image-bearing sections are kept whole even when oversized") {
  Section big{"", make_words("w", 700), {"i1"}};
  Document d = doc_with_sections({big});
  d.images.push_back({"i1", "", std::nullopt});
  auto segs = segment_document(d, {512, 64});
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].image_ids == std::vector<std::string>{"i1"});
  CHECK(text::count_words(segs[0].text) == 700);
}

TEST_CASE("image-free sections merge greedily up to the budget") {
  std::vector<Section> secs;
  for (int i = 0; i < 6; ++i) secs.push_back({"", make_words("s" + std::to_string(i), 100), {}});
  auto segs = segment_document(doc_with_sections(std::move(secs)), {512, 64});
  // 100-word sections pack 5 to a 512 chunk.
  REQUIRE(segs.size() == 2);
  CHECK(text::count_words(segs[0].text) == 500);
  CHECK(text::count_words(segs[1].text) == 100);
  CHECK(segs[0].segment_id == "d#0");
  CHECK(segs[1].segment_id == "d#1");
  CHECK(segs[0].source_sections == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("a chunk below min_tokens keeps absorbing the next section") {
  // 30-word chunk is under min 64, so the 600-word follower still merges,
  // then the oversized chunk splits at sentence boundaries.
  std::string small = make_words("a", 30);
  std::string big;
  for (int i = 0; i < 60; ++i) big += make_words("b" + std::to_string(i), 10) + ". ";
  auto segs = segment_document(doc_with_sections({{"", small, {}}, {"", big, {}}}), {512, 64});
  REQUIRE(segs.size() >= 2);
  std::size_t total = 0;
  for (const auto& s : segs) {
    CHECK(text::count_words(s.text) <= 512);
    total += text::count_words(s.text);
  }
  CHECK(total == 630);
}

TEST_CASE("heading contributes to the chunk text") {
  Section sec{"History", "things happened"};
  CHECK(section_chunk_text(sec) == "History: things happened");
  CHECK(section_chunk_text({"", "plain"}) == "plain");
}

TEST_CASE("segmentation conserves every prepared section text") {
  std::mt19937 rng(41);
  std::uniform_int_distribution<std::size_t> nsec(1, 12);
  std::uniform_int_distribution<std::size_t> nwords(5, 200);
  std::uniform_int_distribution<int> has_image(0, 4);
  for (int it = 0; it < 50; ++it) {
    Document d;
    d.doc_id = "d";
    std::size_t expected_tokens = 0;
    for (std::size_t i = 0, k = nsec(rng); i < k; ++i) {
      Section s{"", make_words("w" + std::to_string(i), nwords(rng)), {}};
      if (has_image(rng) == 0) {
        std::string img = "img" + std::to_string(i);
        d.images.push_back({img, "", std::nullopt});
        s.image_ids.push_back(img);
      }
      expected_tokens += text::count_words(section_chunk_text(s));
      d.sections.push_back(std::move(s));
    }
    auto segs = segment_document(d, {64, 16});
    std::size_t got = 0;
    std::set<std::size_t> covered;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(segs[i].segment_id == "d#" + std::to_string(i));
      got += text::count_words(segs[i].text);
      for (auto si : segs[i].source_sections) covered.insert(si);
      // Only image-bearing segments may exceed the budget.
      if (segs[i].image_ids.empty()) CHECK(text::count_words(segs[i].text) <= 64);
    }
    CHECK(got == expected_tokens);
    CHECK(covered.size() == d.sections.size());
  }
}

TEST_CASE("invalid chunk policies are rejected") {
  Document d = doc_with_sections({{"", "x", {}}});
  CHECK_THROWS_AS(segment_document(d, {10, 20}), std::invalid_argument);
  CHECK_THROWS_AS(segment_document(d, {10, 0}), std::invalid_argument);
}

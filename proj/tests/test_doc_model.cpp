#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lambert/doc_model.hpp"

using namespace lambert;
using doc::BBox;
using doc::Document;

namespace {

Document make_doc(int tokens_per_line, int lines, double line_gap = 20.0) {
  Document d;
  d.page = BBox{0, 0, 612, 792};
  for (int l = 0; l < lines; ++l)
    for (int t = 0; t < tokens_per_line; ++t) {
      const double x = 50 + t * 50.0;
      const double y = 50 + l * line_gap;
      d.tokens.push_back({"w" + std::to_string(l) + "_" + std::to_string(t),
                          BBox{x, y, x + 40, y + 12}});
    }
  return d;
}

}  // namespace

TEST_CASE("parse_document") {
  const std::string good =
      R"({"page":[0,0,100,200],"tokens":[{"t":"hello","b":[10,10,40,22]}],"attrs":{"income":"5"}})";
  auto d = doc::parse_document(good, "d0");
  REQUIRE(d.tokens.size() == 1);
  CHECK(d.tokens[0].text == "hello");
  CHECK(d.attrs.at("income") == "5");
  CHECK(d.page.x2 == 100);

  // box exceeding the page clamps to it
  const std::string overshoot =
      R"({"page":[0,0,100,200],"tokens":[{"t":"x","b":[90,10,130,22]}]})";
  auto d2 = doc::parse_document(overshoot);
  CHECK(d2.tokens[0].box.x2 == 100.0);

  CHECK_THROWS_WITH_AS(doc::parse_document(R"({"tokens":[]})"), doctest::Contains("page"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(
      doc::parse_document(R"({"page":[0,0,100,200],"tokens":[{"t":"x","b":[50,10,40,22]}]})"),
      doctest::Contains("token 0"), std::runtime_error);
}

TEST_CASE("serialize round-trip") {
  auto d = make_doc(3, 2);
  d.attrs["income"] = "1000";
  auto text = doc::serialize_document(d);
  auto d2 = doc::parse_document(text);
  REQUIRE(d2.tokens.size() == d.tokens.size());
  for (size_t i = 0; i < d.tokens.size(); ++i) {
    CHECK(d2.tokens[i].text == d.tokens[i].text);
    CHECK(d2.tokens[i].box.x1 == doctest::Approx(d.tokens[i].box.x1));
  }
  CHECK(d2.attrs.at("income") == "1000");
}

TEST_CASE("normalize_page") {
  Document d;
  d.page = BBox{0, 0, 612, 792};
  d.tokens.push_back({"t", BBox{61.2, 79.2, 122.4, 158.4}});
  auto [nd, geom] = doc::normalize_page(d);
  CHECK(geom.w == doctest::Approx(612.0 / 792.0).epsilon(1e-9));
  CHECK(geom.h == doctest::Approx(1.0));
  CHECK(nd.tokens[0].box.x1 == doctest::Approx(0.077273).epsilon(1e-4));
  CHECK(nd.tokens[0].box.y1 == doctest::Approx(0.1));
  CHECK(nd.tokens[0].box.x2 == doctest::Approx(0.154545).epsilon(1e-4));
  CHECK(nd.tokens[0].box.y2 == doctest::Approx(0.2));

  // already normalized -> identity; applying twice equals applying once
  auto [nd2, geom2] = doc::normalize_page(nd);
  CHECK(std::abs(nd2.tokens[0].box.x1 - nd.tokens[0].box.x1) < 1e-12);
  CHECK(std::abs(nd2.page.x2 - nd.page.x2) < 1e-12);

  // landscape: larger side becomes 1
  Document land;
  land.page = BBox{0, 0, 800, 400};
  land.tokens.push_back({"t", BBox{0, 0, 80, 40}});
  auto [nl, gl] = doc::normalize_page(land);
  CHECK(gl.w == doctest::Approx(1.0));
  CHECK(gl.h == doctest::Approx(0.5));

  Document degenerate;
  degenerate.page = BBox{5, 5, 5, 10};
  CHECK_THROWS_AS(doc::normalize_page(degenerate), std::invalid_argument);
}

TEST_CASE("interpolate_subword_boxes") {
  auto parts = doc::interpolate_subword_boxes(BBox{0, 0, 6, 1}, {2, 4});
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].x1 == doctest::Approx(0));
  CHECK(parts[0].x2 == doctest::Approx(2));
  CHECK(parts[1].x1 == doctest::Approx(2));
  CHECK(parts[1].x2 == doctest::Approx(6));
  CHECK(parts[0].y2 == doctest::Approx(1));

  auto whole = doc::interpolate_subword_boxes(BBox{1, 2, 7, 3}, {6});
  CHECK(whole[0].x1 == 1.0);
  CHECK(whole[0].x2 == 7.0);

  auto thirds = doc::interpolate_subword_boxes(BBox{0, 0, 3, 1}, {1, 1, 1});
  CHECK(thirds[1].x1 == doctest::Approx(1));
  CHECK(thirds[1].x2 == doctest::Approx(2));

  // the sub-boxes tile the parent exactly, including the far edge
  auto odd = doc::interpolate_subword_boxes(BBox{0, 0, 7, 1}, {3, 1, 3});
  CHECK(odd.back().x2 == 7.0);
  double width_sum = 0;
  for (const auto& b : odd) width_sum += b.width();
  CHECK(width_sum == doctest::Approx(7.0).epsilon(1e-12));

  CHECK_THROWS_AS(doc::interpolate_subword_boxes(BBox{0, 0, 1, 1}, {1, 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(doc::interpolate_subword_boxes(BBox{0, 0, 1, 1}, {}), std::invalid_argument);
}

TEST_CASE("filter_page thresholds") {
  // 49 tokens -> too few
  CHECK_FALSE(doc::filter_page(make_doc(7, 7)).accepted);
  CHECK(doc::filter_page(make_doc(7, 7)).reason == "too-few");

  auto big = make_doc(1, 1);
  big.tokens.clear();
  for (int i = 0; i < 1001; ++i)
    big.tokens.push_back({"t", BBox{0, static_cast<double>(i % 700), 10,
                                    static_cast<double>(i % 700) + 8}});
  auto rb = doc::filter_page(big);
  CHECK_FALSE(rb.accepted);
  CHECK(rb.reason == "too-many");

  // 50 tokens across 10 varied lines -> accept
  Document varied;
  varied.page = BBox{0, 0, 612, 792};
  int counts[10] = {2, 9, 3, 8, 4, 7, 2, 6, 5, 4};
  for (int l = 0; l < 10; ++l)
    for (int t = 0; t < counts[l]; ++t) {
      const double x = 40 + t * 55.0, y = 50 + l * 30.0;
      varied.tokens.push_back({"w", BBox{x, y, x + 45, y + 12}});
    }
  REQUIRE(varied.tokens.size() == 50);
  CHECK(doc::filter_page(varied).accepted);

  // uniform plain-text block: >= 20 lines, all the same length
  auto plain = make_doc(9, 22);
  REQUIRE(plain.tokens.size() >= 50);
  auto rp = doc::filter_page(plain);
  CHECK_FALSE(rp.accepted);
  CHECK(rp.reason == "plain-text");
}

TEST_CASE("chunk_sequence") {
  std::vector<int> xs(1000);
  for (int i = 0; i < 1000; ++i) xs[static_cast<size_t>(i)] = i;
  auto chunks = doc::chunk_sequence(xs, 512);
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].size() == 512);
  CHECK(chunks[1].size() == 488);

  // flatten(chunks) == input
  std::vector<int> flat;
  for (const auto& c : chunks) flat.insert(flat.end(), c.begin(), c.end());
  CHECK(flat == xs);

  std::vector<int> small = {1, 2, 3};
  CHECK(doc::chunk_sequence(small, 512).size() == 1);
  CHECK(doc::chunk_sequence(std::vector<int>{}, 512).empty());
  CHECK_THROWS_AS(doc::chunk_sequence(small, 1), std::invalid_argument);
}

TEST_CASE("corpus loading accepts JSONL and directories") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "doc_model_corpus";
  fs::remove_all(dir);
  fs::create_directories(dir / "docs");

  std::vector<doc::Document> docs;
  for (int i = 0; i < 3; ++i) {
    auto d = make_doc(3, 2);
    d.tokens[0].text = "doc" + std::to_string(i);
    docs.push_back(d);
  }
  doc::save_corpus_jsonl((dir / "c.jsonl").string(), docs);
  auto from_jsonl = doc::load_corpus((dir / "c.jsonl").string());
  REQUIRE(from_jsonl.size() == 3);
  CHECK(from_jsonl[1].tokens[0].text == "doc1");
  CHECK(from_jsonl[0].id == "doc000000");

  for (int i = 0; i < 3; ++i) {
    std::ofstream out(dir / "docs" / ("page_" + std::to_string(i) + ".json"));
    out << doc::serialize_document(docs[static_cast<size_t>(i)]);
  }
  auto from_dir = doc::load_corpus((dir / "docs").string());
  REQUIRE(from_dir.size() == 3);
  CHECK(from_dir[2].tokens[0].text == "doc2");
  CHECK(from_dir[0].id == "page_0");  // file stem becomes the id
}

TEST_CASE("segment_lines") {
  Document same;
  same.page = BBox{0, 0, 100, 100};
  same.tokens.push_back({"a", BBox{0, 10, 10, 20}});
  same.tokens.push_back({"b", BBox{12, 10, 22, 20}});
  CHECK(doc::segment_lines(same).size() == 1);

  Document rows;
  rows.page = BBox{0, 0, 100, 100};
  rows.tokens.push_back({"a", BBox{0, 10, 10, 20}});
  rows.tokens.push_back({"b", BBox{0, 40, 10, 50}});
  auto segs = doc::segment_lines(rows);
  REQUIRE(segs.size() == 2);

  Document single;
  single.page = BBox{0, 0, 100, 100};
  single.tokens.push_back({"only", BBox{5, 5, 20, 15}});
  auto s1 = doc::segment_lines(single);
  REQUIRE(s1.size() == 1);
  CHECK(s1[0].token_indices == std::vector<int>{0});

  // partition property: every token in exactly one segment
  auto d = make_doc(5, 6);
  auto parts = doc::segment_lines(d);
  std::vector<int> seen(d.tokens.size(), 0);
  for (const auto& s : parts)
    for (int i : s.token_indices) ++seen[static_cast<size_t>(i)];
  for (int c : seen) CHECK(c == 1);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "lambert/doc_model.hpp"
#include "lambert/extraction.hpp"
#include "lambert/io.hpp"
#include "lambert/synthcorpus.hpp"

using namespace lambert;
using synth::DocType;
using synth::GenSpec;
using synth::ReadingOrder;

TEST_CASE("gen_document determinism and gold presence") {
  GenSpec spec;
  auto d1 = synth::gen_document(spec, 42);
  auto d2 = synth::gen_document(spec, 42);
  REQUIRE(d1.tokens.size() == d2.tokens.size());
  for (size_t i = 0; i < d1.tokens.size(); ++i) {
    CHECK(d1.tokens[i].text == d2.tokens[i].text);
    CHECK(d1.tokens[i].box.x1 == d2.tokens[i].box.x1);  // bit-exact
    CHECK(d1.tokens[i].box.y1 == d2.tokens[i].box.y1);
  }
  CHECK(d1.attrs == d2.attrs);
  REQUIRE(d1.attrs.count("income"));
  REQUIRE(d1.attrs.count("spending"));
  REQUIRE(d1.attrs.count("date"));

  auto different = synth::gen_document(spec, 43);
  CHECK(different.attrs != d1.attrs);
}

TEST_CASE("gold values are reachable by the auto-tagger") {
  const std::vector<ie::EntityClass> classes = {
      {"income", ie::DType::amount}, {"spending", ie::DType::amount}, {"date", ie::DType::date}};
  GenSpec spec;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    for (auto type : {DocType::kv_table, DocType::two_column_table, DocType::form}) {
      spec.doc_type = type;
      spec.reading_order =
          seed % 2 == 0 ? ReadingOrder::row_major : ReadingOrder::column_major;
      auto d = synth::gen_document(spec, seed);
      auto labels = ie::auto_tag(d, classes);
      for (size_t k = 0; k < classes.size(); ++k) {
        const int cls = static_cast<int>(k) + 1;
        CHECK(std::count(labels.begin(), labels.end(), cls) > 0);
      }
    }
  }
}

TEST_CASE("column_major ordering puts labels before values") {
  GenSpec spec;
  spec.reading_order = ReadingOrder::column_major;
  spec.noise = 0.0;
  auto d = synth::gen_document(spec, 7);

  // everything starting in the left half precedes everything starting right
  const double mid = 0.5 * (d.page.x1 + d.page.x2);
  int last_left = -1, first_right = static_cast<int>(d.tokens.size());
  for (int i = 0; i < static_cast<int>(d.tokens.size()); ++i) {
    if (d.tokens[static_cast<size_t>(i)].box.x1 < mid)
      last_left = std::max(last_left, i);
    else
      first_right = std::min(first_right, i);
  }
  CHECK(last_left < first_right);

  // row_major mode leaves the document unchanged
  auto rm = synth::perturb_reading_order(d, ReadingOrder::row_major);
  CHECK(rm.tokens.size() == d.tokens.size());
  for (size_t i = 0; i < d.tokens.size(); ++i) CHECK(rm.tokens[i].text == d.tokens[i].text);
}

TEST_CASE("perturb_reading_order preserves the token multiset") {
  GenSpec spec;
  auto d = synth::gen_document(spec, 11);
  auto perturbed = synth::perturb_reading_order(d, ReadingOrder::column_major);
  REQUIRE(perturbed.tokens.size() == d.tokens.size());

  auto key = [](const doc::Token& t) {
    return t.text + "@" + std::to_string(t.box.x1) + "," + std::to_string(t.box.y1);
  };
  std::multiset<std::string> a, b;
  for (const auto& t : d.tokens) a.insert(key(t));
  for (const auto& t : perturbed.tokens) b.insert(key(t));
  CHECK(a == b);

  // boxes travel with their tokens: same (text, box) pairing
  for (const auto& t : perturbed.tokens) {
    bool found = false;
    for (const auto& s : d.tokens)
      if (s.text == t.text && s.box.x1 == t.box.x1 && s.box.y1 == t.box.y1) {
        found = true;
        break;
      }
    CHECK(found);
  }

  // a 2x2 table reads L1, L2, V1, V2
  doc::Document tiny;
  tiny.page = doc::BBox{0, 0, 100, 100};
  tiny.tokens.push_back({"L1", doc::BBox{10, 10, 20, 15}});
  tiny.tokens.push_back({"V1", doc::BBox{80, 10, 90, 15}});
  tiny.tokens.push_back({"L2", doc::BBox{10, 30, 20, 35}});
  tiny.tokens.push_back({"V2", doc::BBox{80, 30, 90, 35}});
  auto cm = synth::perturb_reading_order(tiny, ReadingOrder::column_major);
  CHECK(cm.tokens[0].text == "L1");
  CHECK(cm.tokens[1].text == "L2");
  CHECK(cm.tokens[2].text == "V1");
  CHECK(cm.tokens[3].text == "V2");
}

TEST_CASE("gen_corpus writes JSONL + stats and regenerates bit-exact") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "synth_test";
  fs::create_directories(dir);
  const std::string path = (dir / "c.jsonl").string();

  GenSpec spec;
  auto stats = synth::gen_corpus(spec, 5, path, 100);
  CHECK(stats.count == 5);
  CHECK(stats.min_tokens >= 50);
  CHECK(stats.max_tokens <= 1000);

  auto docs = doc::load_corpus(path);
  REQUIRE(docs.size() == 5);
  CHECK(docs[0].id == "doc000000");

  const std::string first = read_text_file(path);
  synth::gen_corpus(spec, 5, path, 100);
  CHECK(read_text_file(path) == first);
  CHECK(fs::exists(path + ".stats.json"));

  // generated kv_table pages pass the page filter
  for (const auto& d : docs) CHECK(doc::filter_page(d).accepted);

  // plain-text pages are rejected by the heuristic
  GenSpec plain;
  plain.doc_type = DocType::plain_text;
  auto pd = synth::gen_document(plain, 3);
  auto res = doc::filter_page(pd);
  CHECK_FALSE(res.accepted);
  CHECK(res.reason == "plain-text");
}

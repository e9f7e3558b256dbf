#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lambert/extraction.hpp"

using namespace lambert;
using ie::DType;
using ie::Entity;
using ie::EntityClass;

namespace {

doc::Document tokens_doc(const std::vector<std::string>& words) {
  doc::Document d;
  d.id = "t0";
  d.page = doc::BBox{0, 0, 1, 1};
  double x = 0.01;
  for (const auto& w : words) {
    const double width = 0.01 * static_cast<double>(w.size());
    d.tokens.push_back({w, doc::BBox{x, 0.1, x + width, 0.12}});
    x += width + 0.01;
  }
  return d;
}

}  // namespace

TEST_CASE("normalize_value: dates") {
  CHECK(*ie::normalize_value(DType::date, "3rd May 2019") == "2019-05-03");
  CHECK(*ie::normalize_value(DType::date, "3 May 2019") == "2019-05-03");
  CHECK(*ie::normalize_value(DType::date, "21st March 2020") == "2020-03-21");
  CHECK(*ie::normalize_value(DType::date, "05/03/2019") == "2019-05-03");  // month first
  CHECK(*ie::normalize_value(DType::date, "2019-05-03") == "2019-05-03");
  CHECK(*ie::normalize_value(DType::date, "3 MAY 2019") == "2019-05-03");
  CHECK(*ie::normalize_value(DType::date, "3 Sep 2019") == "2019-09-03");
  CHECK_FALSE(ie::normalize_value(DType::date, "not a date"));
  CHECK_FALSE(ie::normalize_value(DType::date, "45/99/2019"));
  CHECK_FALSE(ie::normalize_value(DType::date, "May 2019"));
}

TEST_CASE("normalize_value: amounts") {
  CHECK(*ie::normalize_value(DType::amount, "\xC2\xA3"
                                            "1,234") == "1234.00");
  CHECK(*ie::normalize_value(DType::amount, "1234") == "1234.00");
  CHECK(*ie::normalize_value(DType::amount, "$12,345.67") == "12345.67");
  CHECK(*ie::normalize_value(DType::amount, "1000") == "1000.00");
  CHECK(*ie::normalize_value(DType::amount, "\xE2\x82\xAC"
                                            "99.5") == "99.50");
  CHECK(*ie::normalize_value(DType::amount, "-42") == "-42.00");
  // a detached currency mark is fine; a space between digit runs is not
  CHECK(*ie::normalize_value(DType::amount, "$ 262,749") == "262749.00");
  CHECK(*ie::normalize_value(DType::amount, "\xC2\xA3 982,221") == "982221.00");
  CHECK_FALSE(ie::normalize_value(DType::amount, "427,993.36 262749"));
  CHECK_FALSE(ie::normalize_value(DType::amount, "1 234"));
  CHECK_FALSE(ie::normalize_value(DType::amount, "abc"));
  CHECK_FALSE(ie::normalize_value(DType::amount, "1.2.3"));
  CHECK_FALSE(ie::normalize_value(DType::amount, ""));
  CHECK_FALSE(ie::normalize_value(DType::amount, "$"));
}

TEST_CASE("normalize_value: text, and idempotence for all dtypes") {
  CHECK(*ie::normalize_value(DType::text, "  ACME  Ltd. ") == "acme ltd");
  CHECK(*ie::normalize_value(DType::text, "Hello,   World!") == "hello world");

  for (const auto& [dtype, sample] : std::vector<std::pair<DType, std::string>>{
           {DType::date, "3rd May 2019"},
           {DType::amount, "\xC2\xA3"
                           "1,234"},
           {DType::text, "  ACME  Ltd. "}}) {
    auto once = ie::normalize_value(dtype, sample);
    REQUIRE(once);
    auto twice = ie::normalize_value(dtype, *once);
    REQUIRE(twice);
    CHECK(*twice == *once);
  }
}

TEST_CASE("auto_tag") {
  const std::vector<EntityClass> classes = {{"income", DType::amount}};

  auto d = tokens_doc({"Income", ":", "\xC2\xA3"
                                      "1,000"});
  d.attrs["income"] = "1000";
  auto labels = ie::auto_tag(d, classes);
  CHECK(labels == std::vector<int>{0, 0, 1});

  // gold absent from the page: no labels
  auto d2 = tokens_doc({"Income", ":", "999"});
  d2.attrs["income"] = "1000";
  CHECK(ie::auto_tag(d2, classes) == std::vector<int>{0, 0, 0});

  // two keys on disjoint spans
  const std::vector<EntityClass> two = {{"income", DType::amount}, {"date", DType::date}};
  auto d3 = tokens_doc({"1,000", "on", "3rd", "May", "2019"});
  d3.attrs["income"] = "1000";
  d3.attrs["date"] = "2019-05-03";
  CHECK(ie::auto_tag(d3, two) == std::vector<int>{1, 0, 2, 2, 2});

  // overlap: the longer match wins
  auto d4 = tokens_doc({"3", "May", "2019"});
  d4.attrs["date"] = "3 May 2019";
  d4.attrs["year"] = "2019";
  const std::vector<EntityClass> overlap = {{"year", DType::text}, {"date", DType::date}};
  CHECK(ie::auto_tag(d4, overlap) == std::vector<int>{2, 2, 2});
}

TEST_CASE("decode_entities") {
  const std::vector<EntityClass> classes = {{"income", DType::amount}};
  auto d = tokens_doc({"a", "b", "c", "d", "e"});

  // scores (0.9, 0.4) on a 2-token run -> geometric mean 0.6
  auto entities = ie::decode_entities(d, classes, {1, 1, 0, 1, 0}, {0.9f, 0.4f, 1.0f, 0.7f, 1.0f});
  REQUIRE(entities.size() == 2);
  CHECK(entities[0].score == doctest::Approx(0.6));
  CHECK(entities[0].span_begin == 0);
  CHECK(entities[0].span_end == 2);
  CHECK(entities[1].score == doctest::Approx(0.7));  // single token keeps its score
  CHECK(entities[1].span_begin == 3);

  // a run broken by one outside token yields two entities (checked above);
  // spans reproduce the labeled runs exactly
  std::vector<int> relabeled(5, 0);
  for (const auto& e : entities)
    for (int i = e.span_begin; i < e.span_end; ++i) relabeled[static_cast<size_t>(i)] = 1;
  CHECK(relabeled == std::vector<int>{1, 1, 0, 1, 0});
}

TEST_CASE("aggregate_select") {
  auto mk = [](const std::string& norm, double score, int begin) {
    Entity e;
    e.key = "income";
    e.normalized = norm;
    e.score = score;
    e.span_begin = begin;
    e.span_end = begin + 1;
    return e;
  };

  // duplicates outweigh a single higher-scoring value: 0.6+0.5 > 0.8
  auto pick = ie::aggregate_select({mk("1000.00", 0.6, 0), mk("1000.00", 0.5, 4),
                                    mk("900.00", 0.8, 2)});
  REQUIRE(pick);
  CHECK(pick->first == "1000.00");
  CHECK(pick->second == doctest::Approx(1.1));

  auto single = ie::aggregate_select({mk("7.00", 0.3, 1)});
  REQUIRE(single);
  CHECK(single->first == "7.00");

  CHECK_FALSE(ie::aggregate_select({}));

  // order invariance
  auto fwd = ie::aggregate_select({mk("a", 0.4, 0), mk("b", 0.3, 1), mk("a", 0.2, 5)});
  auto rev = ie::aggregate_select({mk("a", 0.2, 5), mk("b", 0.3, 1), mk("a", 0.4, 0)});
  CHECK(fwd->first == rev->first);
  CHECK(fwd->second == doctest::Approx(rev->second));

  // score tie breaks toward the earliest span
  auto tie = ie::aggregate_select({mk("late", 0.5, 7), mk("early", 0.5, 2)});
  CHECK(tie->first == "early");

  // failed normalization is discarded
  auto skipped = ie::aggregate_select({mk("", 0.9, 0), mk("x", 0.1, 3)});
  CHECK(skipped->first == "x");
}

TEST_CASE("f1_eval") {
  const std::vector<EntityClass> classes = {{"k", DType::amount}};

  // 2 correct of 3 predicted, 4 golds -> P=2/3, R=1/2, F1=4/7
  std::vector<ie::Prediction> preds = {
      {"d1", "k", "1.00", 1.0}, {"d2", "k", "2.00", 1.0}, {"d3", "k", "999.00", 1.0}};
  std::vector<ie::GoldValue> golds = {
      {"d1", "k", "1"}, {"d2", "k", "2"}, {"d3", "k", "3"}, {"d4", "k", "4"}};
  auto report = ie::f1_eval(preds, golds, classes);
  CHECK(report.overall.precision == doctest::Approx(2.0 / 3.0));
  CHECK(report.overall.recall == doctest::Approx(0.5));
  CHECK(report.overall.f1 == doctest::Approx(4.0 / 7.0));

  // perfect predictions
  auto perfect = ie::f1_eval({{"d1", "k", "1.00", 1.0}}, {{"d1", "k", "1"}}, classes);
  CHECK(perfect.overall.f1 == doctest::Approx(1.0));

  // no predictions, nonempty gold
  auto none = ie::f1_eval({}, {{"d1", "k", "1"}}, classes);
  CHECK(none.overall.precision == 0.0);
  CHECK(none.overall.recall == 0.0);
  CHECK(none.overall.f1 == 0.0);

  // document reordering leaves micro F1 unchanged
  std::vector<ie::Prediction> shuffled = {preds[2], preds[0], preds[1]};
  std::vector<ie::GoldValue> gshuffled = {golds[3], golds[1], golds[0], golds[2]};
  auto again = ie::f1_eval(shuffled, gshuffled, classes);
  CHECK(again.overall.f1 == doctest::Approx(report.overall.f1));

  // report JSON carries the numbers
  auto json_text = ie::report_to_json(report);
  CHECK(json_text.find("\"overall\"") != std::string::npos);
  CHECK(json_text.find("\"f1\"") != std::string::npos);
}

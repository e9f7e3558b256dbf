#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lambert/doc_model.hpp"

namespace lambert::ie {

enum class DType { date, amount, text };

DType dtype_from_string(const std::string& s);
std::string to_string(DType d);

struct EntityClass {
  std::string key;
  DType dtype = DType::text;
};

struct Entity {
  std::string key;
  std::string raw_text;
  std::string normalized;  // empty when normalization failed
  double score = 0.0;      // geometric mean of member token scores
  int span_begin = 0;      // token index range [begin, end)
  int span_end = 0;
};

struct KeyCounts {
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvalReport {
  std::map<std::string, KeyCounts> per_key;
  KeyCounts overall;  // micro-averaged
};

// Canonical form per data type:
//   date   -> YYYY-MM-DD; accepts "3 May 2019", "3rd May 2019" (ordinal
//             suffixes), "05/03/2019" (month first), "2019-05-03"
//   amount -> decimal with exactly two fraction digits, separators and
//             currency marks stripped
//   text   -> lowercase, punctuation stripped, whitespace collapsed
// Returns nullopt when the text does not parse as the type.
std::optional<std::string> normalize_value(DType dtype, const std::string& text);

// Token labels derived from gold attribute values: every sliding window of
// original tokens whose normalization equals the normalized gold value is
// labeled with that key. Overlap conflicts resolve to the longer match, then
// the earlier key. Returns one label per token: 0 = outside, k+1 = classes[k].
std::vector<int> auto_tag(const doc::Document& doc, const std::vector<EntityClass>& classes,
                          int max_window = 6);

// Maximal runs of the same non-outside label become entities scored by the
// geometric mean of their member scores.
std::vector<Entity> decode_entities(const doc::Document& doc,
                                    const std::vector<EntityClass>& classes,
                                    const std::vector<int>& labels,
                                    const std::vector<float>& scores);

// Groups one key's entities by normalized value, sums scores within a group,
// and returns the argmax group's value and summed score. Ties break toward
// the group whose earliest member span begins first.
std::optional<std::pair<std::string, double>> aggregate_select(const std::vector<Entity>& entities);

struct Prediction {
  std::string doc_id;
  std::string key;
  std::string value;  // normalized
  double score = 0.0;
};

// One gold record per (document, key) that the dataset provides.
struct GoldValue {
  std::string doc_id;
  std::string key;
  std::string value;  // raw; normalized during evaluation
};

// Micro-averaged end-to-end scoring: tp = normalized equality; a wrong
// prediction where gold exists counts as both fp and fn; a prediction with no
// gold is fp; gold with no (or wrong) prediction is fn.
EvalReport f1_eval(const std::vector<Prediction>& predictions, const std::vector<GoldValue>& golds,
                   const std::vector<EntityClass>& classes);

std::string report_to_json(const EvalReport& report);

}  // namespace lambert::ie

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lambert/doc_model.hpp"

namespace lambert::synth {

enum class DocType { kv_table, two_column_table, plain_text, form };
enum class ReadingOrder { row_major, column_major };

DocType doc_type_from_string(const std::string& s);
std::string to_string(DocType t);
ReadingOrder reading_order_from_string(const std::string& s);
std::string to_string(ReadingOrder o);

// Layout-rich synthetic pages with gold attributes. Gold values always occur
// (as some sliding window, possibly in a different surface format) in the
// token stream; distractor rows draw from the same value distribution.
struct GenSpec {
  DocType doc_type = DocType::kv_table;
  double page_w = 612, page_h = 792;
  // row counts keep generated pages inside the 50..1000-token window and
  // under the plain-text heuristic's 20-line threshold
  int min_rows = 11, max_rows = 14;
  double noise = 0.1;  // jitter amplitude as a fraction of the line height
  ReadingOrder reading_order = ReadingOrder::row_major;
};

doc::Document gen_document(const GenSpec& spec, uint64_t seed);

struct CorpusStats {
  int count = 0;
  std::vector<int> token_histogram;  // bucketed by 25 tokens
  int min_tokens = 0, max_tokens = 0;
};

// Writes `count` documents (seeds seed..seed+count-1) as JSONL plus a stats
// JSON next to it ("<out_path>.stats.json").
CorpusStats gen_corpus(const GenSpec& spec, int count, const std::string& out_path, uint64_t seed);

// Reorders the token sequence; boxes travel with their tokens and the
// (text, box) multiset never changes. column_major emits everything whose
// center lies in the left half of the page before the right half, each sorted
// top to bottom.
doc::Document perturb_reading_order(const doc::Document& doc, ReadingOrder order);

}  // namespace lambert::synth

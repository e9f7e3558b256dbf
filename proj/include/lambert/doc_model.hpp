#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lambert::doc {

struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

struct Token {
  std::string text;
  BBox box;
};

// A single page: tokens in OCR reading order plus the page bounding box.
// attrs holds the gold value per extractable key, when known.
struct Document {
  std::string id;
  std::vector<Token> tokens;
  BBox page;
  std::map<std::string, std::string> attrs;
};

// Normalized page extents: the larger side is exactly 1.
struct PageGeometry {
  double w = 1, h = 1;
};

struct Segment {
  std::vector<int> token_indices;  // contiguous in reading order
  BBox box;                        // union of member boxes
};

struct FilterResult {
  bool accepted = true;
  std::string reason;  // "too-few" | "too-many" | "plain-text" when rejected
};

struct PlainTextHeuristic {
  int min_lines = 20;        // heuristic applies only to pages with at least this many lines
  double uniform_frac = 0.8; // fraction of lines within the tolerance band
  int tolerance = 2;         // band around the median line length
};

// Parses one JSON document:
//   {"page":[x1,y1,x2,y2],"tokens":[{"t":"...","b":[x1,y1,x2,y2]},...],"attrs":{...}?}
// Token boxes are clamped to the page box. Throws std::runtime_error naming
// the offending token index on malformed input.
Document parse_document(const std::string& json_text, const std::string& id = "");

std::string serialize_document(const Document& doc);

// Similarity-transforms the page to (0,0,w,h) with max(w,h)=1 and applies the
// same transform to every token box.
std::pair<Document, PageGeometry> normalize_page(const Document& doc);

// Splits box horizontally in proportion to per-subword character counts.
std::vector<BBox> interpolate_subword_boxes(const BBox& box, const std::vector<int>& char_counts);

// Token-count window [50, 1000] on original tokens, plus the uniform-line
// heuristic that rejects plain text blocks.
FilterResult filter_page(const Document& doc, const PlainTextHeuristic& heur = {});

// Consecutive chunks of at most max_len elements; concatenation reproduces
// the input exactly.
template <class T>
std::vector<std::vector<T>> chunk_sequence(const std::vector<T>& xs, int max_len) {
  if (max_len < 2) throw std::invalid_argument("chunk_sequence: max_len must be >= 2");
  std::vector<std::vector<T>> chunks;
  for (size_t i = 0; i < xs.size(); i += static_cast<size_t>(max_len))
    chunks.emplace_back(xs.begin() + i,
                        xs.begin() + std::min(xs.size(), i + static_cast<size_t>(max_len)));
  return chunks;
}

// Groups reading-order-contiguous tokens into lines: a token joins the
// current segment iff its vertical overlap with the previous token is at
// least half the smaller height.
std::vector<Segment> segment_lines(const Document& doc);

// Corpus access: a JSONL file (one document per line) or a directory with one
// JSON file per document; both forms are accepted everywhere.
std::vector<Document> load_corpus(const std::string& path);
void save_corpus_jsonl(const std::string& path, const std::vector<Document>& docs);

}  // namespace lambert::doc

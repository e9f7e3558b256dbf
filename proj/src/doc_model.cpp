#include "lambert/doc_model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lambert/io.hpp"

namespace lambert::doc {

using nlohmann::json;

namespace {

BBox bbox_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error("parse error at " + where + ": box must be [x1,y1,x2,y2]");
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) || !std::isfinite(b.y2))
    throw std::runtime_error("parse error at " + where + ": non-finite coordinate");
  if (b.x1 > b.x2 || b.y1 > b.y2)
    throw std::runtime_error("parse error at " + where + ": negative box extent");
  return b;
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

Document parse_document(const std::string& json_text, const std::string& id) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("parse error: invalid JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("page"))
    throw std::runtime_error("parse error: missing \"page\" key");
  Document doc;
  doc.id = id;
  doc.page = bbox_from_json(j["page"], "page");
  if (j.contains("tokens")) {
    if (!j["tokens"].is_array()) throw std::runtime_error("parse error: \"tokens\" must be an array");
    int idx = 0;
    for (const auto& tj : j["tokens"]) {
      if (!tj.is_object() || !tj.contains("t") || !tj.contains("b"))
        throw std::runtime_error("parse error at token " + std::to_string(idx) +
                                 ": expected {\"t\":...,\"b\":...}");
      Token tok;
      tok.text = tj["t"].get<std::string>();
      tok.box = bbox_from_json(tj["b"], "token " + std::to_string(idx));
      // clamp to page: OCR output routinely overshoots the page box slightly
      tok.box.x1 = clamp(tok.box.x1, doc.page.x1, doc.page.x2);
      tok.box.x2 = clamp(tok.box.x2, doc.page.x1, doc.page.x2);
      tok.box.y1 = clamp(tok.box.y1, doc.page.y1, doc.page.y2);
      tok.box.y2 = clamp(tok.box.y2, doc.page.y1, doc.page.y2);
      doc.tokens.push_back(std::move(tok));
      ++idx;
    }
  }
  if (j.contains("attrs")) {
    for (const auto& [k, v] : j["attrs"].items()) doc.attrs[k] = v.get<std::string>();
  }
  return doc;
}

std::string serialize_document(const Document& doc) {
  json j;
  j["page"] = {doc.page.x1, doc.page.y1, doc.page.x2, doc.page.y2};
  j["tokens"] = json::array();
  for (const auto& t : doc.tokens)
    j["tokens"].push_back({{"t", t.text}, {"b", {t.box.x1, t.box.y1, t.box.x2, t.box.y2}}});
  if (!doc.attrs.empty()) {
    json attrs = json::object();
    for (const auto& [k, v] : doc.attrs) attrs[k] = v;
    j["attrs"] = attrs;
  }
  return j.dump();
}

std::pair<Document, PageGeometry> normalize_page(const Document& doc) {
  const double pw = doc.page.width(), ph = doc.page.height();
  if (pw <= 0 || ph <= 0)
    throw std::invalid_argument("normalize_page: page box must have positive area");
  const double s = 1.0 / std::max(pw, ph);
  Document out = doc;
  out.page = BBox{0, 0, pw * s, ph * s};
  for (auto& t : out.tokens) {
    t.box.x1 = (t.box.x1 - doc.page.x1) * s;
    t.box.x2 = (t.box.x2 - doc.page.x1) * s;
    t.box.y1 = (t.box.y1 - doc.page.y1) * s;
    t.box.y2 = (t.box.y2 - doc.page.y1) * s;
  }
  return {out, PageGeometry{out.page.x2, out.page.y2}};
}

std::vector<BBox> interpolate_subword_boxes(const BBox& box, const std::vector<int>& char_counts) {
  if (char_counts.empty())
    throw std::invalid_argument("interpolate_subword_boxes: empty char_counts");
  long total = 0;
  for (int c : char_counts) {
    if (c <= 0) throw std::invalid_argument("interpolate_subword_boxes: zero char count");
    total += c;
  }
  std::vector<BBox> out;
  out.reserve(char_counts.size());
  // cut positions computed from cumulative counts so the sub-boxes tile the
  // parent exactly (last right edge is the parent's right edge)
  long cum = 0;
  double left = box.x1;
  for (size_t i = 0; i < char_counts.size(); ++i) {
    cum += char_counts[i];
    const double right = i + 1 == char_counts.size()
                             ? box.x2
                             : box.x1 + box.width() * static_cast<double>(cum) /
                                            static_cast<double>(total);
    out.push_back(BBox{left, box.y1, right, box.y2});
    left = right;
  }
  return out;
}

FilterResult filter_page(const Document& doc, const PlainTextHeuristic& heur) {
  const size_t n = doc.tokens.size();
  if (n < 50) return {false, "too-few"};
  if (n > 1000) return {false, "too-many"};
  const auto lines = segment_lines(doc);
  if (static_cast<int>(lines.size()) >= heur.min_lines) {
    std::vector<int> lens;
    lens.reserve(lines.size());
    for (const auto& s : lines) lens.push_back(static_cast<int>(s.token_indices.size()));
    std::vector<int> sorted = lens;
    std::sort(sorted.begin(), sorted.end());
    const int median = sorted[sorted.size() / 2];
    int uniform = 0;
    for (int l : lens)
      if (std::abs(l - median) <= heur.tolerance) ++uniform;
    if (static_cast<double>(uniform) >= heur.uniform_frac * static_cast<double>(lens.size()))
      return {false, "plain-text"};
  }
  return {true, ""};
}

std::vector<Segment> segment_lines(const Document& doc) {
  std::vector<Segment> segments;
  for (int i = 0; i < static_cast<int>(doc.tokens.size()); ++i) {
    const BBox& b = doc.tokens[static_cast<size_t>(i)].box;
    bool joins = false;
    if (!segments.empty() && !segments.back().token_indices.empty()) {
      const BBox& prev = doc.tokens[static_cast<size_t>(segments.back().token_indices.back())].box;
      const double overlap = std::min(prev.y2, b.y2) - std::max(prev.y1, b.y1);
      const double smaller = std::min(prev.height(), b.height());
      joins = overlap >= 0.5 * smaller && overlap > 0;
    }
    if (joins) {
      Segment& s = segments.back();
      s.token_indices.push_back(i);
      s.box.x1 = std::min(s.box.x1, b.x1);
      s.box.y1 = std::min(s.box.y1, b.y1);
      s.box.x2 = std::max(s.box.x2, b.x2);
      s.box.y2 = std::max(s.box.y2, b.y2);
    } else {
      segments.push_back(Segment{{i}, b});
    }
  }
  return segments;
}

std::vector<Document> load_corpus(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<Document> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      docs.push_back(parse_document(read_text_file(f.string()), f.stem().string()));
    return docs;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "doc%06zu", lineno);
    docs.push_back(parse_document(line, idbuf));
    ++lineno;
  }
  return docs;
}

void save_corpus_jsonl(const std::string& path, const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += serialize_document(d);
    out += '\n';
  }
  atomic_write_file(path, out);
}

}  // namespace lambert::doc

#include "lambert/synthcorpus.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "lambert/extraction.hpp"
#include "lambert/io.hpp"
#include "lambert/rng.hpp"

namespace lambert::synth {

DocType doc_type_from_string(const std::string& s) {
  if (s == "kv_table") return DocType::kv_table;
  if (s == "two_column_table") return DocType::two_column_table;
  if (s == "plain_text") return DocType::plain_text;
  if (s == "form") return DocType::form;
  throw std::invalid_argument("unknown doc type: " + s);
}
std::string to_string(DocType t) {
  switch (t) {
    case DocType::kv_table: return "kv_table";
    case DocType::two_column_table: return "two_column_table";
    case DocType::plain_text: return "plain_text";
    case DocType::form: return "form";
  }
  return "kv_table";
}
ReadingOrder reading_order_from_string(const std::string& s) {
  if (s == "row_major") return ReadingOrder::row_major;
  if (s == "column_major") return ReadingOrder::column_major;
  throw std::invalid_argument("unknown reading order: " + s);
}
std::string to_string(ReadingOrder o) {
  return o == ReadingOrder::column_major ? "column_major" : "row_major";
}

namespace {

constexpr double kCharWidth = 9.0;
constexpr double kLineHeight = 16.0;
constexpr double kRowPitch = 26.0;

const std::vector<std::string> kDistractorLabels = {
    "assets",   "liabilities", "turnover", "grants",   "fees",      "costs",
    "reserves", "balance",     "donations", "expenses", "salaries", "interest",
    "tax",      "funds",       "payables", "receivables"};
const std::vector<std::string> kLabelPrefixes = {"total", "net", "gross", "other"};
const std::vector<std::string> kDateLabels = {"approved", "filed", "signed"};
const std::vector<std::string> kFillerWords = {
    "annual",  "report", "charity",   "commission", "summary", "statement", "financial",
    "year",    "ending", "registered", "number",     "section", "overview",  "accounts",
    "trustees", "review", "activities", "structure",  "public",  "benefit"};

struct ValueStrings {
  std::string display;  // what is printed on the page
  std::string gold;     // another surface form of the same value
};

ValueStrings amount_value(Rng& rng) {
  const long long pounds = 100 + static_cast<long long>(rng.uniform_int(999900));
  const bool with_pennies = rng.bernoulli(0.3);
  const int pennies = with_pennies ? static_cast<int>(rng.uniform_int(100)) : 0;

  char plain[64];
  if (with_pennies)
    std::snprintf(plain, sizeof(plain), "%lld.%02d", pounds, pennies);
  else
    std::snprintf(plain, sizeof(plain), "%lld", pounds);

  // grouped thousands variant
  std::string grouped;
  {
    std::string s = std::to_string(pounds);
    int count = 0;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
      grouped += s[static_cast<size_t>(i)];
      if (++count % 3 == 0 && i > 0) grouped += ',';
    }
    std::reverse(grouped.begin(), grouped.end());
    if (with_pennies) {
      char frac[8];
      std::snprintf(frac, sizeof(frac), ".%02d", pennies);
      grouped += frac;
    }
  }

  // the spaced variants make the currency mark its own page token
  std::vector<std::string> forms = {plain,
                                    grouped,
                                    "\xC2\xA3" + grouped,
                                    "$" + grouped,
                                    "\xC2\xA3 " + grouped,
                                    "$ " + grouped};
  const size_t di = rng.uniform_int(forms.size());
  size_t gi = rng.uniform_int(forms.size());
  ValueStrings v;
  v.display = forms[di];
  v.gold = forms[gi];
  return v;
}

ValueStrings date_value(Rng& rng) {
  static const char* kMonthNames[12] = {"January", "February", "March",     "April",
                                        "May",     "June",     "July",      "August",
                                        "September", "October", "November", "December"};
  const int y = 2015 + static_cast<int>(rng.uniform_int(10));
  const int m = 1 + static_cast<int>(rng.uniform_int(12));
  const int d = 1 + static_cast<int>(rng.uniform_int(28));

  auto ordinal = [](int day) {
    if (day % 100 / 10 == 1) return "th";
    switch (day % 10) {
      case 1: return "st";
      case 2: return "nd";
      case 3: return "rd";
      default: return "th";
    }
  };
  char iso[16], slash[16], words[32], words_ord[32];
  std::snprintf(iso, sizeof(iso), "%04d-%02d-%02d", y, m, d);
  std::snprintf(slash, sizeof(slash), "%02d/%02d/%04d", m, d, y);
  std::snprintf(words, sizeof(words), "%d %s %d", d, kMonthNames[m - 1], y);
  std::snprintf(words_ord, sizeof(words_ord), "%d%s %s %d", d, ordinal(d), kMonthNames[m - 1], y);

  std::vector<std::string> forms = {iso, slash, words, words_ord};
  ValueStrings v;
  v.display = forms[rng.uniform_int(forms.size())];
  v.gold = forms[rng.uniform_int(forms.size())];
  return v;
}

// splits a display string into page tokens ("3 May 2019" -> three tokens)
std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct RowSpec {
  std::vector<std::string> label_tokens;
  std::vector<std::string> value_tokens;
  std::string attr_key;  // non-empty for gold rows
};

void emit_text_run(doc::Document& d, const std::vector<std::string>& words, double x, double y,
                   Rng& rng, double jitter) {
  for (const auto& w : words) {
    const double jx = jitter * kLineHeight * rng.uniform(-1.0, 1.0);
    const double jy = jitter * kLineHeight * rng.uniform(-1.0, 1.0);
    const double width = kCharWidth * static_cast<double>(w.size());
    d.tokens.push_back({w, doc::BBox{x + jx, y + jy, x + jx + width, y + jy + kLineHeight}});
    x += width + kCharWidth;
  }
}

doc::Document gen_table_page(const GenSpec& spec, Rng& rng, bool two_tables) {
  doc::Document d;
  d.page = doc::BBox{0, 0, spec.page_w, spec.page_h};

  const int rows = spec.min_rows + static_cast<int>(rng.uniform_int(
                                       static_cast<uint64_t>(spec.max_rows - spec.min_rows + 1)));

  // three header lines of randomized length; together with the two footer
  // lines they guarantee the 50-token floor at the smallest row count, and
  // the varying counts keep sequential positions from encoding row alignment
  auto filler_line = [&](int count, double y) {
    std::vector<std::string> words;
    for (int i = 0; i < count; ++i)
      words.push_back(kFillerWords[rng.uniform_int(kFillerWords.size())]);
    emit_text_run(d, words, 60, y, rng, spec.noise);
  };
  filler_line(5 + static_cast<int>(rng.uniform_int(4)), 26);
  filler_line(5 + static_cast<int>(rng.uniform_int(4)), 46);
  filler_line(5 + static_cast<int>(rng.uniform_int(4)), 66);

  // build the row plan: three gold rows at random positions, distractors with
  // values drawn from the same distributions, all normalized values distinct
  std::vector<RowSpec> plan(static_cast<size_t>(rows));
  std::vector<int> row_ids(static_cast<size_t>(rows));
  for (int i = 0; i < rows; ++i) row_ids[static_cast<size_t>(i)] = i;
  rng.shuffle(row_ids.begin(), row_ids.end());
  const int income_row = row_ids[0], spending_row = row_ids[1], date_row = row_ids[2];

  std::set<std::string> used_norms;
  auto fresh_amount = [&]() {
    for (int attempt = 0; attempt < 64; ++attempt) {
      ValueStrings v = amount_value(rng);
      auto norm = ie::normalize_value(ie::DType::amount, v.display);
      if (norm && used_norms.insert(*norm).second) return v;
    }
    throw std::runtime_error("gen_document: could not draw a distinct amount");
  };
  auto fresh_date = [&]() {
    for (int attempt = 0; attempt < 64; ++attempt) {
      ValueStrings v = date_value(rng);
      auto norm = ie::normalize_value(ie::DType::date, v.display);
      if (norm && used_norms.insert(*norm).second) return v;
    }
    throw std::runtime_error("gen_document: could not draw a distinct date");
  };

  for (int r = 0; r < rows; ++r) {
    RowSpec& row = plan[static_cast<size_t>(r)];
    if (r == income_row || r == spending_row) {
      const char* key = r == income_row ? "income" : "spending";
      row.attr_key = key;
      row.label_tokens = {key};
      ValueStrings v = fresh_amount();
      row.value_tokens = split_words(v.display);
      d.attrs[key] = v.gold;
    } else if (r == date_row) {
      row.attr_key = "date";
      row.label_tokens = {"date"};
      ValueStrings v = fresh_date();
      row.value_tokens = split_words(v.display);
      d.attrs["date"] = v.gold;
    } else if (rng.bernoulli(0.15)) {
      row.label_tokens = {kDateLabels[rng.uniform_int(kDateLabels.size())]};
      row.value_tokens = split_words(fresh_date().display);
    } else {
      std::string label = kDistractorLabels[rng.uniform_int(kDistractorLabels.size())];
      if (rng.bernoulli(0.35))
        row.label_tokens = {kLabelPrefixes[rng.uniform_int(kLabelPrefixes.size())], label};
      else
        row.label_tokens = {label};
      row.value_tokens = split_words(fresh_amount().display);
    }
    // optional separator token adds more token-count variance per row
    if (rng.bernoulli(0.5)) row.label_tokens.push_back(":");
  }

  // lay the rows out; two_tables splits them into side-by-side halves
  const double top = 100;
  if (!two_tables) {
    const double label_x = 60, value_x = 0.62 * spec.page_w;
    for (int r = 0; r < rows; ++r) {
      const double y = top + r * kRowPitch;
      emit_text_run(d, plan[static_cast<size_t>(r)].label_tokens, label_x, y, rng, spec.noise);
      emit_text_run(d, plan[static_cast<size_t>(r)].value_tokens, value_x, y, rng, spec.noise);
    }
  } else {
    const int half = (rows + 1) / 2;
    for (int r = 0; r < rows; ++r) {
      const bool left = r < half;
      // value columns sit clear of the page midline even for three-token dates
      const double label_x = left ? 40 : 0.54 * spec.page_w;
      const double value_x = left ? 0.24 * spec.page_w : 0.76 * spec.page_w;
      const double y = top + (left ? r : r - half) * kRowPitch;
      emit_text_run(d, plan[static_cast<size_t>(r)].label_tokens, label_x, y, rng, spec.noise);
      emit_text_run(d, plan[static_cast<size_t>(r)].value_tokens, value_x, y, rng, spec.noise);
    }
  }

  // two footer lines
  {
    std::vector<std::string> footer = {"page", "1", "of", "1", "registered", "number",
                                       std::to_string(1000000 + rng.uniform_int(9000000))};
    emit_text_run(d, footer, 60, spec.page_h - 60, rng, spec.noise);
    std::vector<std::string> footer2;
    const int len = 8 + static_cast<int>(rng.uniform_int(3));
    for (int i = 0; i < len; ++i)
      footer2.push_back(kFillerWords[rng.uniform_int(kFillerWords.size())]);
    emit_text_run(d, footer2, 60, spec.page_h - 36, rng, spec.noise);
  }
  return d;
}

doc::Document gen_plain_text(const GenSpec& spec, Rng& rng) {
  doc::Document d;
  d.page = doc::BBox{0, 0, spec.page_w, spec.page_h};
  const int lines = 25 + static_cast<int>(rng.uniform_int(12));
  const int base_len = 9;
  for (int l = 0; l < lines; ++l) {
    std::vector<std::string> words;
    const int len = base_len + static_cast<int>(rng.uniform_int(3)) - 1;
    for (int w = 0; w < len; ++w)
      words.push_back(kFillerWords[rng.uniform_int(kFillerWords.size())]);
    emit_text_run(d, words, 60, 60 + l * kRowPitch * 0.85, rng, spec.noise * 0.3);
  }
  return d;
}

doc::Document gen_form(const GenSpec& spec, Rng& rng) {
  doc::Document d;
  d.page = doc::BBox{0, 0, spec.page_w, spec.page_h};

  struct Field {
    std::string key;
    std::vector<std::string> label;
    std::vector<std::string> value;
  };
  std::set<std::string> used;
  std::vector<Field> fields;
  auto fresh_amount = [&]() {
    for (int attempt = 0; attempt < 64; ++attempt) {
      ValueStrings v = amount_value(rng);
      auto norm = ie::normalize_value(ie::DType::amount, v.display);
      if (norm && used.insert(*norm).second) return v;
    }
    throw std::runtime_error("gen_document: could not draw a distinct amount");
  };
  ValueStrings inc = fresh_amount(), spend = fresh_amount(), dt = date_value(rng);
  d.attrs["income"] = inc.gold;
  d.attrs["spending"] = spend.gold;
  d.attrs["date"] = dt.gold;
  fields.push_back({"income", {"income"}, split_words(inc.display)});
  fields.push_back({"spending", {"spending"}, split_words(spend.display)});
  fields.push_back({"date", {"date"}, split_words(dt.display)});
  const int extras = 12 + static_cast<int>(rng.uniform_int(8));
  for (int i = 0; i < extras; ++i) {
    Field f;
    f.label = {kDistractorLabels[rng.uniform_int(kDistractorLabels.size())]};
    f.value = split_words(fresh_amount().display);
    fields.push_back(std::move(f));
  }

  // scatter fields over a grid of slots; label immediately left of its value
  std::vector<std::pair<int, int>> slots;
  for (int gy = 0; gy < 9; ++gy)
    for (int gx = 0; gx < 2; ++gx) slots.emplace_back(gx, gy);
  rng.shuffle(slots.begin(), slots.end());
  for (size_t i = 0; i < fields.size() && i < slots.size(); ++i) {
    const double x = 50 + slots[i].first * 0.48 * spec.page_w;
    const double y = 80 + slots[i].second * 70;
    emit_text_run(d, fields[i].label, x, y, rng, spec.noise);
    emit_text_run(d, fields[i].value, x + 110, y, rng, spec.noise);
  }
  // filler to clear the 50-token floor
  std::vector<std::string> footer;
  for (int i = 0; i < 14; ++i) footer.push_back(kFillerWords[rng.uniform_int(kFillerWords.size())]);
  emit_text_run(d, footer, 50, spec.page_h - 36, rng, spec.noise);
  return d;
}

}  // namespace

doc::Document gen_document(const GenSpec& spec, uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x5EED));
  doc::Document d;
  switch (spec.doc_type) {
    case DocType::kv_table: d = gen_table_page(spec, rng, false); break;
    case DocType::two_column_table: d = gen_table_page(spec, rng, true); break;
    case DocType::plain_text: d = gen_plain_text(spec, rng); break;
    case DocType::form: d = gen_form(spec, rng); break;
  }
  // clamp to the page (jitter can push a box over the edge)
  for (auto& t : d.tokens) {
    t.box.x1 = std::clamp(t.box.x1, d.page.x1, d.page.x2);
    t.box.x2 = std::clamp(t.box.x2, d.page.x1, d.page.x2);
    t.box.y1 = std::clamp(t.box.y1, d.page.y1, d.page.y2);
    t.box.y2 = std::clamp(t.box.y2, d.page.y1, d.page.y2);
  }
  if (spec.reading_order == ReadingOrder::column_major)
    d = perturb_reading_order(d, ReadingOrder::column_major);
  return d;
}

CorpusStats gen_corpus(const GenSpec& spec, int count, const std::string& out_path,
                       uint64_t seed) {
  if (count < 1) throw std::invalid_argument("gen_corpus: count must be >= 1");
  CorpusStats stats;
  stats.count = count;
  std::vector<doc::Document> docs;
  docs.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto d = gen_document(spec, seed + static_cast<uint64_t>(i));
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "doc%06d", i);
    d.id = idbuf;
    const int n = static_cast<int>(d.tokens.size());
    const size_t bucket = static_cast<size_t>(n / 25);
    if (stats.token_histogram.size() <= bucket) stats.token_histogram.resize(bucket + 1, 0);
    ++stats.token_histogram[bucket];
    stats.min_tokens = stats.min_tokens == 0 ? n : std::min(stats.min_tokens, n);
    stats.max_tokens = std::max(stats.max_tokens, n);
    docs.push_back(std::move(d));
  }
  doc::save_corpus_jsonl(out_path, docs);

  nlohmann::json j;
  j["count"] = stats.count;
  j["min_tokens"] = stats.min_tokens;
  j["max_tokens"] = stats.max_tokens;
  j["token_histogram_bucket"] = 25;
  j["token_histogram"] = stats.token_histogram;
  atomic_write_file(out_path + ".stats.json", j.dump(2));
  return stats;
}

doc::Document perturb_reading_order(const doc::Document& doc, ReadingOrder order) {
  if (order == ReadingOrder::row_major) return doc;
  if (order != ReadingOrder::column_major)
    throw std::invalid_argument("perturb_reading_order: unknown mode");
  doc::Document out = doc;
  const double mid_x = 0.5 * (doc.page.x1 + doc.page.x2);

  // left column first, then right; within a column tokens group into text
  // lines by vertical overlap (>= half the smaller height), lines read top to
  // bottom and left to right, so jitter never reorders tokens within a line
  struct Line {
    double y_top;
    std::vector<int> members;
  };
  auto order_column = [&](std::vector<int> idx) {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return doc.tokens[static_cast<size_t>(a)].box.y1 <
             doc.tokens[static_cast<size_t>(b)].box.y1;
    });
    std::vector<Line> lines;
    for (int i : idx) {
      const auto& box = doc.tokens[static_cast<size_t>(i)].box;
      bool placed = false;
      for (auto& line : lines) {
        const auto& ref = doc.tokens[static_cast<size_t>(line.members.back())].box;
        const double overlap = std::min(ref.y2, box.y2) - std::max(ref.y1, box.y1);
        if (overlap > 0 && overlap >= 0.5 * std::min(ref.height(), box.height())) {
          line.members.push_back(i);
          placed = true;
          break;
        }
      }
      if (!placed) lines.push_back({box.y1, {i}});
    }
    std::stable_sort(lines.begin(), lines.end(),
                     [](const Line& a, const Line& b) { return a.y_top < b.y_top; });
    std::vector<int> result;
    for (auto& line : lines) {
      std::stable_sort(line.members.begin(), line.members.end(), [&](int a, int b) {
        return doc.tokens[static_cast<size_t>(a)].box.cx() <
               doc.tokens[static_cast<size_t>(b)].box.cx();
      });
      result.insert(result.end(), line.members.begin(), line.members.end());
    }
    return result;
  };

  // bucketing by the left edge keeps a run that starts in one column whole
  std::vector<int> left, right;
  for (int i = 0; i < static_cast<int>(doc.tokens.size()); ++i)
    (doc.tokens[static_cast<size_t>(i)].box.x1 < mid_x ? left : right).push_back(i);
  out.tokens.clear();
  for (int i : order_column(std::move(left))) out.tokens.push_back(doc.tokens[static_cast<size_t>(i)]);
  for (int i : order_column(std::move(right))) out.tokens.push_back(doc.tokens[static_cast<size_t>(i)]);
  return out;
}

}  // namespace lambert::synth

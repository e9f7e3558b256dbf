#include "lambert/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace lambert::ie {

DType dtype_from_string(const std::string& s) {
  if (s == "date") return DType::date;
  if (s == "amount") return DType::amount;
  if (s == "text") return DType::text;
  throw std::invalid_argument("unknown dtype: " + s);
}

std::string to_string(DType d) {
  switch (d) {
    case DType::date: return "date";
    case DType::amount: return "amount";
    case DType::text: return "text";
  }
  return "text";
}

namespace {

const char* kMonths[12] = {"january", "february", "march",     "april",   "may",      "june",
                           "july",    "august",   "september", "october", "november", "december"};

int month_from_name(std::string name) {
  for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (int m = 0; m < 12; ++m) {
    const std::string full = kMonths[m];
    if (name == full || (name.size() == 3 && full.compare(0, 3, name) == 0)) return m + 1;
  }
  return 0;
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

std::string strip_ordinal(const std::string& s) {
  // "3rd" -> "3"; suffix must follow digits
  if (s.size() > 2) {
    std::string suffix = s.substr(s.size() - 2);
    for (auto& c : suffix) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if ((suffix == "st" || suffix == "nd" || suffix == "rd" || suffix == "th") &&
        all_digits(s.substr(0, s.size() - 2)))
      return s.substr(0, s.size() - 2);
  }
  return s;
}

std::optional<std::string> format_date(int y, int m, int d) {
  if (y < 1000 || y > 9999 || m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return std::string(buf);
}

std::optional<std::string> normalize_date(const std::string& text) {
  // tokenize on spaces, commas, slashes, dashes
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == ',' || c == '/' || c == '-') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  if (parts.size() != 3) return std::nullopt;

  const bool has_slash = text.find('/') != std::string::npos;
  const bool has_dash = text.find('-') != std::string::npos;

  if (has_dash && all_digits(parts[0]) && parts[0].size() == 4 && all_digits(parts[1]) &&
      all_digits(parts[2]))
    return format_date(std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2]));

  if (has_slash && all_digits(parts[0]) && all_digits(parts[1]) && all_digits(parts[2]) &&
      parts[2].size() == 4)
    // numeric dates read month-first
    return format_date(std::stoi(parts[2]), std::stoi(parts[0]), std::stoi(parts[1]));

  // "3 May 2019" / "3rd May 2019"
  const std::string day = strip_ordinal(parts[0]);
  if (all_digits(day) && all_digits(parts[2]) && parts[2].size() == 4) {
    const int m = month_from_name(parts[1]);
    if (m > 0) return format_date(std::stoi(parts[2]), m, std::stoi(day));
  }
  return std::nullopt;
}

std::optional<std::string> normalize_amount(const std::string& text) {
  // strip currency marks (including the UTF-8 pound/euro) and trim; the
  // remaining numeral must be contiguous, so two space-separated numbers
  // never collapse into one amount
  std::string stripped;
  for (size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == 0xC2 && i + 1 < text.size() &&
        static_cast<unsigned char>(text[i + 1]) == 0xA3) {  // pound sign
      ++i;
      continue;
    }
    if (c == 0xE2 && i + 2 < text.size() &&
        static_cast<unsigned char>(text[i + 1]) == 0x82 &&
        static_cast<unsigned char>(text[i + 2]) == 0xAC) {  // euro sign
      i += 2;
      continue;
    }
    if (c == '$') continue;
    stripped += static_cast<char>(c);
  }
  const auto begin = stripped.find_first_not_of(" \t");
  if (begin == std::string::npos) return std::nullopt;
  const auto end = stripped.find_last_not_of(" \t");
  std::string digits = stripped.substr(begin, end - begin + 1);
  if (digits.find(' ') != std::string::npos || digits.find('\t') != std::string::npos)
    return std::nullopt;

  size_t pos = 0;
  if (digits[0] == '-') pos = 1;
  bool seen_digit = false, seen_dot = false;
  std::string numeral;
  if (pos == 1) numeral += '-';
  for (size_t i = pos; i < digits.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(digits[i]))) {
      seen_digit = true;
      numeral += digits[i];
    } else if (digits[i] == '.' && !seen_dot) {
      seen_dot = true;
      numeral += '.';
    } else if (digits[i] == ',') {
      continue;
    } else {
      return std::nullopt;
    }
  }
  if (!seen_digit) return std::nullopt;
  const double value = std::stod(numeral);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return std::string(buf);
}

std::string normalize_text(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (std::ispunct(c)) continue;
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

}  // namespace

std::optional<std::string> normalize_value(DType dtype, const std::string& text) {
  switch (dtype) {
    case DType::date: return normalize_date(text);
    case DType::amount: return normalize_amount(text);
    case DType::text: return normalize_text(text);
  }
  return std::nullopt;
}

std::vector<int> auto_tag(const doc::Document& doc, const std::vector<EntityClass>& classes,
                          int max_window) {
  const int n = static_cast<int>(doc.tokens.size());
  std::vector<int> labels(static_cast<size_t>(n), 0);

  struct Match {
    int start, len, cls;  // cls indexes classes
  };
  std::vector<Match> matches;
  for (size_t k = 0; k < classes.size(); ++k) {
    auto it = doc.attrs.find(classes[k].key);
    if (it == doc.attrs.end()) continue;
    auto gold = normalize_value(classes[k].dtype, it->second);
    if (!gold || gold->empty()) continue;
    for (int start = 0; start < n; ++start) {
      std::string window;
      for (int len = 1; len <= max_window && start + len <= n; ++len) {
        if (len > 1) window += ' ';
        window += doc.tokens[static_cast<size_t>(start + len - 1)].text;
        auto norm = normalize_value(classes[k].dtype, window);
        if (norm && *norm == *gold)
          matches.push_back({start, len, static_cast<int>(k)});
      }
    }
  }
  // longer matches first, then earlier key order, then position
  std::stable_sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    if (a.len != b.len) return a.len > b.len;
    if (a.cls != b.cls) return a.cls < b.cls;
    return a.start < b.start;
  });
  for (const auto& m : matches) {
    bool conflict = false;
    for (int i = m.start; i < m.start + m.len; ++i)
      if (labels[static_cast<size_t>(i)] != 0 && labels[static_cast<size_t>(i)] != m.cls + 1) {
        conflict = true;
        break;
      }
    if (conflict) continue;
    for (int i = m.start; i < m.start + m.len; ++i) labels[static_cast<size_t>(i)] = m.cls + 1;
  }
  return labels;
}

std::vector<Entity> decode_entities(const doc::Document& doc,
                                    const std::vector<EntityClass>& classes,
                                    const std::vector<int>& labels,
                                    const std::vector<float>& scores) {
  if (labels.size() != doc.tokens.size() || scores.size() != doc.tokens.size())
    throw std::invalid_argument("decode_entities: labels/scores must align with tokens");
  std::vector<Entity> entities;
  const int n = static_cast<int>(labels.size());
  int start = 0;
  while (start < n) {
    const int cls = labels[static_cast<size_t>(start)];
    int end = start + 1;
    while (end < n && labels[static_cast<size_t>(end)] == cls) ++end;
    if (cls > 0) {
      Entity e;
      e.key = classes[static_cast<size_t>(cls - 1)].key;
      double log_sum = 0.0;
      for (int i = start; i < end; ++i) {
        if (i > start) e.raw_text += ' ';
        e.raw_text += doc.tokens[static_cast<size_t>(i)].text;
        log_sum += std::log(std::max(1e-30, static_cast<double>(scores[static_cast<size_t>(i)])));
      }
      e.score = std::exp(log_sum / (end - start));
      e.span_begin = start;
      e.span_end = end;
      auto norm = normalize_value(classes[static_cast<size_t>(cls - 1)].dtype, e.raw_text);
      e.normalized = norm ? *norm : "";
      entities.push_back(std::move(e));
    }
    start = end;
  }
  return entities;
}

std::optional<std::pair<std::string, double>> aggregate_select(
    const std::vector<Entity>& entities) {
  struct Group {
    double score = 0.0;
    int first_begin = 1 << 30;
    int first_end = 1 << 30;
  };
  std::map<std::string, Group> groups;
  for (const auto& e : entities) {
    if (e.normalized.empty()) continue;  // failed normalization is discarded
    auto& g = groups[e.normalized];
    g.score += e.score;
    if (e.span_begin < g.first_begin ||
        (e.span_begin == g.first_begin && e.span_end < g.first_end)) {
      g.first_begin = e.span_begin;
      g.first_end = e.span_end;
    }
  }
  if (groups.empty()) return std::nullopt;
  const std::string* best = nullptr;
  for (const auto& [value, g] : groups) {
    if (!best) {
      best = &value;
      continue;
    }
    const auto& bg = groups.at(*best);
    if (g.score > bg.score ||
        (g.score == bg.score && (g.first_begin < bg.first_begin ||
                                 (g.first_begin == bg.first_begin && g.first_end < bg.first_end))))
      best = &value;
  }
  return std::make_pair(*best, groups.at(*best).score);
}

namespace {

void finalize(KeyCounts& c) {
  c.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  c.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  c.f1 = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
}

}  // namespace

EvalReport f1_eval(const std::vector<Prediction>& predictions, const std::vector<GoldValue>& golds,
                   const std::vector<EntityClass>& classes) {
  std::map<std::string, DType> dtypes;
  for (const auto& c : classes) dtypes[c.key] = c.dtype;

  std::map<std::pair<std::string, std::string>, std::string> pred_map;
  for (const auto& p : predictions) pred_map[{p.doc_id, p.key}] = p.value;
  std::map<std::pair<std::string, std::string>, std::string> gold_map;
  for (const auto& g : golds) {
    auto it = dtypes.find(g.key);
    const auto norm =
        it == dtypes.end() ? std::optional<std::string>(g.value) : normalize_value(it->second, g.value);
    if (norm) gold_map[{g.doc_id, g.key}] = *norm;
  }

  EvalReport report;
  for (const auto& c : classes) report.per_key[c.key];  // ensure all keys present

  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [dk, value] : pred_map) {
    seen.insert(dk);
    auto& counts = report.per_key[dk.second];
    auto git = gold_map.find(dk);
    if (git != gold_map.end() && git->second == value) {
      ++counts.tp;
    } else {
      ++counts.fp;
      if (git != gold_map.end()) ++counts.fn;  // wrong answer also misses the gold
    }
  }
  for (const auto& [dk, value] : gold_map) {
    if (seen.count(dk)) continue;
    ++report.per_key[dk.second].fn;
  }

  for (auto& [key, counts] : report.per_key) {
    finalize(counts);
    report.overall.tp += counts.tp;
    report.overall.fp += counts.fp;
    report.overall.fn += counts.fn;
  }
  finalize(report.overall);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  auto emit = [](const KeyCounts& c) {
    return nlohmann::json{{"tp", c.tp},           {"fp", c.fp},       {"fn", c.fn},
                          {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}};
  };
  j["overall"] = emit(report.overall);
  for (const auto& [key, counts] : report.per_key) j["per_key"][key] = emit(counts);
  return j.dump(2);
}

}  // namespace lambert::ie

#include "lambert/attnviz.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lambert::viz {

std::string attention_to_json(const AttentionRecord& record) {
  nlohmann::json j;
  j["doc_id"] = record.doc_id;
  j["layer"] = record.layer;
  j["head"] = record.head;
  j["tokens"] = record.tokens;
  j["boxes"] = nlohmann::json::array();
  for (const auto& b : record.boxes) j["boxes"].push_back({b.x1, b.y1, b.x2, b.y2});
  j["weights"] = record.weights;
  return j.dump();
}

std::string attention_svg(const AttentionRecord& record, const doc::PageGeometry& page,
                          int focus_token) {
  const int len = static_cast<int>(record.tokens.size());
  if (focus_token < 0 || focus_token >= len)
    throw std::invalid_argument("attention_svg: focus token out of range");
  const auto& row = record.weights[static_cast<size_t>(focus_token)];
  float max_w = 0.0f;
  for (int j = 0; j < len; ++j)
    if (j != focus_token) max_w = std::max(max_w, row[static_cast<size_t>(j)]);
  if (max_w <= 0.0f) max_w = 1.0f;

  const double scale = 800.0 / std::max(page.w, page.h);
  const double w = page.w * scale, h = page.h * scale;

  std::ostringstream svg;
  char buf[256];
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.2f %.2f\">\n",
                w, h, w, h);
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"0\" y=\"0\" width=\"%.2f\" height=\"%.2f\" fill=\"white\" "
                "stroke=\"#888\" stroke-width=\"1\"/>\n",
                w, h);
  svg << buf;

  auto esc = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  };

  for (int j = 0; j < len; ++j) {
    const auto& b = record.boxes[static_cast<size_t>(j)];
    const double x = b.x1 * scale, y = b.y1 * scale;
    const double bw = std::max(1.0, (b.x2 - b.x1) * scale);
    const double bh = std::max(1.0, (b.y2 - b.y1) * scale);
    if (j == focus_token) {
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" "
                    "stroke=\"#d00\" stroke-width=\"2\"/>\n",
                    x, y, bw, bh);
    } else {
      const double opacity = static_cast<double>(row[static_cast<size_t>(j)]) / max_w;
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#06c\" "
                    "fill-opacity=\"%.4f\" stroke=\"#bbb\" stroke-width=\"0.5\"/>\n",
                    x, y, bw, bh, opacity);
    }
    svg << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"%.2f\" font-family=\"monospace\" "
                  "fill=\"#222\">",
                  x + 1.0, y + bh - 2.0, std::max(4.0, bh - 4.0));
    svg << buf << esc(record.tokens[static_cast<size_t>(j)]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace lambert::viz

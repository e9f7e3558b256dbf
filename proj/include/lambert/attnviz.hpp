#pragma once

#include <string>
#include <vector>

#include "lambert/doc_model.hpp"

namespace lambert::viz {

struct AttentionRecord {
  std::string doc_id;
  int layer = 0;
  int head = 0;  // -1 = heads averaged within the layer
  std::vector<std::string> tokens;
  std::vector<doc::BBox> boxes;                // normalized
  std::vector<std::vector<float>> weights;     // len x len, each row sums to 1
};

std::string attention_to_json(const AttentionRecord& record);

// Page rendering: every token box drawn, the focus token outlined, the others
// filled with opacity proportional to the focus row's attention weight.
std::string attention_svg(const AttentionRecord& record, const doc::PageGeometry& page,
                          int focus_token);

}  // namespace lambert::viz

#include "lambert/layout.hpp"

#include <cmath>
#include <stdexcept>

namespace lambert::layout {

std::vector<double> make_theta(int n) {
  if (n < 8 || n % 8 != 0)
    throw std::invalid_argument("make_theta: n must be a positive multiple of 8, got " +
                                std::to_string(n));
  const int len = n / 8;
  std::vector<double> theta(static_cast<size_t>(len));
  if (len == 1) {
    theta[0] = kThetaMin;
    return theta;
  }
  const double ratio = kThetaMax / kThetaMin;  // 2000
  for (int r = 0; r < len; ++r)
    theta[static_cast<size_t>(r)] =
        kThetaMin * std::pow(ratio, static_cast<double>(r) / static_cast<double>(len - 1));
  return theta;
}

WindingConfig make_winding_config(int n, double seq_theta_max) {
  WindingConfig cfg;
  cfg.n = n;
  cfg.theta = make_theta(n);
  cfg.seq_theta_max = seq_theta_max;
  return cfg;
}

std::vector<double> winding(double t, const std::vector<double>& theta) {
  std::vector<double> out(theta.size() * 2);
  for (size_t r = 0; r < theta.size(); ++r) {
    out[2 * r] = std::cos(theta[r] * t);
    out[2 * r + 1] = std::sin(theta[r] * t);
  }
  return out;
}

LayoutVector layout_embedding(const doc::BBox& box, const WindingConfig& cfg) {
  LayoutVector lv;
  lv.box = box;
  lv.values.reserve(static_cast<size_t>(cfg.n));
  for (double coord : {box.x1, box.y1, box.x2, box.y2}) {
    auto block = winding(coord, cfg.theta);
    lv.values.insert(lv.values.end(), block.begin(), block.end());
  }
  return lv;
}

std::vector<double> layout_matrix(const std::vector<doc::BBox>& boxes, const WindingConfig& cfg) {
  std::vector<double> out;
  out.reserve(boxes.size() * static_cast<size_t>(cfg.n));
  for (const auto& b : boxes) {
    auto lv = layout_embedding(b, cfg);
    out.insert(out.end(), lv.values.begin(), lv.values.end());
  }
  return out;
}

std::vector<double> sinusoidal_positions(int max_len, int n, double m) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("sinusoidal_positions: n must be even and positive");
  const int len = n / 2;
  std::vector<double> theta(static_cast<size_t>(len));
  for (int r = 0; r < len; ++r)
    theta[static_cast<size_t>(r)] =
        len == 1 ? 1.0 : std::pow(m, static_cast<double>(r) / static_cast<double>(len - 1));
  std::vector<double> table;
  table.reserve(static_cast<size_t>(max_len) * static_cast<size_t>(n));
  for (int i = 0; i < max_len; ++i) {
    auto row = winding(static_cast<double>(i), theta);
    table.insert(table.end(), row.begin(), row.end());
  }
  return table;
}

Adapter<float> make_adapter(int n, int k, double sigma, Rng& rng) {
  Adapter<float> a;
  a.weight = nn::randn<float>({n, k}, rng, sigma, true);
  a.bias = nn::zeros<float>({n}, true);
  return a;
}

}  // namespace lambert::layout

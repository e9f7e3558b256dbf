#include "lambert/alt_layout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lambert/optim.hpp"

namespace lambert::alt {

NeighborhoodConfig make_neighborhood_config(const doc::Document& doc, double n) {
  NeighborhoodConfig cfg;
  cfg.side_multiplier = n;
  double total = 0;
  for (const auto& t : doc.tokens) total += t.box.height();
  cfg.line_height = doc.tokens.empty() ? 0.0 : total / static_cast<double>(doc.tokens.size());
  return cfg;
}

std::vector<uint8_t> render_neighborhood(const doc::Document& doc, int token_idx,
                                         const NeighborhoodConfig& cfg) {
  if (token_idx < 0 || token_idx >= static_cast<int>(doc.tokens.size()))
    throw std::invalid_argument("render_neighborhood: token index out of range");
  if (cfg.line_height <= 0)
    throw std::invalid_argument("render_neighborhood: line height must be positive");
  const double side = cfg.side_multiplier * cfg.line_height;
  const doc::BBox& anchor = doc.tokens[static_cast<size_t>(token_idx)].box;
  const double x0 = anchor.cx() - side / 2;
  const double y0 = anchor.cy() - side / 2;
  const double px = side / kBitmapSize;

  std::vector<uint8_t> bitmap(static_cast<size_t>(kBitmapSize) * kBitmapSize, 0);
  for (const auto& tok : doc.tokens) {
    const doc::BBox& b = tok.box;
    // pixel centers (i+0.5)*px from the neighborhood origin; set iff the
    // center lies in [x1,x2) x [y1,y2)
    const int cx0 = std::max(0, static_cast<int>(std::ceil((b.x1 - x0) / px - 0.5)));
    const int cx1 = std::min(kBitmapSize - 1, static_cast<int>(std::ceil((b.x2 - x0) / px - 0.5)) - 1);
    const int cy0 = std::max(0, static_cast<int>(std::ceil((b.y1 - y0) / px - 0.5)));
    const int cy1 = std::min(kBitmapSize - 1, static_cast<int>(std::ceil((b.y2 - y0) / px - 0.5)) - 1);
    for (int r = cy0; r <= cy1; ++r)
      for (int c = cx0; c <= cx1; ++c)
        bitmap[static_cast<size_t>(r) * kBitmapSize + c] = 1;
  }
  return bitmap;
}

AutoencoderParams make_autoencoder_params(Rng& rng) {
  AutoencoderParams p;
  int c = 1;
  for (int l = 0; l < kAeLayers; ++l) {
    const int cout = c * 2;
    const double std_enc = std::sqrt(2.0 / (9.0 * c));
    p.enc_k.push_back(nn::randn<float>({cout, c, 3, 3}, rng, std_enc, true));
    p.enc_b.push_back(nn::zeros<float>({cout}, true));
    c = cout;
  }
  for (int l = 0; l < kAeLayers; ++l) {
    const int cin = c;       // 64, 32, ..., 2
    const int cout = c / 2;  // transposed conv maps cin channels down to cout
    const double std_dec = std::sqrt(2.0 / (9.0 * cin));
    p.dec_k.push_back(nn::randn<float>({cin, cout, 3, 3}, rng, std_dec, true));
    p.dec_b.push_back(nn::zeros<float>({cout}, true));
    c = cout;
  }
  return p;
}

std::vector<float> autoencoder_embed(const std::vector<uint8_t>& bitmap,
                                     const AutoencoderParams& params) {
  if (bitmap.size() != static_cast<size_t>(kBitmapSize) * kBitmapSize)
    throw std::invalid_argument("autoencoder_embed: bitmap must be 64x64");
  auto latent = ae_encode(bitmap_tensor<float>(bitmap), params);
  return *latent.data;
}

namespace {

std::vector<nn::Tensor<float>> ae_trainable(AutoencoderParams& p) {
  std::vector<nn::Tensor<float>> out;
  for (auto& t : p.enc_k) out.push_back(t);
  for (auto& t : p.enc_b) out.push_back(t);
  for (auto& t : p.dec_k) out.push_back(t);
  for (auto& t : p.dec_b) out.push_back(t);
  return out;
}

}  // namespace

AeTrainResult autoencoder_train(const std::vector<std::vector<uint8_t>>& bitmaps, int epochs,
                                double lr, uint64_t seed) {
  if (bitmaps.empty()) throw std::invalid_argument("autoencoder_train: need at least one bitmap");
  Rng init_rng(Rng::derive(seed, 1));
  AeTrainResult result;
  result.params = make_autoencoder_params(init_rng);

  nn::AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  auto trainable = ae_trainable(result.params);
  nn::AdamW opt(trainable, cfg);

  std::vector<size_t> order(bitmaps.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(seed, 2, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());
    double total = 0;
    for (size_t i : order) {
      auto x = bitmap_tensor<float>(bitmaps[i]);
      auto latent = ae_encode(x, result.params);
      auto logits = ae_decode_logits(latent, result.params);
      auto loss = nn::bce_with_logits(logits, x);
      total += loss.item();
      auto gs = nn::backward(loss);
      std::vector<const std::vector<float>*> grads;
      grads.reserve(trainable.size());
      for (const auto& t : trainable) grads.push_back(gs.find(t));
      std::string diag;
      if (!opt.step(grads, lr, &diag))
        throw std::runtime_error("autoencoder_train: " + diag);
    }
    result.epoch_loss.push_back(total / static_cast<double>(bitmaps.size()));
  }
  return result;
}

double ae_eval_bce(const AutoencoderParams& params,
                   const std::vector<std::vector<uint8_t>>& bitmaps) {
  double total = 0;
  for (const auto& bm : bitmaps) {
    auto x = bitmap_tensor<float>(bm);
    auto logits = ae_decode_logits(ae_encode(x, params), params);
    total += nn::bce_with_logits(logits, x).item();
  }
  return bitmaps.empty() ? 0.0 : total / static_cast<double>(bitmaps.size());
}

double lp_distance(double ax, double ay, double bx, double by, double p) {
  if (p <= 0) throw std::invalid_argument("lp_distance: p must be positive");
  const double dx = std::pow(std::abs(ax - bx), p);
  const double dy = std::pow(std::abs(ay - by), p);
  return std::pow(dx + dy, 1.0 / p);
}

KnnGraph build_knn_graph(const std::vector<doc::Segment>& segments, int k, double p) {
  KnnGraph graph;
  graph.num_vertices = static_cast<int>(segments.size());
  graph.k = k;
  graph.p = p;
  graph.out_edges.resize(segments.size());
  graph.neighbors.resize(segments.size());
  if (segments.size() < 2) return graph;

  // scale x so that segment boxes are square on average
  double mean_w = 0, mean_h = 0;
  for (const auto& s : segments) {
    mean_w += s.box.width();
    mean_h += s.box.height();
  }
  mean_w /= static_cast<double>(segments.size());
  mean_h /= static_cast<double>(segments.size());
  const double sx = mean_w > 0 && mean_h > 0 ? mean_h / mean_w : 1.0;

  std::vector<std::pair<double, double>> corners(segments.size());
  for (size_t i = 0; i < segments.size(); ++i)
    corners[i] = {segments[i].box.x1 * sx, segments[i].box.y1};

  const int out_degree = std::min(k, graph.num_vertices - 1);
  for (size_t i = 0; i < segments.size(); ++i) {
    std::vector<std::pair<double, int>> dist;
    dist.reserve(segments.size() - 1);
    for (size_t j = 0; j < segments.size(); ++j) {
      if (j == i) continue;
      dist.emplace_back(lp_distance(corners[i].first, corners[i].second, corners[j].first,
                                    corners[j].second, p),
                        static_cast<int>(j));
    }
    std::sort(dist.begin(), dist.end());  // ties fall back to the lower index
    for (int e = 0; e < out_degree; ++e) graph.out_edges[i].push_back(dist[static_cast<size_t>(e)].second);
  }

  // symmetrize: w ~ v iff an edge exists in either direction
  std::vector<std::vector<uint8_t>> seen(segments.size(),
                                         std::vector<uint8_t>(segments.size(), 0));
  for (size_t i = 0; i < segments.size(); ++i)
    for (int j : graph.out_edges[i]) {
      seen[i][static_cast<size_t>(j)] = 1;
      seen[static_cast<size_t>(j)][i] = 1;
    }
  for (size_t i = 0; i < segments.size(); ++i)
    for (size_t j = 0; j < segments.size(); ++j)
      if (i != j && seen[i][j]) graph.neighbors[i].push_back(static_cast<int>(j));
  return graph;
}

GinParams make_gin_params(Rng& rng) {
  GinParams p;
  int in_dim = 4;
  for (int b = 0; b < kGinBlocks; ++b) {
    GinBlockT<float> blk;
    blk.w1 = nn::randn<float>({kGinHidden, in_dim}, rng, std::sqrt(2.0 / in_dim), true);
    blk.b1 = nn::zeros<float>({kGinHidden}, true);
    blk.w2 = nn::randn<float>({kGinHidden, kGinHidden}, rng, std::sqrt(2.0 / kGinHidden), true);
    blk.b2 = nn::zeros<float>({kGinHidden}, true);
    blk.bn_gamma = nn::full<float>({kGinHidden}, 1.0f, true);
    blk.bn_beta = nn::zeros<float>({kGinHidden}, true);
    blk.bn_rmean = nn::zeros<float>({kGinHidden});
    blk.bn_rvar = nn::full<float>({kGinHidden}, 1.0f);
    p.blocks.push_back(std::move(blk));
    in_dim = kGinHidden;
  }
  p.out_w = nn::randn<float>({kGinOutputDim, kGinHidden}, rng, 0.02, true);
  p.out_b = nn::zeros<float>({kGinOutputDim}, true);
  return p;
}

}  // namespace lambert::alt

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lambert/doc_model.hpp"
#include "lambert/rng.hpp"
#include "lambert/tensor.hpp"

namespace lambert::alt {

inline constexpr int kBitmapSize = 64;
inline constexpr int kAeLatentDim = 64;
inline constexpr int kAeLayers = 6;
inline constexpr int kGinHidden = 64;
inline constexpr int kGinOutputDim = 128;
inline constexpr int kGinBlocks = 6;  // 2 modules of 3 blocks

// ---------------------------------------------------------------------------
// autoencoder embeddings
// ---------------------------------------------------------------------------

struct NeighborhoodConfig {
  double side_multiplier = 22.0;  // N: neighborhood side = N * line height
  double line_height = 0.0;       // mean token-box height, normalized units
};

NeighborhoodConfig make_neighborhood_config(const doc::Document& doc, double n = 22.0);

// Binary 64x64 raster of the token's square neighborhood: side N*h centered
// on the token box center; a pixel is set iff its center lies inside some
// token box (half-open on the right/bottom edges).
std::vector<uint8_t> render_neighborhood(const doc::Document& doc, int token_idx,
                                         const NeighborhoodConfig& cfg);

template <class S>
struct AutoencoderParamsT {
  // encoder: 6 stride-2 convs, channels 1->2->4->8->16->32->64
  std::vector<nn::Tensor<S>> enc_k, enc_b;
  // decoder: 6 stride-2 transposed convs mirroring the encoder
  std::vector<nn::Tensor<S>> dec_k, dec_b;

  template <class T>
  AutoencoderParamsT<T> cast() const {
    AutoencoderParamsT<T> out;
    for (const auto& t : enc_k) out.enc_k.push_back(t.template cast<T>());
    for (const auto& t : enc_b) out.enc_b.push_back(t.template cast<T>());
    for (const auto& t : dec_k) out.dec_k.push_back(t.template cast<T>());
    for (const auto& t : dec_b) out.dec_b.push_back(t.template cast<T>());
    return out;
  }
};
using AutoencoderParams = AutoencoderParamsT<float>;

AutoencoderParams make_autoencoder_params(Rng& rng);

template <class S>
nn::Tensor<S> bitmap_tensor(const std::vector<uint8_t>& bitmap) {
  std::vector<S> vals(bitmap.size());
  for (size_t i = 0; i < bitmap.size(); ++i) vals[i] = static_cast<S>(bitmap[i]);
  return nn::from_values<S>({1, kBitmapSize, kBitmapSize}, std::move(vals));
}

// encoder forward: (1,64,64) -> latent [64]
template <class S>
nn::Tensor<S> ae_encode(const nn::Tensor<S>& bitmap, const AutoencoderParamsT<S>& p) {
  if (bitmap.shape != std::vector<int>{1, kBitmapSize, kBitmapSize})
    throw std::invalid_argument("ae_encode: bitmap must be 1x64x64");
  nn::Tensor<S> h = bitmap;
  for (int l = 0; l < kAeLayers; ++l) {
    h = nn::add_channel_bias(nn::conv2d(h, p.enc_k[static_cast<size_t>(l)], 2),
                             p.enc_b[static_cast<size_t>(l)]);
    h = nn::relu(h);
  }
  return nn::reshape(h, {kAeLatentDim});
}

// decoder forward to pixel logits: latent [64] -> (1,64,64)
template <class S>
nn::Tensor<S> ae_decode_logits(const nn::Tensor<S>& latent, const AutoencoderParamsT<S>& p) {
  nn::Tensor<S> h = nn::reshape(latent, {kAeLatentDim, 1, 1});
  for (int l = 0; l < kAeLayers; ++l) {
    h = nn::add_channel_bias(nn::conv2d_transpose(h, p.dec_k[static_cast<size_t>(l)], 2),
                             p.dec_b[static_cast<size_t>(l)]);
    if (l + 1 < kAeLayers) h = nn::relu(h);  // output layer stays linear; BCE applies the sigmoid
  }
  return h;
}

std::vector<float> autoencoder_embed(const std::vector<uint8_t>& bitmap,
                                     const AutoencoderParams& params);

struct AeTrainResult {
  AutoencoderParams params;
  std::vector<double> epoch_loss;  // mean BCE per epoch
};

AeTrainResult autoencoder_train(const std::vector<std::vector<uint8_t>>& bitmaps, int epochs,
                                double lr, uint64_t seed);

// mean reconstruction BCE over a set of bitmaps
double ae_eval_bce(const AutoencoderParams& params, const std::vector<std::vector<uint8_t>>& bitmaps);

// ---------------------------------------------------------------------------
// graph embeddings
// ---------------------------------------------------------------------------

// (|ax-bx|^p + |ay-by|^p)^(1/p); p = 1/2 favors axis-aligned neighbors
double lp_distance(double ax, double ay, double bx, double by, double p);

struct KnnGraph {
  int num_vertices = 0;
  int k = 0;
  double p = 0.5;
  std::vector<std::vector<int>> out_edges;   // directed K-NN edges
  std::vector<std::vector<int>> neighbors;   // symmetrized, deduplicated
};

// Directed K-NN over segment upper-left corners under lp_distance, after
// scaling x by (mean height / mean width) so segment boxes are square on
// average. Distance ties break toward the lower reading-order index.
KnnGraph build_knn_graph(const std::vector<doc::Segment>& segments, int k = 5, double p = 0.5);

// out(v) = (1+eps) f(v) + sum over neighbors of f; exact transpose backward
template <class S>
nn::Tensor<S> gin_aggregate(const std::vector<std::vector<int>>& adj, const nn::Tensor<S>& f,
                            double eps) {
  if (f.ndim() != 2 || static_cast<size_t>(f.dim(0)) != adj.size())
    throw std::invalid_argument("gin_aggregate: feature rows must match vertex count");
  const int v = f.dim(0), d = f.dim(1);
  nn::Tensor<S> out = nn::zeros<S>(f.shape);
  const S self = static_cast<S>(1.0 + eps);
  for (int i = 0; i < v; ++i) {
    S* orow = out.ptr() + static_cast<size_t>(i) * d;
    const S* frow = f.ptr() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) orow[j] = self * frow[j];
    for (int w : adj[static_cast<size_t>(i)]) {
      const S* wrow = f.ptr() + static_cast<size_t>(w) * d;
      for (int j = 0; j < d; ++j) orow[j] += wrow[j];
    }
  }
  auto adj_copy = std::make_shared<std::vector<std::vector<int>>>(adj);
  nn::detail::attach<S>(out, {f}, [adj_copy, v, d, self](const nn::Tensor<S>& o,
                                                         nn::GradStore<S>& gs) {
    const auto& g = gs.at(o);
    const auto& pf = o.node->parents[0];
    if (!pf.requires_grad) return;
    auto& gf = gs.at(pf);
    for (int i = 0; i < v; ++i) {
      const S* grow = g.data() + static_cast<size_t>(i) * d;
      S* frow = gf.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j) frow[j] += self * grow[j];
      for (int w : (*adj_copy)[static_cast<size_t>(i)]) {
        S* wrow = gf.data() + static_cast<size_t>(w) * d;
        for (int j = 0; j < d; ++j) wrow[j] += grow[j];
      }
    }
  });
  return out;
}

// block = aggregate, then two linear+ReLU layers, then batch normalization
template <class S>
struct GinBlockT {
  nn::Tensor<S> w1, b1, w2, b2;
  nn::Tensor<S> bn_gamma, bn_beta;
  nn::Tensor<S> bn_rmean, bn_rvar;  // running statistics, not trainable

  template <class T>
  GinBlockT<T> cast() const {
    return GinBlockT<T>{w1.template cast<T>(),       b1.template cast<T>(),
                        w2.template cast<T>(),       b2.template cast<T>(),
                        bn_gamma.template cast<T>(), bn_beta.template cast<T>(),
                        bn_rmean.template cast<T>(), bn_rvar.template cast<T>()};
  }
};

template <class S>
struct GinParamsT {
  std::vector<GinBlockT<S>> blocks;  // 6 = 2 modules x 3 blocks
  nn::Tensor<S> out_w, out_b;        // final linear 64 -> 128
  double eps = 0.0;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  template <class T>
  GinParamsT<T> cast() const {
    GinParamsT<T> out;
    for (const auto& b : blocks) out.blocks.push_back(b.template cast<T>());
    out.out_w = out_w.template cast<T>();
    out.out_b = out_b.template cast<T>();
    out.eps = eps;
    out.bn_momentum = bn_momentum;
    out.bn_eps = bn_eps;
    return out;
  }
};
using GinParams = GinParamsT<float>;

GinParams make_gin_params(Rng& rng);

// Per-vertex 128-dim embeddings from segment bounding boxes (features [V x 4]).
// update_running controls whether a training-mode pass refreshes the
// batch-norm running statistics (a single batch owner should).
template <class S>
nn::Tensor<S> gin_forward(const KnnGraph& graph, const nn::Tensor<S>& boxes,
                          GinParamsT<S>& params, bool training, bool update_running = true) {
  if (boxes.ndim() != 2 || boxes.dim(0) != graph.num_vertices || boxes.dim(1) != 4)
    throw std::invalid_argument("gin_forward: boxes must be |V| x 4");
  nn::Tensor<S> h = boxes;
  for (auto& blk : params.blocks) {
    h = gin_aggregate(graph.neighbors, h, params.eps);
    h = nn::relu(nn::linear(h, blk.w1, blk.b1));
    h = nn::relu(nn::linear(h, blk.w2, blk.b2));
    const bool touch_running = !training || update_running;
    h = nn::batch_norm(h, blk.bn_gamma, blk.bn_beta, touch_running ? &blk.bn_rmean : nullptr,
                       touch_running ? &blk.bn_rvar : nullptr, params.bn_momentum, params.bn_eps,
                       training);
  }
  return nn::linear(h, params.out_w, params.out_b);
}

}  // namespace lambert::alt

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lambert/alt_layout.hpp"
#include "lambert/bpe.hpp"
#include "lambert/checkpoint.hpp"
#include "lambert/doc_model.hpp"
#include "lambert/layout.hpp"
#include "lambert/optim.hpp"
#include "lambert/rng.hpp"
#include "lambert/tensor.hpp"

namespace lambert::model {

enum class LayoutMode { none, winding, autoencoder, graph };
enum class PositionalMode { trainable, sinusoidal };
enum class DropoutVariant { token, dimension, element };
enum class QScheduleMode { none, linear_half };

LayoutMode layout_mode_from_string(const std::string& s);
std::string to_string(LayoutMode m);
DropoutVariant dropout_variant_from_string(const std::string& s);
std::string to_string(DropoutVariant v);
QScheduleMode q_mode_from_string(const std::string& s);
std::string to_string(QScheduleMode m);
PositionalMode positional_mode_from_string(const std::string& s);
std::string to_string(PositionalMode m);

struct EncoderConfig {
  int n = 128;
  int layers = 4;
  int heads = 4;
  int ffn_dim = 0;  // 0 -> 4n
  int max_len = 128;
  int vocab_size = 0;
  LayoutMode layout_mode = LayoutMode::none;
  PositionalMode positional_mode = PositionalMode::trainable;
  DropoutVariant dropout_variant = DropoutVariant::element;
  QScheduleMode q_schedule_mode = QScheduleMode::none;
  int num_classes = 0;               // tagging head width (classes + outside); 0 = no head
  bool drop_positional_term = false; // at q=1, omit the term instead of zeroing it
  double ln_eps = 1e-5;
  double adapter_sigma = 0.02;
  double init_std = 0.1;
  double seq_theta_max = 10000.0;

  int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * n; }
  int layout_dim() const;  // k of the adapter for the active layout mode
  void validate() const;
};

// q(step) = min(1, 2*step/total) for linear_half; constantly 0 otherwise
double q_schedule(int64_t step, int64_t total, QScheduleMode mode);

// Inference-time q implied by the schedule: 1 after linear_half suppression,
// else 0.
double final_q(QScheduleMode mode);

template <class S>
struct LayerParamsT {
  nn::Tensor<S> ln1_g, ln1_b;
  nn::Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
  nn::Tensor<S> ln2_g, ln2_b;
  nn::Tensor<S> w1, b1, w2, b2;

  template <class T>
  LayerParamsT<T> cast() const {
    return LayerParamsT<T>{
        ln1_g.template cast<T>(), ln1_b.template cast<T>(), wq.template cast<T>(),
        bq.template cast<T>(),    wk.template cast<T>(),    bk.template cast<T>(),
        wv.template cast<T>(),    bv.template cast<T>(),    wo.template cast<T>(),
        bo.template cast<T>(),    ln2_g.template cast<T>(), ln2_b.template cast<T>(),
        w1.template cast<T>(),    b1.template cast<T>(),    w2.template cast<T>(),
        b2.template cast<T>()};
  }
};

template <class S>
struct EncoderParamsT {
  EncoderConfig cfg;
  layout::WindingConfig winding;  // layout_mode == winding
  nn::Tensor<S> tok_emb;          // [vocab x n]
  nn::Tensor<S> pos_emb;          // [max_len x n]
  layout::Adapter<S> adapter;     // layout modes only
  alt::GinParamsT<S> gin;         // graph mode only
  std::vector<LayerParamsT<S>> layers;
  nn::Tensor<S> final_g, final_b;
  nn::Tensor<S> mlm_bias;         // [vocab]; the decoder weight is tied to tok_emb
  nn::Tensor<S> tag_w, tag_b;     // [num_classes x n], [num_classes]
  // autoencoder mode: the frozen bitmap embedder travels with the checkpoint
  // (it produces constants, so it stays in single precision)
  alt::AutoencoderParamsT<float> ae_frozen;

  template <class T>
  EncoderParamsT<T> cast() const {
    EncoderParamsT<T> out;
    out.cfg = cfg;
    out.winding = winding;
    out.ae_frozen = ae_frozen;
    out.tok_emb = tok_emb.template cast<T>();
    out.pos_emb = pos_emb.template cast<T>();
    if (adapter.weight.defined()) out.adapter = adapter.template cast<T>();
    if (!gin.blocks.empty()) out.gin = gin.template cast<T>();
    for (const auto& l : layers) out.layers.push_back(l.template cast<T>());
    out.final_g = final_g.template cast<T>();
    out.final_b = final_b.template cast<T>();
    out.mlm_bias = mlm_bias.template cast<T>();
    if (tag_w.defined()) {
      out.tag_w = tag_w.template cast<T>();
      out.tag_b = tag_b.template cast<T>();
    }
    return out;
  }
};
using EncoderParams = EncoderParamsT<float>;

EncoderParams init_encoder_params(const EncoderConfig& cfg, uint64_t seed);
EncoderParams clone_params(const EncoderParams& params);

template <class S>
struct NamedParamRef {
  std::string name;
  nn::Tensor<S>* tensor;
  bool trainable;
};

// Canonical parameter enumeration: fixes the checkpoint naming and the
// optimizer ordering for every configuration.
template <class S>
std::vector<NamedParamRef<S>> enumerate_params(EncoderParamsT<S>& p) {
  std::vector<NamedParamRef<S>> out;
  out.push_back({"embed.word", &p.tok_emb, true});
  out.push_back({"embed.pos", &p.pos_emb, p.cfg.positional_mode == PositionalMode::trainable});
  if (p.cfg.layout_mode != LayoutMode::none) {
    out.push_back({"adapter.weight", &p.adapter.weight, true});
    out.push_back({"adapter.bias", &p.adapter.bias, true});
  }
  if (p.cfg.layout_mode == LayoutMode::graph) {
    for (size_t b = 0; b < p.gin.blocks.size(); ++b) {
      auto& blk = p.gin.blocks[b];
      const std::string prefix = "gin.block" + std::to_string(b) + ".";
      out.push_back({prefix + "w1", &blk.w1, true});
      out.push_back({prefix + "b1", &blk.b1, true});
      out.push_back({prefix + "w2", &blk.w2, true});
      out.push_back({prefix + "b2", &blk.b2, true});
      out.push_back({prefix + "bn.gamma", &blk.bn_gamma, true});
      out.push_back({prefix + "bn.beta", &blk.bn_beta, true});
      out.push_back({prefix + "bn.running_mean", &blk.bn_rmean, false});
      out.push_back({prefix + "bn.running_var", &blk.bn_rvar, false});
    }
    out.push_back({"gin.out.weight", &p.gin.out_w, true});
    out.push_back({"gin.out.bias", &p.gin.out_b, true});
  }
  for (size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    out.push_back({prefix + "ln1.gamma", &layer.ln1_g, true});
    out.push_back({prefix + "ln1.beta", &layer.ln1_b, true});
    out.push_back({prefix + "attn.wq", &layer.wq, true});
    out.push_back({prefix + "attn.bq", &layer.bq, true});
    out.push_back({prefix + "attn.wk", &layer.wk, true});
    out.push_back({prefix + "attn.bk", &layer.bk, true});
    out.push_back({prefix + "attn.wv", &layer.wv, true});
    out.push_back({prefix + "attn.bv", &layer.bv, true});
    out.push_back({prefix + "attn.wo", &layer.wo, true});
    out.push_back({prefix + "attn.bo", &layer.bo, true});
    out.push_back({prefix + "ln2.gamma", &layer.ln2_g, true});
    out.push_back({prefix + "ln2.beta", &layer.ln2_b, true});
    out.push_back({prefix + "ffn.w1", &layer.w1, true});
    out.push_back({prefix + "ffn.b1", &layer.b1, true});
    out.push_back({prefix + "ffn.w2", &layer.w2, true});
    out.push_back({prefix + "ffn.b2", &layer.b2, true});
  }
  out.push_back({"final_ln.gamma", &p.final_g, true});
  out.push_back({"final_ln.beta", &p.final_b, true});
  out.push_back({"mlm.bias", &p.mlm_bias, true});
  if (p.tag_w.defined()) {
    out.push_back({"tag.weight", &p.tag_w, true});
    out.push_back({"tag.bias", &p.tag_b, true});
  }
  if constexpr (std::is_same_v<S, float>) {
    if (p.cfg.layout_mode == LayoutMode::autoencoder) {
      auto& ae = p.ae_frozen;
      for (size_t l = 0; l < ae.enc_k.size(); ++l) {
        out.push_back({"ae.enc" + std::to_string(l) + ".k", &ae.enc_k[l], false});
        out.push_back({"ae.enc" + std::to_string(l) + ".b", &ae.enc_b[l], false});
      }
      for (size_t l = 0; l < ae.dec_k.size(); ++l) {
        out.push_back({"ae.dec" + std::to_string(l) + ".k", &ae.dec_k[l], false});
        out.push_back({"ae.dec" + std::to_string(l) + ".b", &ae.dec_b[l], false});
      }
    }
  }
  return out;
}

// ordered (name, tensor) pairs: the checkpoint surface
std::vector<nn::NamedTensor> named_tensors(EncoderParams& params);
// the trainable subset, aligned with names; excludes batch-norm running stats
// and the positional table when it is a sinusoidal constant
std::vector<nn::Tensor<float>> trainable_tensors(EncoderParams& params);
std::vector<std::string> trainable_names(const EncoderParams& params);

void save_encoder(const std::string& path, EncoderParams& params);
EncoderParams load_encoder(const std::string& path, const EncoderConfig& cfg);

// One model-ready sequence: subword ids and boxes plus the layout features
// the active mode needs. Layout features are plain data prepared outside the
// autodiff graph (except the GIN pass, which runs inside it).
struct SeqFeatures {
  std::vector<int> ids;
  std::vector<doc::BBox> boxes;
  std::vector<int> orig_index;      // subword -> original token
  std::vector<float> ae_latent;     // len x 64, autoencoder mode
  std::vector<int> seg_of_token;    // graph mode
  alt::KnnGraph graph;              // graph mode
  std::vector<double> seg_boxes;    // |V| x 4, graph mode

  int len() const { return static_cast<int>(ids.size()); }
};

// Unnormalized dropout masks over the positional rows: every entry is 0 or 1,
// survivors are never rescaled. The `dimension` variant shares one
// coordinate mask across all positions (and, by the caller drawing it once,
// across the batch).
std::vector<float> make_dimension_mask(int n, double q, Rng& rng);
std::vector<float> positional_dropout_mask(int len, int n, double q, DropoutVariant variant,
                                           Rng& rng, const std::vector<float>* shared_dim_mask);

// Spec-level single-vector form.
std::vector<double> positional_dropout(const std::vector<double>& p, double q,
                                       DropoutVariant variant, Rng& rng);

// x_i = tok[id_i] + D_q(pos[i]) + adapter(layout_i). pos_mask: empty for the
// identity; otherwise a len*n multiplier. At q >= 1 the positional term is
// zeroed (or omitted when cfg.drop_positional_term is set).
template <class S>
nn::Tensor<S> compose_inputs(const SeqFeatures& feat, EncoderParamsT<S>& params, double q,
                             const std::vector<float>& pos_mask, bool training,
                             bool update_bn = true) {
  const auto& cfg = params.cfg;
  const int len = feat.len();
  const int n = cfg.n;
  if (len == 0) throw std::invalid_argument("compose_inputs: empty sequence");
  if (len > cfg.max_len)
    throw std::invalid_argument("compose_inputs: sequence length " + std::to_string(len) +
                                " exceeds max_len " + std::to_string(cfg.max_len));

  nn::Tensor<S> x = nn::rows(params.tok_emb, feat.ids);

  const bool suppressed = q >= 1.0;
  if (!(suppressed && cfg.drop_positional_term)) {
    std::vector<int> iota(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) iota[static_cast<size_t>(i)] = i;
    nn::Tensor<S> pos = nn::rows(params.pos_emb, iota);
    if (suppressed) {
      pos = nn::mul(pos, nn::zeros<S>({len, n}));
    } else if (!pos_mask.empty()) {
      if (pos_mask.size() != static_cast<size_t>(len) * static_cast<size_t>(n))
        throw std::invalid_argument("compose_inputs: mask size mismatch");
      std::vector<S> mv(pos_mask.begin(), pos_mask.end());
      pos = nn::mul(pos, nn::from_values<S>({len, n}, std::move(mv)));
    }
    x = nn::add(x, pos);
  }

  if (cfg.layout_mode != LayoutMode::none) {
    nn::Tensor<S> layout_in;
    switch (cfg.layout_mode) {
      case LayoutMode::winding: {
        auto vals = layout::layout_matrix(feat.boxes, params.winding);
        std::vector<S> cast_vals(vals.begin(), vals.end());
        layout_in = nn::from_values<S>({len, n}, std::move(cast_vals));
        break;
      }
      case LayoutMode::autoencoder: {
        if (feat.ae_latent.size() != static_cast<size_t>(len) * alt::kAeLatentDim)
          throw std::invalid_argument("compose_inputs: missing autoencoder latents");
        std::vector<S> vals(feat.ae_latent.begin(), feat.ae_latent.end());
        layout_in = nn::from_values<S>({len, alt::kAeLatentDim}, std::move(vals));
        break;
      }
      case LayoutMode::graph: {
        if (feat.seg_of_token.size() != static_cast<size_t>(len) || feat.graph.num_vertices == 0)
          throw std::invalid_argument("compose_inputs: missing graph features");
        std::vector<S> vals(feat.seg_boxes.begin(), feat.seg_boxes.end());
        auto boxes_t = nn::from_values<S>({feat.graph.num_vertices, 4}, std::move(vals));
        auto gin_out = alt::gin_forward(feat.graph, boxes_t, params.gin, training,
                                        training && update_bn);
        layout_in = nn::rows(gin_out, feat.seg_of_token);
        break;
      }
      default:
        break;
    }
    x = nn::add(x, layout::adapter_apply(layout_in, params.adapter));
  }
  return x;
}

template <class S>
struct EncoderOutput {
  nn::Tensor<S> embeddings;               // len x n
  std::vector<nn::Tensor<S>> attention;   // layers*heads entries of [len x len]
};

// Pre-norm transformer encoder stack with a final layer norm.
template <class S>
EncoderOutput<S> encoder_forward(const nn::Tensor<S>& x, EncoderParamsT<S>& params,
                                 bool record_attention = false) {
  const auto& cfg = params.cfg;
  const int len = x.dim(0), n = cfg.n, heads = cfg.heads, hd = n / heads;
  EncoderOutput<S> out;
  nn::Tensor<S> h = x;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (auto& layer : params.layers) {
    auto a_in = nn::layer_norm(h, layer.ln1_g, layer.ln1_b, cfg.ln_eps);
    auto q = nn::linear(a_in, layer.wq, layer.bq);
    auto k = nn::linear(a_in, layer.wk, layer.bk);
    auto v = nn::linear(a_in, layer.wv, layer.bv);
    std::vector<nn::Tensor<S>> ctx;
    ctx.reserve(static_cast<size_t>(heads));
    for (int head = 0; head < heads; ++head) {
      auto qh = nn::slice_cols(q, head * hd, hd);
      auto kh = nn::slice_cols(k, head * hd, hd);
      auto vh = nn::slice_cols(v, head * hd, hd);
      auto scores = nn::scale(nn::matmul_nt(qh, kh), inv_sqrt);
      auto attn = nn::softmax(scores, 1);
      if (record_attention) out.attention.push_back(attn);
      ctx.push_back(nn::matmul(attn, vh));
    }
    auto merged = heads == 1 ? ctx[0] : nn::concat_cols(ctx);
    h = nn::add(h, nn::linear(merged, layer.wo, layer.bo));
    auto f_in = nn::layer_norm(h, layer.ln2_g, layer.ln2_b, cfg.ln_eps);
    auto f = nn::linear(nn::relu(nn::linear(f_in, layer.w1, layer.b1)), layer.w2, layer.b2);
    h = nn::add(h, f);
  }
  out.embeddings = nn::layer_norm(h, params.final_g, params.final_b, cfg.ln_eps);
  (void)len;
  return out;
}

// tied MLM decoder: v * tok_emb^T + bias
template <class S>
nn::Tensor<S> mlm_logits(const nn::Tensor<S>& embeddings, EncoderParamsT<S>& params) {
  return nn::add_bias(nn::matmul_nt(embeddings, params.tok_emb), params.mlm_bias);
}

template <class S>
nn::Tensor<S> tag_logits(const nn::Tensor<S>& embeddings, EncoderParamsT<S>& params) {
  if (!params.tag_w.defined())
    throw std::invalid_argument("tag_logits: model has no tagging head");
  return nn::linear(embeddings, params.tag_w, params.tag_b);
}

struct MlmMasked {
  std::vector<int> ids;
  std::vector<int> labels;  // original id at selected positions, -1 elsewhere
};

// BERT-style masking: 15% of positions selected; of those 80% -> <mask>,
// 10% -> random non-special id, 10% unchanged.
MlmMasked mlm_mask(const std::vector<int>& ids, int vocab_size, Rng& rng);

struct TrainSchedule {
  int64_t total_steps = 5000;
  double peak_lr = 3e-4;
  int batch_size = 16;
  uint64_t seed = 0;
  QScheduleMode q_mode = QScheduleMode::none;
  DropoutVariant dropout_variant = DropoutVariant::element;
  bool warmup = true;
};

struct TrainLogEntry {
  int64_t step;
  double loss, lr, q;
};

struct MlmTrainResult {
  EncoderParams params;
  std::vector<TrainLogEntry> log;
};

MlmTrainResult train_mlm(const std::vector<SeqFeatures>& corpus, const EncoderConfig& cfg,
                         const TrainSchedule& sched,
                         const std::function<void(const TrainLogEntry&)>& on_step = nullptr);

struct TagSequence {
  SeqFeatures feat;
  std::vector<int> labels;  // per subword, 0 = outside
};

struct FinetuneOptions {
  int max_epochs = 12;
  int patience = 3;
  double peak_lr = 3e-4;
  int batch_size = 16;
  uint64_t seed = 0;
  int num_classes = 0;  // classes + outside
};

struct FinetuneResult {
  EncoderParams params;  // best dev-F1 snapshot
  std::vector<double> dev_f1_per_epoch;
  int best_epoch = -1;
};

// Token-level cross-entropy over entity classes with early stopping on the
// dev score returned by eval_fn (greater is better). No learning-rate warmup.
FinetuneResult finetune_tagger(const EncoderParams& base, const std::vector<TagSequence>& train,
                               const FinetuneOptions& opts,
                               const std::function<double(EncoderParams&)>& eval_fn);

struct TagResult {
  std::vector<std::vector<float>> subword_probs;  // per subword, per class
  std::vector<std::vector<float>> token_probs;    // per original token: geometric means
  std::vector<int> token_argmax;
  std::vector<float> token_score;                 // probability of the argmax class
};

// Inference over pre-chunked sequences of one document; chunk outputs are
// concatenated. Original-token class scores are the geometric means of the
// subword probabilities.
TagResult tag_tokens(const std::vector<SeqFeatures>& chunks, EncoderParams& params,
                     int num_orig_tokens);

}  // namespace lambert::model

#include "lambert/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lambert/parallel.hpp"

namespace lambert::model {

LayoutMode layout_mode_from_string(const std::string& s) {
  if (s == "none") return LayoutMode::none;
  if (s == "winding") return LayoutMode::winding;
  if (s == "autoencoder") return LayoutMode::autoencoder;
  if (s == "graph") return LayoutMode::graph;
  throw std::invalid_argument("unknown layout mode: " + s);
}
std::string to_string(LayoutMode m) {
  switch (m) {
    case LayoutMode::none: return "none";
    case LayoutMode::winding: return "winding";
    case LayoutMode::autoencoder: return "autoencoder";
    case LayoutMode::graph: return "graph";
  }
  return "none";
}
DropoutVariant dropout_variant_from_string(const std::string& s) {
  if (s == "token") return DropoutVariant::token;
  if (s == "dimension") return DropoutVariant::dimension;
  if (s == "element") return DropoutVariant::element;
  throw std::invalid_argument("unknown dropout variant: " + s);
}
std::string to_string(DropoutVariant v) {
  switch (v) {
    case DropoutVariant::token: return "token";
    case DropoutVariant::dimension: return "dimension";
    case DropoutVariant::element: return "element";
  }
  return "element";
}
QScheduleMode q_mode_from_string(const std::string& s) {
  if (s == "none") return QScheduleMode::none;
  if (s == "linear_half") return QScheduleMode::linear_half;
  throw std::invalid_argument("unknown suppression mode: " + s);
}
std::string to_string(QScheduleMode m) {
  return m == QScheduleMode::linear_half ? "linear_half" : "none";
}
PositionalMode positional_mode_from_string(const std::string& s) {
  if (s == "trainable") return PositionalMode::trainable;
  if (s == "sinusoidal") return PositionalMode::sinusoidal;
  throw std::invalid_argument("unknown positional mode: " + s);
}
std::string to_string(PositionalMode m) {
  return m == PositionalMode::sinusoidal ? "sinusoidal" : "trainable";
}

int EncoderConfig::layout_dim() const {
  switch (layout_mode) {
    case LayoutMode::winding: return n;
    case LayoutMode::autoencoder: return alt::kAeLatentDim;
    case LayoutMode::graph: return alt::kGinOutputDim;
    default: return 0;
  }
}

void EncoderConfig::validate() const {
  if (n <= 0 || layers <= 0 || heads <= 0 || max_len <= 0 || vocab_size <= 0)
    throw std::invalid_argument("encoder config: dimensions must be positive");
  if (n % heads != 0)
    throw std::invalid_argument("encoder config: n must be divisible by heads");
  if (layout_mode == LayoutMode::winding && n % 8 != 0)
    throw std::invalid_argument("encoder config: winding layout requires n divisible by 8");
}

double q_schedule(int64_t step, int64_t total, QScheduleMode mode) {
  if (total <= 0) throw std::invalid_argument("q_schedule: total must be positive");
  if (step < 0 || step > total) throw std::invalid_argument("q_schedule: step out of range");
  if (mode == QScheduleMode::none) return 0.0;
  return std::min(1.0, 2.0 * static_cast<double>(step) / static_cast<double>(total));
}

double final_q(QScheduleMode mode) { return mode == QScheduleMode::linear_half ? 1.0 : 0.0; }

EncoderParams init_encoder_params(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  EncoderParams p;
  p.cfg = cfg;
  Rng rng(Rng::derive(seed, 0x1717));
  const double std = cfg.init_std;
  p.tok_emb = nn::randn<float>({cfg.vocab_size, cfg.n}, rng, std, true);
  if (cfg.positional_mode == PositionalMode::trainable) {
    p.pos_emb = nn::randn<float>({cfg.max_len, cfg.n}, rng, std, true);
  } else {
    auto table = layout::sinusoidal_positions(cfg.max_len, cfg.n, cfg.seq_theta_max);
    std::vector<float> vals(table.begin(), table.end());
    p.pos_emb = nn::from_values<float>({cfg.max_len, cfg.n}, std::move(vals));
  }
  if (cfg.layout_mode != LayoutMode::none) {
    if (cfg.layout_mode == LayoutMode::winding) p.winding = layout::make_winding_config(cfg.n);
    p.adapter = layout::make_adapter(cfg.n, cfg.layout_dim(), cfg.adapter_sigma, rng);
    if (cfg.layout_mode == LayoutMode::graph) p.gin = alt::make_gin_params(rng);
    if (cfg.layout_mode == LayoutMode::autoencoder) p.ae_frozen = alt::make_autoencoder_params(rng);
  }
  // linear layers use Xavier scaling: training starts from random weights
  // here (no pretrained checkpoint), and flat-scale init leaves the attention
  // logits so small that softmax stays uniform for a long time
  auto xavier = [&](int out, int in) {
    return nn::randn<float>({out, in}, rng, std::sqrt(2.0 / (out + in)), true);
  };
  for (int l = 0; l < cfg.layers; ++l) {
    LayerParamsT<float> layer;
    layer.ln1_g = nn::full<float>({cfg.n}, 1.0f, true);
    layer.ln1_b = nn::zeros<float>({cfg.n}, true);
    layer.wq = xavier(cfg.n, cfg.n);
    layer.bq = nn::zeros<float>({cfg.n}, true);
    layer.wk = xavier(cfg.n, cfg.n);
    layer.bk = nn::zeros<float>({cfg.n}, true);
    layer.wv = xavier(cfg.n, cfg.n);
    layer.bv = nn::zeros<float>({cfg.n}, true);
    layer.wo = xavier(cfg.n, cfg.n);
    layer.bo = nn::zeros<float>({cfg.n}, true);
    layer.ln2_g = nn::full<float>({cfg.n}, 1.0f, true);
    layer.ln2_b = nn::zeros<float>({cfg.n}, true);
    layer.w1 = xavier(cfg.ffn(), cfg.n);
    layer.b1 = nn::zeros<float>({cfg.ffn()}, true);
    layer.w2 = xavier(cfg.n, cfg.ffn());
    layer.b2 = nn::zeros<float>({cfg.n}, true);
    p.layers.push_back(std::move(layer));
  }
  p.final_g = nn::full<float>({cfg.n}, 1.0f, true);
  p.final_b = nn::zeros<float>({cfg.n}, true);
  p.mlm_bias = nn::zeros<float>({cfg.vocab_size}, true);
  if (cfg.num_classes > 0) {
    p.tag_w = xavier(cfg.num_classes, cfg.n);
    p.tag_b = nn::zeros<float>({cfg.num_classes}, true);
  }
  return p;
}

std::vector<nn::NamedTensor> named_tensors(EncoderParams& params) {
  std::vector<nn::NamedTensor> out;
  for (auto& r : enumerate_params(params)) out.push_back({r.name, r.tensor});
  return out;
}

std::vector<nn::Tensor<float>> trainable_tensors(EncoderParams& params) {
  std::vector<nn::Tensor<float>> out;
  for (auto& r : enumerate_params(params))
    if (r.trainable) out.push_back(*r.tensor);
  return out;
}

std::vector<std::string> trainable_names(const EncoderParams& params) {
  auto& p = const_cast<EncoderParams&>(params);
  std::vector<std::string> out;
  for (auto& r : enumerate_params(p))
    if (r.trainable) out.push_back(r.name);
  return out;
}

EncoderParams clone_params(const EncoderParams& params) {
  auto& p = const_cast<EncoderParams&>(params);
  EncoderParams copy = p;  // shallow: shares buffers
  auto src = enumerate_params(p);
  auto dst = enumerate_params(copy);
  for (size_t i = 0; i < src.size(); ++i) {
    nn::Tensor<float> fresh = nn::zeros<float>(src[i].tensor->shape, src[i].tensor->requires_grad);
    std::copy(src[i].tensor->data->begin(), src[i].tensor->data->end(), fresh.data->begin());
    *dst[i].tensor = fresh;
  }
  return copy;
}

void save_encoder(const std::string& path, EncoderParams& params) {
  save_checkpoint(path, named_tensors(params));
}

EncoderParams load_encoder(const std::string& path, const EncoderConfig& cfg) {
  EncoderParams params = init_encoder_params(cfg, 0);
  load_checkpoint(path, named_tensors(params));
  return params;
}

std::vector<float> make_dimension_mask(int n, double q, Rng& rng) {
  std::vector<float> mask(static_cast<size_t>(n));
  for (auto& m : mask) m = rng.bernoulli(q) ? 0.0f : 1.0f;
  return mask;
}

std::vector<float> positional_dropout_mask(int len, int n, double q, DropoutVariant variant,
                                           Rng& rng, const std::vector<float>* shared_dim_mask) {
  std::vector<float> mask(static_cast<size_t>(len) * static_cast<size_t>(n), 1.0f);
  if (q <= 0.0) return mask;
  if (q >= 1.0) {
    std::fill(mask.begin(), mask.end(), 0.0f);
    return mask;
  }
  switch (variant) {
    case DropoutVariant::token:
      for (int i = 0; i < len; ++i)
        if (rng.bernoulli(q))
          std::fill_n(mask.begin() + static_cast<size_t>(i) * n, n, 0.0f);
      break;
    case DropoutVariant::dimension: {
      std::vector<float> dim_mask;
      const std::vector<float>* use = shared_dim_mask;
      if (!use) {
        dim_mask = make_dimension_mask(n, q, rng);
        use = &dim_mask;
      }
      if (use->size() != static_cast<size_t>(n))
        throw std::invalid_argument("positional_dropout_mask: bad shared dimension mask");
      for (int i = 0; i < len; ++i)
        for (int j = 0; j < n; ++j)
          mask[static_cast<size_t>(i) * n + j] = (*use)[static_cast<size_t>(j)];
      break;
    }
    case DropoutVariant::element:
      for (auto& m : mask) m = rng.bernoulli(q) ? 0.0f : 1.0f;
      break;
  }
  return mask;
}

std::vector<double> positional_dropout(const std::vector<double>& p, double q,
                                       DropoutVariant variant, Rng& rng) {
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("positional_dropout: q must be in [0,1]");
  auto mask = positional_dropout_mask(1, static_cast<int>(p.size()), q, variant, rng, nullptr);
  std::vector<double> out(p.size());
  for (size_t i = 0; i < p.size(); ++i) out[i] = p[i] * static_cast<double>(mask[i]);
  return out;
}

MlmMasked mlm_mask(const std::vector<int>& ids, int vocab_size, Rng& rng) {
  MlmMasked out;
  out.ids = ids;
  out.labels.assign(ids.size(), -1);
  const int first_regular = bpe::kNumSpecials;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (!rng.bernoulli(0.15)) continue;
    out.labels[i] = ids[i];
    const double r = rng.uniform();
    if (r < 0.8) {
      out.ids[i] = bpe::kMaskId;
    } else if (r < 0.9) {
      out.ids[i] =
          first_regular + static_cast<int>(rng.uniform_int(
                              static_cast<uint64_t>(vocab_size - first_regular)));
    }  // else keep the original id
  }
  return out;
}

namespace {

// gradients for one sequence, aligned with the trainable tensor list
struct ItemGrads {
  double loss = 0.0;
  std::vector<std::vector<float>> grads;  // empty vector = no gradient
};

ItemGrads run_mlm_item(const SeqFeatures& feat, EncoderParams& params,
                       std::vector<nn::Tensor<float>>& trainable, double q,
                       const TrainSchedule& sched, int64_t step, int item,
                       const std::vector<float>& dim_mask) {
  Rng mask_rng(Rng::derive(sched.seed, 0xA11, static_cast<uint64_t>(step),
                           static_cast<uint64_t>(item)));
  auto masked = mlm_mask(feat.ids, params.cfg.vocab_size, mask_rng);
  SeqFeatures masked_feat = feat;
  masked_feat.ids = masked.ids;

  Rng drop_rng(Rng::derive(sched.seed, 0xD0, static_cast<uint64_t>(step),
                           static_cast<uint64_t>(item)));
  std::vector<float> pos_mask;
  if (q > 0.0 && q < 1.0)
    pos_mask = positional_dropout_mask(feat.len(), params.cfg.n, q, sched.dropout_variant,
                                       drop_rng, dim_mask.empty() ? nullptr : &dim_mask);

  auto x = compose_inputs(masked_feat, params, q, pos_mask, /*training=*/true,
                          /*update_bn=*/item == 0);
  auto out = encoder_forward(x, params);
  auto logits = mlm_logits(out.embeddings, params);
  bool any_label = false;
  for (int l : masked.labels)
    if (l >= 0) any_label = true;
  ItemGrads ig;
  if (!any_label) return ig;  // nothing selected in a short sequence; skip
  auto loss = nn::cross_entropy(logits, masked.labels, -1);
  ig.loss = loss.item();
  auto gs = nn::backward(loss);
  ig.grads.resize(trainable.size());
  for (size_t i = 0; i < trainable.size(); ++i) {
    const auto* g = gs.find(trainable[i]);
    if (g) ig.grads[i] = *g;
  }
  return ig;
}

}  // namespace

MlmTrainResult train_mlm(const std::vector<SeqFeatures>& corpus, const EncoderConfig& cfg,
                         const TrainSchedule& sched,
                         const std::function<void(const TrainLogEntry&)>& on_step) {
  if (corpus.empty()) throw std::invalid_argument("train_mlm: empty corpus");
  MlmTrainResult result;
  result.params = init_encoder_params(cfg, sched.seed);
  auto trainable = trainable_tensors(result.params);
  nn::AdamW opt(trainable, nn::AdamWConfig{});

  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = 0;
  uint64_t epoch = 0;
  Rng order_rng(Rng::derive(sched.seed, 0x0E, epoch));
  order_rng.shuffle(order.begin(), order.end());

  const int batch = std::max(1, sched.batch_size);
  for (int64_t step = 0; step < sched.total_steps; ++step) {
    const double lr = nn::lr_schedule(std::min<int64_t>(step + 1, sched.total_steps),
                                  sched.total_steps, sched.peak_lr);
    const double q = q_schedule(step, sched.total_steps, sched.q_mode);

    std::vector<const SeqFeatures*> items;
    items.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      if (cursor >= order.size()) {
        cursor = 0;
        ++epoch;
        Rng r(Rng::derive(sched.seed, 0x0E, epoch));
        r.shuffle(order.begin(), order.end());
      }
      items.push_back(&corpus[order[cursor++]]);
    }

    std::vector<float> dim_mask;
    if (sched.dropout_variant == DropoutVariant::dimension && q > 0.0 && q < 1.0) {
      Rng dim_rng(Rng::derive(sched.seed, 0xD1, static_cast<uint64_t>(step)));
      dim_mask = make_dimension_mask(cfg.n, q, dim_rng);
    }

    std::vector<ItemGrads> per_item(items.size());
    parallel_for(static_cast<int>(items.size()), [&](int i) {
      per_item[static_cast<size_t>(i)] =
          run_mlm_item(*items[static_cast<size_t>(i)], result.params, trainable, q, sched, step,
                       i, dim_mask);
    });

    // deterministic reduction in item order
    std::vector<std::vector<float>> total(trainable.size());
    double loss_sum = 0.0;
    int counted = 0;
    for (const auto& ig : per_item) {
      if (ig.grads.empty()) continue;
      loss_sum += ig.loss;
      ++counted;
      for (size_t p = 0; p < trainable.size(); ++p) {
        if (ig.grads[p].empty()) continue;
        if (total[p].empty()) total[p].assign(trainable[p].numel(), 0.0f);
        for (size_t j = 0; j < ig.grads[p].size(); ++j) total[p][j] += ig.grads[p][j];
      }
    }
    if (counted == 0) continue;
    const float inv = 1.0f / static_cast<float>(counted);
    std::vector<const std::vector<float>*> grad_ptrs(trainable.size(), nullptr);
    for (size_t p = 0; p < total.size(); ++p) {
      if (total[p].empty()) continue;
      for (auto& g : total[p]) g *= inv;
      grad_ptrs[p] = &total[p];
    }
    std::string diag;
    if (!opt.step(grad_ptrs, lr, &diag)) {
      TrainLogEntry entry{step, std::numeric_limits<double>::quiet_NaN(), lr, q};
      result.log.push_back(entry);
      if (on_step) on_step(entry);
      continue;  // step rejected; diagnostic recorded as NaN loss
    }
    TrainLogEntry entry{step, loss_sum / counted, lr, q};
    result.log.push_back(entry);
    if (on_step) on_step(entry);
  }
  return result;
}

FinetuneResult finetune_tagger(const EncoderParams& base, const std::vector<TagSequence>& train,
                               const FinetuneOptions& opts,
                               const std::function<double(EncoderParams&)>& eval_fn) {
  if (train.empty()) throw std::invalid_argument("finetune_tagger: empty training set");
  if (!eval_fn) throw std::invalid_argument("finetune_tagger: dev evaluation is required");
  if (opts.num_classes < 2)
    throw std::invalid_argument("finetune_tagger: need at least outside + one class");

  FinetuneResult result;
  EncoderParams params = clone_params(base);
  if (!params.tag_w.defined() || params.cfg.num_classes != opts.num_classes) {
    params.cfg.num_classes = opts.num_classes;
    Rng rng(Rng::derive(opts.seed, 0x7A6));
    params.tag_w = nn::randn<float>({opts.num_classes, params.cfg.n}, rng,
                                    std::sqrt(2.0 / (opts.num_classes + params.cfg.n)), true);
    params.tag_b = nn::zeros<float>({opts.num_classes}, true);
    // start the head at the label log-priors instead of uniform
    std::vector<double> counts(static_cast<size_t>(opts.num_classes), 1.0);
    double total = static_cast<double>(opts.num_classes);
    for (const auto& seq : train)
      for (int l : seq.labels)
        if (l >= 0 && l < opts.num_classes) {
          counts[static_cast<size_t>(l)] += 1.0;
          total += 1.0;
        }
    for (int c = 0; c < opts.num_classes; ++c)
      (*params.tag_b.data)[static_cast<size_t>(c)] =
          static_cast<float>(std::log(counts[static_cast<size_t>(c)] / total));
  }
  auto trainable = trainable_tensors(params);
  nn::AdamW opt(trainable, nn::AdamWConfig{});

  const double q = final_q(params.cfg.q_schedule_mode);
  const int batch = std::max(1, opts.batch_size);
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(train.size()) + batch - 1) / batch;
  const int64_t total_steps = steps_per_epoch * opts.max_epochs;

  EncoderParams best = clone_params(params);
  double best_f1 = -1.0;
  int strikes = 0;
  int64_t step = 0;

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng r(Rng::derive(opts.seed, 0xF7, static_cast<uint64_t>(epoch)));
    r.shuffle(order.begin(), order.end());

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(batch));
      const double lr =
          nn::lr_schedule_no_warmup(std::min(step + 1, total_steps), total_steps, opts.peak_lr);

      std::vector<ItemGrads> per_item(end - start);
      parallel_for(static_cast<int>(end - start), [&](int i) {
        const auto& seq = train[order[start + static_cast<size_t>(i)]];
        auto x = compose_inputs(seq.feat, params, q, {}, /*training=*/true,
                                /*update_bn=*/i == 0);
        auto out = encoder_forward(x, params);
        auto logits = tag_logits(out.embeddings, params);
        auto loss = nn::cross_entropy(logits, seq.labels, -1);
        ItemGrads ig;
        ig.loss = loss.item();
        auto gs = nn::backward(loss);
        ig.grads.resize(trainable.size());
        for (size_t p = 0; p < trainable.size(); ++p) {
          const auto* g = gs.find(trainable[p]);
          if (g) ig.grads[p] = *g;
        }
        per_item[static_cast<size_t>(i)] = std::move(ig);
      });

      std::vector<std::vector<float>> total(trainable.size());
      int counted = 0;
      for (const auto& ig : per_item) {
        if (ig.grads.empty()) continue;
        ++counted;
        for (size_t p = 0; p < trainable.size(); ++p) {
          if (ig.grads[p].empty()) continue;
          if (total[p].empty()) total[p].assign(trainable[p].numel(), 0.0f);
          for (size_t j = 0; j < ig.grads[p].size(); ++j) total[p][j] += ig.grads[p][j];
        }
      }
      if (counted > 0) {
        const float inv = 1.0f / static_cast<float>(counted);
        std::vector<const std::vector<float>*> grad_ptrs(trainable.size(), nullptr);
        for (size_t p = 0; p < total.size(); ++p) {
          if (total[p].empty()) continue;
          for (auto& g : total[p]) g *= inv;
          grad_ptrs[p] = &total[p];
        }
        opt.step(grad_ptrs, lr);
      }
      ++step;
    }

    const double f1 = eval_fn(params);
    result.dev_f1_per_epoch.push_back(f1);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = clone_params(params);
      result.best_epoch = epoch;
      strikes = 0;
    } else if (++strikes >= opts.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

TagResult tag_tokens(const std::vector<SeqFeatures>& chunks, EncoderParams& params,
                     int num_orig_tokens) {
  TagResult result;
  const int classes = params.cfg.num_classes;
  if (classes <= 0) throw std::invalid_argument("tag_tokens: model has no tagging head");
  const double q = final_q(params.cfg.q_schedule_mode);

  std::vector<std::vector<double>> log_sums(static_cast<size_t>(num_orig_tokens),
                                            std::vector<double>(static_cast<size_t>(classes), 0.0));
  std::vector<int> counts(static_cast<size_t>(num_orig_tokens), 0);

  for (const auto& chunk : chunks) {
    auto x = compose_inputs(const_cast<SeqFeatures&>(chunk), params, q, {}, /*training=*/false);
    auto out = encoder_forward(x, params);
    auto probs = nn::softmax(tag_logits(out.embeddings, params), 1);
    for (int i = 0; i < chunk.len(); ++i) {
      std::vector<float> row(static_cast<size_t>(classes));
      for (int c = 0; c < classes; ++c)
        row[static_cast<size_t>(c)] = (*probs.data)[static_cast<size_t>(i) * classes + c];
      const int orig = chunk.orig_index[static_cast<size_t>(i)];
      if (orig >= 0 && orig < num_orig_tokens) {
        for (int c = 0; c < classes; ++c)
          log_sums[static_cast<size_t>(orig)][static_cast<size_t>(c)] +=
              std::log(std::max(1e-30, static_cast<double>(row[static_cast<size_t>(c)])));
        ++counts[static_cast<size_t>(orig)];
      }
      result.subword_probs.push_back(std::move(row));
    }
  }

  result.token_probs.resize(static_cast<size_t>(num_orig_tokens));
  result.token_argmax.assign(static_cast<size_t>(num_orig_tokens), 0);
  result.token_score.assign(static_cast<size_t>(num_orig_tokens), 0.0f);
  for (int t = 0; t < num_orig_tokens; ++t) {
    auto& probs = result.token_probs[static_cast<size_t>(t)];
    probs.assign(static_cast<size_t>(classes), 0.0f);
    if (counts[static_cast<size_t>(t)] == 0) {
      probs[0] = 1.0f;  // token produced no subwords; treat as outside
      result.token_score[static_cast<size_t>(t)] = 1.0f;
      continue;
    }
    int arg = 0;
    for (int c = 0; c < classes; ++c) {
      probs[static_cast<size_t>(c)] = static_cast<float>(
          std::exp(log_sums[static_cast<size_t>(t)][static_cast<size_t>(c)] /
                   counts[static_cast<size_t>(t)]));
      if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(arg)]) arg = c;
    }
    result.token_argmax[static_cast<size_t>(t)] = arg;
    result.token_score[static_cast<size_t>(t)] = probs[static_cast<size_t>(arg)];
  }
  return result;
}

}  // namespace lambert::model

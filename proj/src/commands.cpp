#include "lambert/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lambert/attnviz.hpp"
#include "lambert/io.hpp"
#include "lambert/parallel.hpp"

namespace lambert::cli {

namespace fs = std::filesystem;

std::vector<ie::EntityClass> parse_task_keys(const std::string& spec) {
  std::vector<ie::EntityClass> classes;
  std::string item;
  std::istringstream in(spec);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("task_keys entry needs key:dtype, got " + item);
    classes.push_back({item.substr(0, colon), ie::dtype_from_string(item.substr(colon + 1))});
  }
  if (classes.empty()) throw std::runtime_error("task_keys is empty");
  return classes;
}

model::EncoderConfig encoder_config_from(const RunConfig& rc, int vocab_size) {
  model::EncoderConfig cfg;
  cfg.n = rc.get_int("n");
  cfg.layers = rc.get_int("layers");
  cfg.heads = rc.get_int("heads");
  cfg.ffn_dim = rc.get_int("ffn_dim");
  cfg.max_len = rc.get_int("max_len");
  cfg.vocab_size = vocab_size;
  cfg.layout_mode = model::layout_mode_from_string(rc.get("layout"));
  cfg.positional_mode = model::positional_mode_from_string(rc.get("positional_mode"));
  cfg.dropout_variant = model::dropout_variant_from_string(rc.get("dropout_variant"));
  cfg.q_schedule_mode = model::q_mode_from_string(rc.get("suppress"));
  cfg.drop_positional_term = rc.get_bool("drop_positional_term");
  cfg.validate();
  return cfg;
}

model::TrainSchedule schedule_from(const RunConfig& rc) {
  model::TrainSchedule sched;
  sched.total_steps = rc.get_i64("steps");
  sched.peak_lr = rc.get_double("lr");
  sched.batch_size = rc.get_int("batch_size");
  sched.seed = rc.get_u64("seed");
  sched.q_mode = model::q_mode_from_string(rc.get("suppress"));
  sched.dropout_variant = model::dropout_variant_from_string(rc.get("dropout_variant"));
  return sched;
}

synth::GenSpec gen_spec_from(const RunConfig& rc) {
  synth::GenSpec spec;
  spec.doc_type = synth::doc_type_from_string(rc.get("doc_type"));
  spec.page_w = rc.get_double("page_w");
  spec.page_h = rc.get_double("page_h");
  spec.min_rows = rc.get_int("min_rows");
  spec.max_rows = rc.get_int("max_rows");
  spec.noise = rc.get_double("noise");
  spec.reading_order = synth::reading_order_from_string(rc.get("reading_order"));
  return spec;
}

Prepared prepare_corpus(const std::vector<doc::Document>& raw, const bpe::BpeEncoder& encoder,
                        const model::EncoderConfig& cfg, const RunConfig& rc,
                        const alt::AutoencoderParams* ae) {
  Prepared prep;
  prep.docs.resize(raw.size());
  prep.per_doc.resize(raw.size());

  const int knn_k = rc.get_int("knn_k");
  const double knn_p = rc.get_double("knn_p");
  const double nbhd = rc.get_double("neighborhood_n");

  parallel_for(static_cast<int>(raw.size()), [&](int di) {
    const auto& src = raw[static_cast<size_t>(di)];
    auto [ndoc, geom] = doc::normalize_page(src);
    auto enc = encode_document(ndoc, encoder);

    // per-original-token layout features shared by all its subwords
    std::vector<std::vector<float>> token_latent;
    std::vector<int> token_segment;
    alt::KnnGraph graph;
    std::vector<double> seg_boxes;
    if (cfg.layout_mode == model::LayoutMode::autoencoder) {
      if (!ae) throw std::runtime_error("prepare_corpus: autoencoder layout needs trained params");
      auto ncfg = alt::make_neighborhood_config(ndoc, nbhd);
      token_latent.resize(ndoc.tokens.size());
      for (size_t t = 0; t < ndoc.tokens.size(); ++t)
        token_latent[t] =
            alt::autoencoder_embed(alt::render_neighborhood(ndoc, static_cast<int>(t), ncfg), *ae);
    } else if (cfg.layout_mode == model::LayoutMode::graph) {
      auto segments = doc::segment_lines(ndoc);
      graph = alt::build_knn_graph(segments, knn_k, knn_p);
      token_segment.assign(ndoc.tokens.size(), 0);
      for (size_t s = 0; s < segments.size(); ++s)
        for (int ti : segments[s].token_indices)
          token_segment[static_cast<size_t>(ti)] = static_cast<int>(s);
      seg_boxes.reserve(segments.size() * 4);
      for (const auto& s : segments) {
        seg_boxes.push_back(s.box.x1);
        seg_boxes.push_back(s.box.y1);
        seg_boxes.push_back(s.box.x2);
        seg_boxes.push_back(s.box.y2);
      }
    }

    auto id_chunks = doc::chunk_sequence(enc.ids, cfg.max_len);
    auto box_chunks = doc::chunk_sequence(enc.boxes, cfg.max_len);
    auto orig_chunks = doc::chunk_sequence(enc.orig_index, cfg.max_len);
    std::vector<model::SeqFeatures> chunks;
    for (size_t c = 0; c < id_chunks.size(); ++c) {
      model::SeqFeatures feat;
      feat.ids = id_chunks[c];
      feat.boxes = box_chunks[c];
      feat.orig_index = orig_chunks[c];
      if (cfg.layout_mode == model::LayoutMode::autoencoder) {
        feat.ae_latent.reserve(feat.ids.size() * alt::kAeLatentDim);
        for (int oi : feat.orig_index) {
          const auto& lat = token_latent[static_cast<size_t>(oi)];
          feat.ae_latent.insert(feat.ae_latent.end(), lat.begin(), lat.end());
        }
      } else if (cfg.layout_mode == model::LayoutMode::graph) {
        feat.graph = graph;
        feat.seg_boxes = seg_boxes;
        feat.seg_of_token.reserve(feat.ids.size());
        for (int oi : feat.orig_index)
          feat.seg_of_token.push_back(token_segment[static_cast<size_t>(oi)]);
      }
      chunks.push_back(std::move(feat));
    }
    prep.docs[static_cast<size_t>(di)] = std::move(ndoc);
    prep.per_doc[static_cast<size_t>(di)] = std::move(chunks);
  });

  for (const auto& dc : prep.per_doc)
    for (const auto& c : dc) prep.all_chunks.push_back(c);
  return prep;
}

std::vector<model::TagSequence> build_tag_sequences(const Prepared& prep,
                                                    const std::vector<ie::EntityClass>& classes) {
  std::vector<model::TagSequence> out;
  for (size_t di = 0; di < prep.docs.size(); ++di) {
    const auto labels = ie::auto_tag(prep.docs[di], classes);
    for (const auto& chunk : prep.per_doc[di]) {
      model::TagSequence seq;
      seq.feat = chunk;
      seq.labels.reserve(chunk.ids.size());
      for (int oi : chunk.orig_index) seq.labels.push_back(labels[static_cast<size_t>(oi)]);
      out.push_back(std::move(seq));
    }
  }
  return out;
}

std::vector<ie::GoldValue> collect_golds(const std::vector<doc::Document>& docs,
                                         const std::vector<ie::EntityClass>& classes) {
  std::vector<ie::GoldValue> golds;
  for (const auto& d : docs)
    for (const auto& c : classes) {
      auto it = d.attrs.find(c.key);
      if (it != d.attrs.end()) golds.push_back({d.id, c.key, it->second});
    }
  return golds;
}

std::vector<ie::Prediction> extract_documents(const Prepared& prep, model::EncoderParams& params,
                                              const std::vector<ie::EntityClass>& classes) {
  std::vector<std::vector<ie::Prediction>> per_doc(prep.docs.size());
  parallel_for(static_cast<int>(prep.docs.size()), [&](int di) {
    const auto& document = prep.docs[static_cast<size_t>(di)];
    const int n_tokens = static_cast<int>(document.tokens.size());
    auto tags = model::tag_tokens(prep.per_doc[static_cast<size_t>(di)], params, n_tokens);
    auto entities = ie::decode_entities(document, classes, tags.token_argmax, tags.token_score);
    for (const auto& cls : classes) {
      std::vector<ie::Entity> mine;
      for (const auto& e : entities)
        if (e.key == cls.key) mine.push_back(e);
      auto pick = ie::aggregate_select(mine);
      if (pick)
        per_doc[static_cast<size_t>(di)].push_back(
            {document.id, cls.key, pick->first, pick->second});
    }
  });
  std::vector<ie::Prediction> out;
  for (auto& preds : per_doc)
    for (auto& p : preds) out.push_back(std::move(p));
  return out;
}

double pipeline_f1(const Prepared& prep, model::EncoderParams& params,
                   const std::vector<ie::EntityClass>& classes) {
  auto preds = extract_documents(prep, params, classes);
  auto golds = collect_golds(prep.docs, classes);
  return ie::f1_eval(preds, golds, classes).overall.f1;
}

LoadedModel load_model_dir(const std::string& dir) {
  LoadedModel lm;
  lm.rc = RunConfig::from_file(dir + "/config.echo");
  lm.vocab = bpe::load_vocab(dir + "/vocab.txt");
  auto cfg = encoder_config_from(lm.rc, lm.vocab.size());
  // a finetuned checkpoint carries the tagging head; recover its width
  for (const auto& e : nn::read_manifest(dir + "/model.ckpt"))
    if (e.name == "tag.weight") cfg.num_classes = e.shape[0];
  lm.params = model::load_encoder(dir + "/model.ckpt", cfg);
  return lm;
}

namespace {

void write_train_log(const std::string& path, const std::vector<model::TrainLogEntry>& log) {
  std::ostringstream out;
  out << "step,loss,lr,q\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.8f,%.4f\n", static_cast<long long>(e.step),
                  e.loss, e.lr, e.q);
    out << buf;
  }
  atomic_write_file(path, out.str());
}

std::string predictions_tsv(const std::vector<ie::Prediction>& preds) {
  std::ostringstream out;
  char buf[64];
  for (const auto& p : preds) {
    std::snprintf(buf, sizeof(buf), "%.6f", p.score);
    out << p.doc_id << "\t" << p.key << "\t" << p.value << "\t" << buf << "\n";
  }
  return out.str();
}

std::vector<ie::Prediction> parse_predictions_tsv(const std::string& text) {
  std::vector<ie::Prediction> preds;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    size_t pos = 0;
    while (true) {
      const size_t tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (cols.size() != 4) throw std::runtime_error("malformed predictions line: " + line);
    preds.push_back({cols[0], cols[1], cols[2], std::stod(cols[3])});
  }
  return preds;
}

// The architecture of a downstream run is owned by the base model's config;
// the command line contributes only the fine-tuning knobs.
RunConfig inherit_model_config(const RunConfig& base_rc, const RunConfig& cli_rc) {
  RunConfig merged = base_rc;
  for (const char* key : {"ft_epochs", "ft_patience", "ft_lr", "ft_batch_size", "dev_frac",
                          "seed", "task_keys"})
    merged.set(key, cli_rc.get(key));
  return merged;
}

// fine-tuning with a dev split carved from the training corpus
model::FinetuneResult run_finetune(const RunConfig& rc, const LoadedModel& base,
                                   const std::vector<doc::Document>& train_docs, uint64_t seed) {
  const auto classes = parse_task_keys(rc.get("task_keys"));
  auto cfg = base.params.cfg;
  bpe::BpeEncoder encoder(base.vocab);

  std::vector<size_t> order(train_docs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(Rng::derive(seed, 0xDE5));
  split_rng.shuffle(order.begin(), order.end());
  const size_t dev_count = std::max<size_t>(
      1, static_cast<size_t>(rc.get_double("dev_frac") * static_cast<double>(train_docs.size())));
  std::vector<doc::Document> dev_docs, fit_docs;
  for (size_t i = 0; i < order.size(); ++i)
    (i < dev_count ? dev_docs : fit_docs).push_back(train_docs[order[i]]);

  const alt::AutoencoderParams* ae =
      cfg.layout_mode == model::LayoutMode::autoencoder ? &base.params.ae_frozen : nullptr;
  auto fit_prep = prepare_corpus(fit_docs, encoder, cfg, rc, ae);
  auto dev_prep = prepare_corpus(dev_docs, encoder, cfg, rc, ae);
  auto sequences = build_tag_sequences(fit_prep, classes);

  model::FinetuneOptions opts;
  opts.max_epochs = rc.get_int("ft_epochs");
  opts.patience = rc.get_int("ft_patience");
  opts.peak_lr = rc.get_double("ft_lr");
  opts.batch_size = rc.get_int("ft_batch_size");
  opts.seed = seed;
  opts.num_classes = static_cast<int>(classes.size()) + 1;

  auto eval_fn = [&](model::EncoderParams& p) { return pipeline_f1(dev_prep, p, classes); };
  return model::finetune_tagger(base.params, sequences, opts, eval_fn);
}

void copy_file_into(const std::string& src, const std::string& dst) {
  atomic_write_file(dst, read_text_file(src));
}

}  // namespace

int cmd_corpus_gen(const RunConfig& rc, uint64_t seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto spec = gen_spec_from(rc);
  auto stats = synth::gen_corpus(spec, rc.get_int("count"), out_dir + "/corpus.jsonl", seed);
  rc.write_echo(out_dir);
  std::cout << "generated " << stats.count << " documents (tokens " << stats.min_tokens << ".."
            << stats.max_tokens << ") -> " << out_dir << "/corpus.jsonl\n";
  return 0;
}

int cmd_corpus_filter(const RunConfig& rc, const std::string& in_path,
                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto docs = doc::load_corpus(in_path);
  std::vector<doc::Document> kept;
  std::ostringstream rejects;
  for (const auto& d : docs) {
    auto res = doc::filter_page(d);
    if (res.accepted)
      kept.push_back(d);
    else
      rejects << d.id << "\t" << res.reason << "\n";
  }
  doc::save_corpus_jsonl(out_dir + "/kept.jsonl", kept);
  atomic_write_file(out_dir + "/rejected.log", rejects.str());
  rc.write_echo(out_dir);
  if (docs.empty()) std::cerr << "warning: empty input corpus\n";
  std::cout << "kept " << kept.size() << "/" << docs.size() << " documents -> " << out_dir
            << "/kept.jsonl\n";
  return 0;
}

int cmd_bpe_train(const RunConfig& rc, const std::string& in_path, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto docs = doc::load_corpus(in_path);
  if (docs.empty()) throw std::runtime_error("bpe-train: corpus is empty: " + in_path);
  std::vector<std::string> texts;
  for (const auto& d : docs)
    for (const auto& t : d.tokens) texts.push_back(t.text);
  auto vocab = bpe::bpe_train(texts, rc.get_int("vocab_size"));
  bpe::save_vocab(out_dir + "/vocab.txt", vocab);
  rc.write_echo(out_dir);
  std::cout << "trained vocab of " << vocab.size() << " tokens (" << vocab.merges.size()
            << " merges) -> " << out_dir << "/vocab.txt\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& corpus_path, const std::string& vocab_path,
              const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto docs = doc::load_corpus(corpus_path);
  if (docs.empty()) throw std::runtime_error("train: corpus is empty: " + corpus_path);
  auto vocab = bpe::load_vocab(vocab_path);
  bpe::BpeEncoder encoder(vocab);
  auto cfg = encoder_config_from(rc, vocab.size());
  auto sched = schedule_from(rc);

  alt::AutoencoderParams ae;
  bool has_ae = false;
  if (cfg.layout_mode == model::LayoutMode::autoencoder) {
    // the frozen bitmap embedder trains first, on a corpus sample
    const int sample = std::min<int>(rc.get_int("ae_sample_docs"), static_cast<int>(docs.size()));
    std::vector<std::vector<uint8_t>> bitmaps;
    for (int di = 0; di < sample; ++di) {
      auto [ndoc, geom] = doc::normalize_page(docs[static_cast<size_t>(di)]);
      auto ncfg = alt::make_neighborhood_config(ndoc, rc.get_double("neighborhood_n"));
      for (size_t t = 0; t < ndoc.tokens.size(); t += 4)
        bitmaps.push_back(alt::render_neighborhood(ndoc, static_cast<int>(t), ncfg));
    }
    auto trained = alt::autoencoder_train(bitmaps, rc.get_int("ae_epochs"),
                                          rc.get_double("ae_lr"), sched.seed);
    ae = std::move(trained.params);
    has_ae = true;
  }

  auto prep = prepare_corpus(docs, encoder, cfg, rc, has_ae ? &ae : nullptr);
  auto result = model::train_mlm(prep.all_chunks, cfg, sched, [](const model::TrainLogEntry& e) {
    if (e.step % 50 == 0)
      std::cout << "step " << e.step << " loss " << e.loss << " lr " << e.lr << " q " << e.q
                << "\n";
  });
  if (has_ae) result.params.ae_frozen = ae;

  model::save_encoder(out_dir + "/model.ckpt", result.params);
  write_train_log(out_dir + "/train_log.csv", result.log);
  copy_file_into(vocab_path, out_dir + "/vocab.txt");
  rc.write_echo(out_dir);
  std::cout << "checkpoint -> " << out_dir << "/model.ckpt\n";
  return 0;
}

int cmd_finetune(const RunConfig& rc, const std::string& model_dir,
                 const std::string& corpus_path, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto base = load_model_dir(model_dir);
  auto docs = doc::load_corpus(corpus_path);
  if (docs.empty()) throw std::runtime_error("finetune: corpus is empty: " + corpus_path);

  const RunConfig merged = inherit_model_config(base.rc, rc);
  auto result = run_finetune(merged, base, docs, merged.get_u64("seed"));
  model::save_encoder(out_dir + "/model.ckpt", result.params);
  copy_file_into(model_dir + "/vocab.txt", out_dir + "/vocab.txt");
  merged.write_echo(out_dir);

  std::ostringstream log;
  log << "epoch,dev_f1\n";
  for (size_t e = 0; e < result.dev_f1_per_epoch.size(); ++e)
    log << e << "," << result.dev_f1_per_epoch[e] << "\n";
  log << "best_epoch," << result.best_epoch << "\n";
  atomic_write_file(out_dir + "/finetune_log.csv", log.str());
  std::cout << "best dev F1 "
            << (result.best_epoch >= 0
                    ? result.dev_f1_per_epoch[static_cast<size_t>(result.best_epoch)]
                    : 0.0)
            << " at epoch " << result.best_epoch << " -> " << out_dir << "/model.ckpt\n";
  return 0;
}

int cmd_extract(const RunConfig& rc, const std::string& model_dir, const std::string& corpus_path,
                const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto lm = load_model_dir(model_dir);
  auto docs = doc::load_corpus(corpus_path);
  const auto classes = parse_task_keys(rc.get("task_keys"));
  bpe::BpeEncoder encoder(lm.vocab);
  const alt::AutoencoderParams* ae = lm.params.cfg.layout_mode == model::LayoutMode::autoencoder
                                         ? &lm.params.ae_frozen
                                         : nullptr;
  auto prep = prepare_corpus(docs, encoder, lm.params.cfg, lm.rc, ae);
  auto preds = extract_documents(prep, lm.params, classes);
  atomic_write_file(out_dir + "/predictions.tsv", predictions_tsv(preds));
  rc.write_echo(out_dir);
  std::cout << preds.size() << " predictions -> " << out_dir << "/predictions.tsv\n";
  return 0;
}

int cmd_eval_predictions(const std::string& pred_path, const std::string& corpus_path,
                         const std::string& task_keys, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const auto classes = parse_task_keys(task_keys);
  auto preds = parse_predictions_tsv(read_text_file(pred_path));
  auto docs = doc::load_corpus(corpus_path);
  auto golds = collect_golds(docs, classes);
  auto report = ie::f1_eval(preds, golds, classes);
  atomic_write_file(out_dir + "/report.json", ie::report_to_json(report));
  std::cout << ie::report_to_json(report) << "\n";
  return 0;
}

int cmd_eval_seeds(const RunConfig& rc, const std::string& model_dir,
                   const std::string& train_corpus, const std::string& test_corpus, int seeds,
                   const std::string& out_dir) {
  if (seeds < 1) throw std::runtime_error("eval: --seeds must be >= 1");
  fs::create_directories(out_dir);
  auto base = load_model_dir(model_dir);
  auto train_docs = doc::load_corpus(train_corpus);
  auto test_docs = doc::load_corpus(test_corpus);
  const auto classes = parse_task_keys(rc.get("task_keys"));
  bpe::BpeEncoder encoder(base.vocab);

  const alt::AutoencoderParams* ae = base.params.cfg.layout_mode == model::LayoutMode::autoencoder
                                         ? &base.params.ae_frozen
                                         : nullptr;
  auto test_prep = prepare_corpus(test_docs, encoder, base.params.cfg, base.rc, ae);
  auto golds = collect_golds(test_prep.docs, classes);

  const RunConfig merged = inherit_model_config(base.rc, rc);
  std::map<std::string, std::vector<double>> per_key_f1;
  std::vector<double> overall_f1;
  for (int s = 0; s < seeds; ++s) {
    const uint64_t seed = merged.get_u64("seed") + static_cast<uint64_t>(s);
    auto ft = run_finetune(merged, base, train_docs, seed);
    auto preds = extract_documents(test_prep, ft.params, classes);
    auto report = ie::f1_eval(preds, golds, classes);
    overall_f1.push_back(report.overall.f1);
    for (const auto& [key, counts] : report.per_key) per_key_f1[key].push_back(counts.f1);
    std::cout << "seed " << seed << " overall F1 " << report.overall.f1 << "\n";
  }

  auto mean_sd = [](const std::vector<double>& xs) {
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return std::make_pair(mean, std::sqrt(var));
  };

  nlohmann::json j;
  std::ostringstream table;
  table << "key\tmean_f1\tsd\n";
  for (const auto& [key, xs] : per_key_f1) {
    auto [mean, sd] = mean_sd(xs);
    j["per_key"][key] = {{"mean", mean}, {"sd", sd}, {"runs", xs}};
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s\t%.3f\t%.3f\n", key.c_str(), mean, sd);
    table << buf;
  }
  auto [omean, osd] = mean_sd(overall_f1);
  j["overall"] = {{"mean", omean}, {"sd", osd}, {"runs", overall_f1}};
  char buf[96];
  std::snprintf(buf, sizeof(buf), "overall\t%.3f\t%.3f\n", omean, osd);
  table << buf;

  atomic_write_file(out_dir + "/eval_seeds.json", j.dump(2));
  atomic_write_file(out_dir + "/eval_seeds.tsv", table.str());
  rc.write_echo(out_dir);
  std::cout << table.str();
  return 0;
}

int cmd_viz_attn(const std::string& model_dir, const std::string& corpus_path, int doc_index,
                 int layer, int head, bool average_layer, int focus_token,
                 const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto lm = load_model_dir(model_dir);
  auto docs = doc::load_corpus(corpus_path);
  if (doc_index < 0 || doc_index >= static_cast<int>(docs.size()))
    throw std::runtime_error("viz-attn: document index out of range");
  const auto& cfg = lm.params.cfg;
  if (layer < 0 || layer >= cfg.layers) throw std::runtime_error("viz-attn: layer out of range");
  if (!average_layer && (head < 0 || head >= cfg.heads))
    throw std::runtime_error("viz-attn: head out of range");

  bpe::BpeEncoder encoder(lm.vocab);
  const alt::AutoencoderParams* ae =
      cfg.layout_mode == model::LayoutMode::autoencoder ? &lm.params.ae_frozen : nullptr;
  std::vector<doc::Document> one = {docs[static_cast<size_t>(doc_index)]};
  auto prep = prepare_corpus(one, encoder, cfg, lm.rc, ae);
  if (prep.per_doc[0].empty()) throw std::runtime_error("viz-attn: document is empty");
  const auto& chunk = prep.per_doc[0][0];  // the rendering covers the first chunk

  auto x = model::compose_inputs(const_cast<model::SeqFeatures&>(chunk), lm.params,
                                 model::final_q(cfg.q_schedule_mode), {}, false);
  auto out = model::encoder_forward(x, lm.params, /*record_attention=*/true);

  const int len = chunk.len();
  viz::AttentionRecord record;
  record.doc_id = prep.docs[0].id;
  record.layer = layer;
  record.head = average_layer ? -1 : head;
  for (int i = 0; i < len; ++i) {
    record.boxes.push_back(chunk.boxes[static_cast<size_t>(i)]);
    record.tokens.push_back(
        prep.docs[0].tokens[static_cast<size_t>(chunk.orig_index[static_cast<size_t>(i)])].text);
  }
  record.weights.assign(static_cast<size_t>(len), std::vector<float>(static_cast<size_t>(len), 0));
  if (average_layer) {
    for (int hh = 0; hh < cfg.heads; ++hh) {
      const auto& attn = out.attention[static_cast<size_t>(layer * cfg.heads + hh)];
      for (int i = 0; i < len; ++i)
        for (int jj = 0; jj < len; ++jj)
          record.weights[static_cast<size_t>(i)][static_cast<size_t>(jj)] +=
              (*attn.data)[static_cast<size_t>(i) * len + jj] / static_cast<float>(cfg.heads);
    }
  } else {
    const auto& attn = out.attention[static_cast<size_t>(layer * cfg.heads + head)];
    for (int i = 0; i < len; ++i)
      for (int jj = 0; jj < len; ++jj)
        record.weights[static_cast<size_t>(i)][static_cast<size_t>(jj)] =
            (*attn.data)[static_cast<size_t>(i) * len + jj];
  }

  if (focus_token < 0 || focus_token >= len)
    throw std::runtime_error("viz-attn: focus token out of range");
  doc::PageGeometry page{prep.docs[0].page.x2, prep.docs[0].page.y2};
  atomic_write_file(out_dir + "/attention.json", viz::attention_to_json(record));
  atomic_write_file(out_dir + "/attention.svg", viz::attention_svg(record, page, focus_token));
  std::cout << "attention export -> " << out_dir << "/attention.{json,svg}\n";
  return 0;
}

int cmd_checkpoint_inspect(const std::string& checkpoint_path) {
  auto entries = nn::read_manifest(checkpoint_path);
  size_t total = 0;
  for (const auto& e : entries) {
    size_t numel = 1;
    std::cout << e.name << "\t";
    for (size_t i = 0; i < e.shape.size(); ++i) {
      std::cout << (i ? "x" : "") << e.shape[i];
      numel *= static_cast<size_t>(e.shape[i]);
    }
    std::cout << "\toffset " << e.offset << "\n";
    total += numel;
  }
  std::cout << entries.size() << " tensors, " << total << " parameters\n";
  return 0;
}

}  // namespace lambert::cli

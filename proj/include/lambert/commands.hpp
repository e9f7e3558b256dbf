#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lambert/alt_layout.hpp"
#include "lambert/bpe.hpp"
#include "lambert/config.hpp"
#include "lambert/doc_model.hpp"
#include "lambert/encoder.hpp"
#include "lambert/extraction.hpp"
#include "lambert/synthcorpus.hpp"

namespace lambert::cli {

std::vector<ie::EntityClass> parse_task_keys(const std::string& spec);

model::EncoderConfig encoder_config_from(const RunConfig& rc, int vocab_size);
model::TrainSchedule schedule_from(const RunConfig& rc);
synth::GenSpec gen_spec_from(const RunConfig& rc);

// A corpus turned into model-ready sequences: per-document chunk lists plus
// the flattened chunk pool used for masked-LM training.
struct Prepared {
  std::vector<doc::Document> docs;  // page-normalized
  std::vector<std::vector<model::SeqFeatures>> per_doc;
  std::vector<model::SeqFeatures> all_chunks;
};

Prepared prepare_corpus(const std::vector<doc::Document>& raw, const bpe::BpeEncoder& encoder,
                        const model::EncoderConfig& cfg, const RunConfig& rc,
                        const alt::AutoencoderParams* ae);

std::vector<model::TagSequence> build_tag_sequences(const Prepared& prep,
                                                    const std::vector<ie::EntityClass>& classes);

std::vector<ie::GoldValue> collect_golds(const std::vector<doc::Document>& docs,
                                         const std::vector<ie::EntityClass>& classes);

std::vector<ie::Prediction> extract_documents(const Prepared& prep, model::EncoderParams& params,
                                              const std::vector<ie::EntityClass>& classes);

// Micro F1 of the end-to-end pipeline over the prepared documents.
double pipeline_f1(const Prepared& prep, model::EncoderParams& params,
                   const std::vector<ie::EntityClass>& classes);

struct LoadedModel {
  RunConfig rc;
  bpe::BpeVocab vocab;
  model::EncoderParams params;
};

LoadedModel load_model_dir(const std::string& dir);

// Library-level command entry points; the CLI binary is a thin flag parser
// over these. Each writes its outputs (config echo included) into out_dir.
int cmd_corpus_gen(const RunConfig& rc, uint64_t seed, const std::string& out_dir);
int cmd_corpus_filter(const RunConfig& rc, const std::string& in_path, const std::string& out_dir);
int cmd_bpe_train(const RunConfig& rc, const std::string& in_path, const std::string& out_dir);
int cmd_train(const RunConfig& rc, const std::string& corpus_path, const std::string& vocab_path,
              const std::string& out_dir);
int cmd_finetune(const RunConfig& rc, const std::string& model_dir, const std::string& corpus_path,
                 const std::string& out_dir);
int cmd_extract(const RunConfig& rc, const std::string& model_dir, const std::string& corpus_path,
                const std::string& out_dir);
int cmd_eval_predictions(const std::string& pred_path, const std::string& corpus_path,
                         const std::string& task_keys, const std::string& out_dir);
int cmd_eval_seeds(const RunConfig& rc, const std::string& model_dir,
                   const std::string& train_corpus, const std::string& test_corpus, int seeds,
                   const std::string& out_dir);
int cmd_viz_attn(const std::string& model_dir, const std::string& corpus_path, int doc_index,
                 int layer, int head, bool average_layer, int focus_token,
                 const std::string& out_dir);
int cmd_checkpoint_inspect(const std::string& checkpoint_path);

}  // namespace lambert::cli

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lambert/commands.hpp"
#include "lambert/config.hpp"

using lambert::cli::RunConfig;

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> sets;  // key=value overrides
  std::string layout, dropout_variant, suppress;
  int64_t seed = -1;
  std::string out_dir = "run";
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "run configuration file (key = value lines)");
  cmd->add_option("--set", flags.sets, "override a config key, KEY=VALUE")->take_all();
  cmd->add_option("--seed", flags.seed, "random seed");
  cmd->add_option("--layout", flags.layout, "layout mode")
      ->check(CLI::IsMember({"none", "winding", "autoencoder", "graph"}));
  cmd->add_option("--dropout-variant", flags.dropout_variant, "positional dropout variant")
      ->check(CLI::IsMember({"token", "dimension", "element"}));
  cmd->add_option("--suppress", flags.suppress, "sequential suppression schedule")
      ->check(CLI::IsMember({"none", "linear_half"}));
  cmd->add_option("--out", flags.out_dir, "output run directory");
}

RunConfig build_config(const CommonFlags& flags) {
  RunConfig rc;
  if (!flags.config_path.empty()) rc.merge_file(flags.config_path);
  for (const auto& kv : flags.sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects KEY=VALUE, got " + kv);
    rc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.seed >= 0) rc.set("seed", std::to_string(flags.seed));
  if (!flags.layout.empty()) rc.set("layout", flags.layout);
  if (!flags.dropout_variant.empty()) rc.set("dropout_variant", flags.dropout_variant);
  if (!flags.suppress.empty()) rc.set("suppress", flags.suppress);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layout-aware language model workbench"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("corpus-gen", "generate a synthetic corpus");
  add_common(gen, gen_flags);

  CommonFlags filter_flags;
  std::string filter_in;
  auto* filter = app.add_subcommand("corpus-filter", "apply the page filters to a corpus");
  add_common(filter, filter_flags);
  filter->add_option("--in", filter_in, "input corpus (JSONL or directory)")->required();

  CommonFlags bpe_flags;
  std::string bpe_in;
  auto* bpe = app.add_subcommand("bpe-train", "train the subword vocabulary");
  add_common(bpe, bpe_flags);
  bpe->add_option("--in", bpe_in, "input corpus")->required();

  CommonFlags train_flags;
  std::string train_in, train_vocab;
  auto* train = app.add_subcommand("train", "masked-LM training");
  add_common(train, train_flags);
  train->add_option("--in", train_in, "training corpus")->required();
  train->add_option("--vocab", train_vocab, "vocab file from bpe-train")->required();

  CommonFlags ft_flags;
  std::string ft_model, ft_in;
  auto* ft = app.add_subcommand("finetune", "fine-tune the tagging head");
  add_common(ft, ft_flags);
  ft->add_option("--model", ft_model, "base model run directory")->required();
  ft->add_option("--in", ft_in, "training corpus with gold attrs")->required();

  CommonFlags ex_flags;
  std::string ex_model, ex_in;
  auto* ex = app.add_subcommand("extract", "run the extraction pipeline");
  add_common(ex, ex_flags);
  ex->add_option("--model", ex_model, "finetuned model run directory")->required();
  ex->add_option("--in", ex_in, "corpus to extract from")->required();

  CommonFlags ev_flags;
  std::string ev_pred, ev_in, ev_model, ev_train, ev_test;
  int ev_seeds = 0;
  auto* ev = app.add_subcommand("eval", "score predictions, or repeat fine-tuning over seeds");
  add_common(ev, ev_flags);
  ev->add_option("--pred", ev_pred, "predictions.tsv to score");
  ev->add_option("--in", ev_in, "gold corpus for --pred scoring");
  ev->add_option("--model", ev_model, "base model dir (seeded mode)");
  ev->add_option("--train", ev_train, "fine-tuning corpus (seeded mode)");
  ev->add_option("--test", ev_test, "held-out corpus (seeded mode)");
  ev->add_option("--seeds", ev_seeds, "number of fine-tuning repetitions");

  CommonFlags viz_flags;
  std::string viz_model, viz_in;
  int viz_doc = 0, viz_layer = 0, viz_head = 0, viz_token = 0;
  bool viz_avg = false;
  auto* viz = app.add_subcommand("viz-attn", "export attention weights as JSON + SVG");
  add_common(viz, viz_flags);
  viz->add_option("--model", viz_model, "model run directory")->required();
  viz->add_option("--in", viz_in, "corpus holding the document")->required();
  viz->add_option("--doc", viz_doc, "document index in the corpus");
  viz->add_option("--layer", viz_layer, "encoder layer");
  viz->add_option("--head", viz_head, "attention head");
  viz->add_flag("--average-layer", viz_avg, "average the heads within the layer");
  viz->add_option("--token", viz_token, "focus token for the SVG");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("checkpoint-inspect", "print a checkpoint manifest");
  inspect->add_option("--ckpt", inspect_path, "checkpoint manifest path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return lambert::cli::cmd_corpus_gen(build_config(gen_flags),
                                          build_config(gen_flags).get_u64("seed"),
                                          gen_flags.out_dir);
    if (filter->parsed())
      return lambert::cli::cmd_corpus_filter(build_config(filter_flags), filter_in,
                                             filter_flags.out_dir);
    if (bpe->parsed())
      return lambert::cli::cmd_bpe_train(build_config(bpe_flags), bpe_in, bpe_flags.out_dir);
    if (train->parsed())
      return lambert::cli::cmd_train(build_config(train_flags), train_in, train_vocab,
                                     train_flags.out_dir);
    if (ft->parsed())
      return lambert::cli::cmd_finetune(build_config(ft_flags), ft_model, ft_in, ft_flags.out_dir);
    if (ex->parsed())
      return lambert::cli::cmd_extract(build_config(ex_flags), ex_model, ex_in, ex_flags.out_dir);
    if (ev->parsed()) {
      auto rc = build_config(ev_flags);
      if (ev_seeds > 0) {
        if (ev_model.empty() || ev_train.empty() || ev_test.empty())
          throw std::runtime_error("eval --seeds needs --model, --train and --test");
        return lambert::cli::cmd_eval_seeds(rc, ev_model, ev_train, ev_test, ev_seeds,
                                            ev_flags.out_dir);
      }
      if (ev_pred.empty() || ev_in.empty())
        throw std::runtime_error("eval needs --pred and --in (or --seeds mode)");
      return lambert::cli::cmd_eval_predictions(ev_pred, ev_in, rc.get("task_keys"),
                                                ev_flags.out_dir);
    }
    if (viz->parsed())
      return lambert::cli::cmd_viz_attn(viz_model, viz_in, viz_doc, viz_layer, viz_head, viz_avg,
                                        viz_token, viz_flags.out_dir);
    if (inspect->parsed()) return lambert::cli::cmd_checkpoint_inspect(inspect_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

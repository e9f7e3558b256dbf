#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "lambert/attnviz.hpp"
#include "lambert/commands.hpp"
#include "lambert/io.hpp"
#include "lambert/parallel.hpp"

using namespace lambert;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "lambert_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config file parsing and overrides") {
  auto dir = fresh_dir("config");
  atomic_write_file((dir / "run.cfg").string(),
                    "# comment\n"
                    "n = 32\n"
                    "layout = winding\n"
                    "steps=7\n");
  auto rc = cli::RunConfig::from_file((dir / "run.cfg").string());
  CHECK(rc.get_int("n") == 32);
  CHECK(rc.get("layout") == "winding");
  CHECK(rc.get_i64("steps") == 7);
  CHECK(rc.get_int("layers") == 4);  // default preserved

  rc.set("layers", "2");
  CHECK(rc.get_int("layers") == 2);
  CHECK_THROWS_WITH_AS(rc.set("no_such_key", "1"), doctest::Contains("unknown config key"),
                       std::runtime_error);

  atomic_write_file((dir / "bad.cfg").string(), "mystery = 1\n");
  CHECK_THROWS_AS(cli::RunConfig::from_file((dir / "bad.cfg").string()), std::runtime_error);

  // echo is parseable and reproduces the values
  rc.write_echo(dir.string());
  auto rc2 = cli::RunConfig::from_file((dir / "config.echo").string());
  CHECK(rc2.get_int("n") == 32);
  CHECK(rc2.get_int("layers") == 2);
  CHECK(rc2.echo() == rc.echo());
}

TEST_CASE("corpus-gen then corpus-filter keeps everything") {
  auto gen_dir = fresh_dir("gen");
  cli::RunConfig rc;
  rc.set("count", "6");
  CHECK(cli::cmd_corpus_gen(rc, 5, gen_dir.string()) == 0);
  CHECK(fs::exists(gen_dir / "corpus.jsonl"));
  CHECK(fs::exists(gen_dir / "corpus.jsonl.stats.json"));
  CHECK(fs::exists(gen_dir / "config.echo"));

  auto filter_dir = fresh_dir("filter");
  CHECK(cli::cmd_corpus_filter(rc, (gen_dir / "corpus.jsonl").string(), filter_dir.string()) == 0);
  auto kept = doc::load_corpus((filter_dir / "kept.jsonl").string());
  CHECK(kept.size() == 6);
  CHECK(read_text_file((filter_dir / "rejected.log").string()).empty());

  // a too-small page lands in the rejection log with its reason
  doc::Document tiny;
  tiny.id = "tiny";
  tiny.page = doc::BBox{0, 0, 100, 100};
  for (int i = 0; i < 49; ++i)
    tiny.tokens.push_back({"w", doc::BBox{1.0 * i, 0, 1.0 * i + 0.5, 1}});
  auto mixed = doc::load_corpus((gen_dir / "corpus.jsonl").string());
  mixed.push_back(tiny);
  doc::save_corpus_jsonl((gen_dir / "mixed.jsonl").string(), mixed);
  auto filter2 = fresh_dir("filter2");
  cli::cmd_corpus_filter(rc, (gen_dir / "mixed.jsonl").string(), filter2.string());
  auto log = read_text_file((filter2 / "rejected.log").string());
  CHECK(log.find("too-few") != std::string::npos);

  // regeneration is bit-exact
  auto gen_dir2 = fresh_dir("gen2");
  cli::cmd_corpus_gen(rc, 5, gen_dir2.string());
  CHECK(read_text_file((gen_dir / "corpus.jsonl").string()) ==
        read_text_file((gen_dir2 / "corpus.jsonl").string()));
}

TEST_CASE("bpe-train, train, finetune, extract, eval round trip") {
  // a deliberately tiny configuration: the goal here is wiring, not accuracy
  cli::RunConfig rc;
  rc.set("count", "24");  // small corpus, wiring only
  rc.set("n", "32");
  rc.set("layers", "1");
  rc.set("heads", "2");
  rc.set("ffn_dim", "64");
  rc.set("max_len", "160");
  rc.set("vocab_size", "300");
  rc.set("steps", "8");
  rc.set("batch_size", "4");
  rc.set("ft_epochs", "2");
  rc.set("ft_patience", "2");
  rc.set("layout", "winding");
  rc.set("seed", "3");

  auto gen_dir = fresh_dir("pipeline_gen");
  cli::cmd_corpus_gen(rc, 11, gen_dir.string());
  const std::string corpus = (gen_dir / "corpus.jsonl").string();

  auto bpe_dir = fresh_dir("pipeline_bpe");
  CHECK(cli::cmd_bpe_train(rc, corpus, bpe_dir.string()) == 0);
  CHECK(fs::exists(bpe_dir / "vocab.txt"));

  auto train_dir = fresh_dir("pipeline_train");
  CHECK(cli::cmd_train(rc, corpus, (bpe_dir / "vocab.txt").string(), train_dir.string()) == 0);
  CHECK(fs::exists(train_dir / "model.ckpt"));
  CHECK(fs::exists(train_dir / "model.ckpt.bin"));
  CHECK(fs::exists(train_dir / "train_log.csv"));
  CHECK(fs::exists(train_dir / "vocab.txt"));

  auto lm = cli::load_model_dir(train_dir.string());
  CHECK(lm.params.cfg.n == 32);
  CHECK(lm.params.cfg.num_classes == 0);

  // the fine-tune command supplies only fine-tuning knobs; the architecture
  // is inherited from the base run directory
  cli::RunConfig ft_rc;
  ft_rc.set("ft_epochs", "2");
  ft_rc.set("ft_patience", "2");
  ft_rc.set("seed", "3");
  auto ft_dir = fresh_dir("pipeline_ft");
  CHECK(cli::cmd_finetune(ft_rc, train_dir.string(), corpus, ft_dir.string()) == 0);
  auto ft = cli::load_model_dir(ft_dir.string());
  CHECK(ft.params.cfg.num_classes == 4);  // income, spending, date + outside
  CHECK(ft.params.cfg.n == 32);

  auto ex_dir = fresh_dir("pipeline_ex");
  CHECK(cli::cmd_extract(rc, ft_dir.string(), corpus, ex_dir.string()) == 0);
  CHECK(fs::exists(ex_dir / "predictions.tsv"));

  auto ev_dir = fresh_dir("pipeline_ev");
  CHECK(cli::cmd_eval_predictions((ex_dir / "predictions.tsv").string(), corpus,
                                  rc.get("task_keys"), ev_dir.string()) == 0);
  auto report = read_text_file((ev_dir / "report.json").string());
  CHECK(report.find("\"per_key\"") != std::string::npos);
  CHECK(report.find("income") != std::string::npos);

  // attention export: rows sum to 1 and the SVG is well-formed
  auto viz_dir = fresh_dir("pipeline_viz");
  CHECK(cli::cmd_viz_attn(ft_dir.string(), corpus, 0, 0, 1, false, 2, viz_dir.string()) == 0);
  auto json_text = read_text_file((viz_dir / "attention.json").string());
  CHECK(json_text.find("\"weights\"") != std::string::npos);
  auto svg = read_text_file((viz_dir / "attention.svg").string());
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  // averaged-layer weights equal the mean of the per-head matrices
  auto viz_avg = fresh_dir("pipeline_viz_avg");
  cli::cmd_viz_attn(ft_dir.string(), corpus, 0, 0, 0, true, 2, viz_avg.string());
  auto avg_json = nlohmann::json::parse(read_text_file((viz_avg / "attention.json").string()));
  CHECK(avg_json["head"] == -1);
  std::vector<nlohmann::json> heads;
  for (int h = 0; h < 2; ++h) {
    auto d = fresh_dir("pipeline_viz_h" + std::to_string(h));
    cli::cmd_viz_attn(ft_dir.string(), corpus, 0, 0, h, false, 2, d.string());
    heads.push_back(nlohmann::json::parse(read_text_file((d / "attention.json").string())));
  }
  const auto& w = avg_json["weights"];
  for (size_t i = 0; i < w.size(); ++i)
    for (size_t j = 0; j < w[i].size(); ++j) {
      const double mean = (heads[0]["weights"][i][j].get<double>() +
                           heads[1]["weights"][i][j].get<double>()) /
                          2.0;
      CHECK(w[i][j].get<double>() == doctest::Approx(mean).epsilon(1e-6));
    }

  // model checkpoints written twice with the same seed are bit-identical
  auto train_dir2 = fresh_dir("pipeline_train2");
  cli::cmd_train(rc, corpus, (bpe_dir / "vocab.txt").string(), train_dir2.string());
  CHECK(read_text_file((train_dir / "model.ckpt.bin").string()) ==
        read_text_file((train_dir2 / "model.ckpt.bin").string()));
}

TEST_CASE("task key parsing") {
  auto classes = cli::parse_task_keys("income:amount,spending:amount,date:date");
  REQUIRE(classes.size() == 3);
  CHECK(classes[0].key == "income");
  CHECK(classes[0].dtype == ie::DType::amount);
  CHECK(classes[2].dtype == ie::DType::date);
  CHECK_THROWS_AS(cli::parse_task_keys("oops"), std::runtime_error);
  CHECK_THROWS_AS(cli::parse_task_keys(""), std::runtime_error);
}

TEST_CASE("LAMBERT_THREADS caps worker parallelism") {
  setenv("LAMBERT_THREADS", "1", 1);
  CHECK(worker_count() == 1);
  setenv("LAMBERT_THREADS", "3", 1);
  CHECK(worker_count() == 3);
  unsetenv("LAMBERT_THREADS");
  CHECK(worker_count() >= 1);

  // reductions stay deterministic across worker counts: parallel_for output
  // collected per index is identical for 1 and 3 workers
  std::vector<int> a(17), b(17);
  setenv("LAMBERT_THREADS", "1", 1);
  parallel_for(17, [&](int i) { a[static_cast<size_t>(i)] = i * i; });
  setenv("LAMBERT_THREADS", "3", 1);
  parallel_for(17, [&](int i) { b[static_cast<size_t>(i)] = i * i; });
  unsetenv("LAMBERT_THREADS");
  CHECK(a == b);
}

TEST_CASE("eval --seeds writes the mean/sd table") {
  cli::RunConfig rc;
  rc.set("count", "20");
  rc.set("n", "32");
  rc.set("layers", "1");
  rc.set("heads", "2");
  rc.set("ffn_dim", "32");
  rc.set("max_len", "256");
  rc.set("vocab_size", "280");
  rc.set("steps", "4");
  rc.set("batch_size", "4");
  rc.set("ft_epochs", "1");
  rc.set("ft_patience", "1");
  rc.set("seed", "5");

  auto gen_dir = fresh_dir("seeds_gen");
  cli::cmd_corpus_gen(rc, 21, gen_dir.string());
  const std::string corpus = (gen_dir / "corpus.jsonl").string();
  auto bpe_dir = fresh_dir("seeds_bpe");
  cli::cmd_bpe_train(rc, corpus, bpe_dir.string());
  auto train_dir = fresh_dir("seeds_train");
  cli::cmd_train(rc, corpus, (bpe_dir / "vocab.txt").string(), train_dir.string());

  auto ev_dir = fresh_dir("seeds_eval");
  CHECK(cli::cmd_eval_seeds(rc, train_dir.string(), corpus, corpus, 2, ev_dir.string()) == 0);
  auto j = nlohmann::json::parse(read_text_file((ev_dir / "eval_seeds.json").string()));
  CHECK(j["overall"].contains("mean"));
  CHECK(j["overall"].contains("sd"));
  CHECK(j["overall"]["runs"].size() == 2);
  CHECK(j["per_key"].contains("income"));
  auto table = read_text_file((ev_dir / "eval_seeds.tsv").string());
  CHECK(table.find("overall") != std::string::npos);
}

TEST_CASE("checkpoint-inspect runs on a trained model") {
  // reuses nothing: builds a minimal model and inspects it
  auto dir = fresh_dir("inspect");
  model::EncoderConfig cfg;
  cfg.n = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn_dim = 16;
  cfg.max_len = 8;
  cfg.vocab_size = 270;
  auto params = model::init_encoder_params(cfg, 1);
  model::save_encoder((dir / "model.ckpt").string(), params);
  CHECK(cli::cmd_checkpoint_inspect((dir / "model.ckpt").string()) == 0);
}

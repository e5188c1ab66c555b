// snm: command-line driver for sparse non-negative matrix language models.
//
//   snm build-vocab --corpus a.txt b.txt --min-count 3 --out vocab.txt
//   snm count       --corpus a.txt b.txt [--tags web target] --config 5gram.cfg --vocab vocab.txt --out counts.tsv
//   snm intersect   --counts counts.tsv --dev dev.txt --config 5gram.cfg --vocab vocab.txt [--tags ...] --out dev.tsv
//   snm train       --counts counts.tsv --dev dev.txt --config 5gram.cfg --vocab vocab.txt
//                   --out-model model.tsv --out-adjustment adj.bin [--log train.log] [...]
//   snm eval        --model model.tsv --test test.txt --config 5gram.cfg --vocab vocab.txt [--tags ...] [--threads N]
//   snm inspect     --vocab vocab.txt (--counts counts.tsv | --model model.tsv) --feature "[the quick brown]" [--word fox]
//
// Exit status: 0 success, 1 usage error, 2 data error.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snm/pipeline.hpp"

namespace {

void add_mode_option(CLI::App* cmd, std::string& mode) {
  cmd->add_option("--mode", mode, "meta-feature mode: full, feature-only, unlexicalized")
      ->check(CLI::IsMember({"full", "feature-only", "unlexicalized"}))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse non-negative matrix language model toolkit"};
  app.require_subcommand(1);

  snm::PipelineConfig cfg;
  std::string out;
  std::string mode = "full";
  std::string feature;
  std::string word;
  std::vector<std::string> corpora;


  auto* vocab_cmd = app.add_subcommand("build-vocab", "build a vocabulary from corpus files");
  vocab_cmd->add_option("--corpus", corpora, "corpus files (one sentence per line)")->required();
  vocab_cmd->add_option("--min-count", cfg.min_count, "discard words with count below this")->capture_default_str();
  vocab_cmd->add_option("--out", out, "vocabulary file to write")->required();

  auto* count_cmd = app.add_subcommand("count", "extract features and write the sorted count file");
  count_cmd->add_option("--corpus", corpora, "training corpus files")->required();
  count_cmd->add_option("--tags", cfg.tags, "one corpus tag per file (enables corpus-tagged features)");
  count_cmd->add_option("--config", cfg.extractor_config, "feature extractor config")->required();
  count_cmd->add_option("--vocab", cfg.vocab, "vocabulary file")->required();
  count_cmd->add_option("--out", out, "count file to write")->required();

  auto* isect_cmd = app.add_subcommand("intersect", "keep the count rows of features seen on development data");
  isect_cmd->add_option("--counts", cfg.counts, "sorted count file")->required();
  isect_cmd->add_option("--dev", cfg.dev, "development corpus")->required();
  isect_cmd->add_option("--config", cfg.extractor_config, "feature extractor config")->required();
  isect_cmd->add_option("--vocab", cfg.vocab, "vocabulary file")->required();
  isect_cmd->add_option("--tags", cfg.tags, "training corpus tags to expand dev features with");
  isect_cmd->add_option("--out", out, "intersected count file to write")->required();

  auto* train_cmd = app.add_subcommand("train", "train the adjustment model on development data");
  train_cmd->add_option("--counts", cfg.counts, "sorted count file")->required();
  train_cmd->add_option("--dev", cfg.dev, "development corpus")->required();
  train_cmd->add_option("--config", cfg.extractor_config, "feature extractor config")->required();
  train_cmd->add_option("--vocab", cfg.vocab, "vocabulary file")->required();
  train_cmd->add_option("--tags", cfg.tags, "training corpus tags to expand dev features with");
  train_cmd->add_option("--out-model", cfg.model, "model file to write")->required();
  train_cmd->add_option("--out-adjustment", cfg.adjustment, "adjustment file to write")->required();
  train_cmd->add_option("--log", cfg.log, "run log to write");
  train_cmd->add_option("--table-size", cfg.table_size, "number of hashed parameters")->capture_default_str();
  train_cmd->add_option("--gamma", cfg.gamma, "AdaGrad scaling factor")->capture_default_str();
  train_cmd->add_option("--delta0", cfg.delta0, "AdaGrad initial accumulator")->capture_default_str();
  train_cmd->add_option("--batch-size", cfg.batch_size, "mini-batch size in events")->capture_default_str();
  train_cmd->add_option("--epochs", cfg.epochs, "training epochs (0: unadjusted model)")->capture_default_str();
  train_cmd->add_flag("--renormalize-every-batch", cfg.renormalize_every_batch,
                      "renormalize after every mini-batch instead of every epoch");
  add_mode_option(train_cmd, mode);

  auto* eval_cmd = app.add_subcommand("eval", "report perplexity of a model on a test corpus");
  eval_cmd->add_option("--model", cfg.model, "model file")->required();
  eval_cmd->add_option("--test", cfg.test, "test corpus")->required();
  eval_cmd->add_option("--config", cfg.extractor_config, "feature extractor config")->required();
  eval_cmd->add_option("--vocab", cfg.vocab, "vocabulary file")->required();
  eval_cmd->add_option("--tags", cfg.tags, "training corpus tags (corpus-tagged models)");
  eval_cmd->add_option("--threads", cfg.threads, "scoring threads")->capture_default_str();

  auto* inspect_cmd = app.add_subcommand("inspect", "dump a row, a link and its meta-features");
  inspect_cmd->add_option("--vocab", cfg.vocab, "vocabulary file")->required();
  inspect_cmd->add_option("--counts", cfg.counts, "count file");
  inspect_cmd->add_option("--model", cfg.model, "model file");
  inspect_cmd->add_option("--feature", feature, "feature string, e.g. \"[the quick brown]\"")->required();
  inspect_cmd->add_option("--word", word, "target word of the link to decompose");
  inspect_cmd->add_option("--table-size", cfg.table_size, "table size for hash indices")->capture_default_str();
  add_mode_option(inspect_cmd, mode);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    cfg.mode = snm::parse_mode(mode);
    cfg.corpora.assign(corpora.begin(), corpora.end());
    if (vocab_cmd->parsed()) {
      const auto vocab = snm::cmd_build_vocab(cfg.corpora, cfg.min_count, out);
      std::cerr << "vocabulary size " << vocab.size() << '\n';
    } else if (count_cmd->parsed()) {
      cfg.counts = out;
      const auto store = snm::cmd_count(cfg);
      std::cerr << "features " << store.num_features() << "\tlinks " << store.num_links() << "\tevents "
                << store.total_events() << '\n';
    } else if (isect_cmd->parsed()) {
      snm::cmd_intersect(cfg, out);
    } else if (train_cmd->parsed()) {
      const auto outcome = snm::cmd_train(cfg);
      std::cout << outcome.log;
    } else if (eval_cmd->parsed()) {
      std::cout << snm::format_report(snm::cmd_eval(cfg));
    } else if (inspect_cmd->parsed()) {
      std::cout << snm::cmd_inspect(cfg, feature, word);
    }
  } catch (const snm::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

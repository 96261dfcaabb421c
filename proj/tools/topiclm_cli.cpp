/**
 * topiclm command line.
 *
 *   topiclm synth    --config cfg.json [overrides]   generate a synthetic corpus
 *   topiclm cluster  ...                             build cluster tree(s) + balance CSV
 *   topiclm cut      ...                             entropy-optimal tree cut(s)
 *   topiclm train    ...                             hierarchical LM -> model.bin
 *   topiclm eval     ...                             perplexity report (JSON + CSV)
 *   topiclm demo     ...                             per-token adaptation trace
 *   topiclm dump     ...                             human-readable model listing
 *
 * Exit codes: 0 success, 2 usage/config error, 3 data integrity error.
 */

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>

#include "topiclm/pipeline.hpp"

using namespace topiclm;

namespace {

struct Overrides {
  std::string config_path;
  std::string corpus, test_corpus, workdir;
  std::string linkage, transform, fw_stoplist, word_set;
  double alpha = -1.0, epsilon = -1.0, gamma = -1.0, heldout = -1.0, fw_threshold = -1.0;
  std::int64_t K = -1, order = -1, window = -1, knn = -1, workers = -1, max_docs = -1;
  std::int64_t seed = -1, gt_max = -1, demo_docs = -1;
  std::int64_t topics = -1, train_docs = -1, test_docs = -1;
  bool em_on = false, em_off = false;
  bool scaling_on = false, scaling_off = false;
  std::vector<double> sweep_alphas, sweep_epsilons;
  std::vector<std::size_t> sweep_K;
};

void add_common(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "JSON config file");
  cmd->add_option("--corpus", ov.corpus, "training corpus (file or directory)");
  cmd->add_option("--test-corpus", ov.test_corpus, "evaluation corpus");
  cmd->add_option("--workdir", ov.workdir, "artifact directory");
  cmd->add_option("--seed", ov.seed, "master seed");
  cmd->add_option("--workers", ov.workers, "worker threads (0 = auto)");
  cmd->add_option("--linkage", ov.linkage, "average|maximum");
  cmd->add_option("--alpha", ov.alpha, "cluster-size normalization exponent");
  cmd->add_option("--epsilon", ov.epsilon, "term-vector smoothing");
  cmd->add_option("--max-docs", ov.max_docs, "cap on tree-building documents");
  cmd->add_option("--sweep-alpha", ov.sweep_alphas, "extra alphas to sweep")->delimiter(',');
  cmd->add_option("--sweep-epsilon", ov.sweep_epsilons, "extra epsilons to sweep")->delimiter(',');
  cmd->add_option("--K", ov.K, "cut size (number of topics)");
  cmd->add_option("--sweep-K", ov.sweep_K, "extra cut sizes to sweep")->delimiter(',');
  cmd->add_option("--word-set", ov.word_set, "token list restricting the entropy word set");
  cmd->add_option("--order", ov.order, "n-gram order (2 or 3)");
  cmd->add_option("--gt-max", ov.gt_max, "Good-Turing discount cutoff");
  cmd->add_flag("--em", ov.em_on, "EM weight estimation");
  cmd->add_flag("--no-em", ov.em_off, "grid-search weight estimation (default)");
  cmd->add_option("--heldout-fraction", ov.heldout, "held-out share of the corpus");
  cmd->add_option("--fw-stoplist", ov.fw_stoplist, "custom function-word list");
  cmd->add_option("--fw-threshold", ov.fw_threshold, "doc-frequency threshold mode");
  cmd->add_option("--window", ov.window, "history window (tokens)");
  cmd->add_option("--transform", ov.transform, "identity|linear|power|power-composed|exp");
  cmd->add_option("--gamma", ov.gamma, "power-family exponent");
  cmd->add_flag("--scaling", ov.scaling_on, "min-max similarity scaling (default)");
  cmd->add_flag("--no-scaling", ov.scaling_off, "disable similarity scaling");
  cmd->add_option("--knn", ov.knn, "top-k topic truncation (0 = off)");
  cmd->add_option("--demo-docs", ov.demo_docs, "documents traced by demo");
  cmd->add_option("--topics", ov.topics, "synth: latent topics");
  cmd->add_option("--train-docs", ov.train_docs, "synth: training documents");
  cmd->add_option("--test-docs", ov.test_docs, "synth: test documents");
}

PipelineConfig materialize(const Overrides& ov) {
  PipelineConfig cfg;
  if (!ov.config_path.empty()) cfg = load_config(ov.config_path);
  if (!ov.corpus.empty()) cfg.corpus = ov.corpus;
  if (!ov.test_corpus.empty()) cfg.test_corpus = ov.test_corpus;
  if (!ov.workdir.empty()) cfg.workdir = ov.workdir;
  if (!ov.linkage.empty()) cfg.linkage = linkage_from_name(ov.linkage);
  if (ov.alpha >= 0.0) cfg.alpha = ov.alpha;
  if (ov.epsilon >= 0.0) cfg.epsilon = ov.epsilon;
  if (ov.max_docs >= 0) cfg.max_docs = static_cast<std::size_t>(ov.max_docs);
  if (!ov.sweep_alphas.empty()) cfg.sweep_alphas = ov.sweep_alphas;
  if (!ov.sweep_epsilons.empty()) cfg.sweep_epsilons = ov.sweep_epsilons;
  if (ov.K >= 0) cfg.K = static_cast<std::size_t>(ov.K);
  if (!ov.sweep_K.empty()) cfg.sweep_K = ov.sweep_K;
  if (!ov.word_set.empty()) cfg.word_set = ov.word_set;
  if (ov.order >= 0) cfg.order = static_cast<int>(ov.order);
  if (ov.gt_max >= 0) cfg.gt_max = static_cast<int>(ov.gt_max);
  if (ov.em_on) cfg.em = true;
  if (ov.em_off) cfg.em = false;
  if (ov.heldout >= 0.0) cfg.heldout_fraction = ov.heldout;
  if (!ov.fw_stoplist.empty()) cfg.fw_stoplist = ov.fw_stoplist;
  if (ov.fw_threshold >= 0.0) cfg.fw_df_threshold = ov.fw_threshold;
  if (ov.window >= 0) cfg.window = static_cast<std::size_t>(ov.window);
  if (!ov.transform.empty()) {
    cfg.transform = SimilarityTransform::family_from_name(ov.transform);
  }
  if (ov.gamma >= 0.0) cfg.gamma = ov.gamma;
  if (ov.scaling_on) cfg.scaling = true;
  if (ov.scaling_off) cfg.scaling = false;
  if (ov.knn >= 0) cfg.knn = static_cast<int>(ov.knn);
  if (ov.demo_docs >= 0) cfg.demo_docs = static_cast<std::size_t>(ov.demo_docs);
  if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.workers >= 0) cfg.workers = static_cast<int>(ov.workers);
  if (ov.topics >= 0) cfg.synth.topics = static_cast<int>(ov.topics);
  if (ov.train_docs >= 0) cfg.synth.train_docs = static_cast<int>(ov.train_docs);
  if (ov.test_docs >= 0) cfg.synth.test_docs = static_cast<int>(ov.test_docs);
  cfg.synth.seed = cfg.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical topic-adaptive n-gram language modeling"};
  app.require_subcommand(1);

  Overrides ov;
  const char* names[] = {"synth", "cluster", "cut", "train", "eval", "demo", "dump"};
  const char* descs[] = {
      "generate a synthetic topic corpus",
      "agglomerative cluster tree(s) + balance statistics",
      "entropy-optimal tree cut(s) + sweep CSV",
      "train the hierarchical topic LM",
      "perplexity evaluation (baseline vs adaptive)",
      "per-token adaptation trace",
      "human-readable model listing"};
  for (int i = 0; i < 7; ++i) add_common(app.add_subcommand(names[i], descs[i]), ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    const PipelineConfig cfg = materialize(ov);
    if (app.got_subcommand("synth")) {
      run_synth(cfg);
    } else if (app.got_subcommand("cluster")) {
      run_cluster(cfg);
    } else if (app.got_subcommand("cut")) {
      run_cut(cfg);
    } else if (app.got_subcommand("train")) {
      run_train(cfg);
    } else if (app.got_subcommand("eval")) {
      run_eval(cfg);
    } else if (app.got_subcommand("demo")) {
      run_demo(cfg);
    } else if (app.got_subcommand("dump")) {
      run_dump(cfg, std::cout);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

/**
 * Pipeline tests: config parsing and overrides, synthetic corpus
 * determinism, every emitted CSV validating against its schema, model
 * container round-trip with bit-exact probabilities, and CLI exit codes.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "topiclm/pipeline.hpp"

using namespace topiclm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("topiclm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig small_config(const fs::path& dir) {
  PipelineConfig cfg;
  cfg.workdir = dir;
  cfg.corpus = dir / "train.txt";
  cfg.test_corpus = dir / "test.txt";
  cfg.synth.topics = 3;
  cfg.synth.train_docs = 60;
  cfg.synth.test_docs = 20;
  cfg.synth.doc_len_min = 40;
  cfg.synth.doc_len_max = 80;
  cfg.K = 3;
  cfg.alpha = 0.3;
  cfg.max_docs = 60;
  cfg.seed = 11;
  cfg.workers = 2;
  cfg.heldout_fraction = 0.15;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("config: json round trip and defaults") {
  const auto dir = fresh_dir("config");
  const auto path = dir / "cfg.json";
  {
    std::ofstream out(path);
    out << R"({
      "paths": {"corpus": "c.txt", "workdir": "wd"},
      "clustering": {"linkage": "maximum", "alpha": 0.15, "sweep_alphas": [0.0, 0.3]},
      "cut": {"K": 5},
      "lm": {"order": 3, "em": true},
      "adapt": {"transform": "power", "gamma": 3.0, "knn": 2, "scaling": false},
      "seed": 99
    })";
  }
  auto cfg = load_config(path);
  CHECK(cfg.linkage == Linkage::kMaximum);
  CHECK(cfg.alpha == doctest::Approx(0.15));
  CHECK(cfg.sweep_alphas == std::vector<double>{0.0, 0.3});
  CHECK(cfg.K == 5);
  CHECK(cfg.order == 3);
  CHECK(cfg.em);
  CHECK(cfg.transform == SimilarityTransform::Family::kPower);
  CHECK(cfg.gamma == doctest::Approx(3.0));
  CHECK(cfg.knn == 2);
  CHECK_FALSE(cfg.scaling);
  CHECK(cfg.seed == 99);
  CHECK(cfg.synth.seed == 99);
  // defaults survive
  CHECK(cfg.order == 3);
  CHECK(cfg.gt_max == 5);
  CHECK(cfg.window == 5000);

  CHECK_THROWS_AS(load_config(dir / "missing.json"), UsageError);
  {
    std::ofstream out(dir / "bad.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_config(dir / "bad.json"), UsageError);
}

TEST_CASE("synth: deterministic by seed, distinct across seeds") {
  const auto dir = fresh_dir("synth");
  PipelineConfig cfg = small_config(dir);
  run_synth(cfg, std::cout);
  const auto train1 = slurp(dir / "train.txt");
  const auto test1 = slurp(dir / "test.txt");
  run_synth(cfg, std::cout);
  CHECK(slurp(dir / "train.txt") == train1);
  CHECK(slurp(dir / "test.txt") == test1);

  cfg.seed = 12;
  cfg.synth.seed = 12;
  run_synth(cfg, std::cout);
  CHECK(slurp(dir / "train.txt") != train1);

  // shared function words come from the shipped stoplist
  auto raw = load_raw_corpus(dir / "train.txt");
  auto corpus = build_corpus(raw);
  auto classes = WordClassPartition::from_stoplist(corpus.vocab, english_stoplist());
  std::size_t fw = 0;
  for (TokenId w = 1; w < static_cast<TokenId>(corpus.vocab.size()); ++w) {
    fw += classes.is_function(w) ? 1 : 0;
  }
  CHECK(fw >= 20);
}

TEST_CASE("pipeline stages emit schema-valid CSV artifacts") {
  const auto dir = fresh_dir("stages");
  PipelineConfig cfg = small_config(dir);
  cfg.sweep_alphas = {0.0};
  cfg.sweep_K = {2, 4};
  std::ostringstream quiet;
  run_synth(cfg, quiet);
  run_cluster(cfg, quiet);
  run_cut(cfg, quiet);
  run_train(cfg, quiet);
  run_eval(cfg, quiet);
  run_demo(cfg, quiet);

  CHECK(csv::validate_file(csv::balance_schema(), dir / "balance.csv").ok);
  CHECK(csv::validate_file(csv::merges_schema(), dir / "tree_a0.3_e0.merges.csv").ok);
  CHECK(csv::validate_file(csv::merges_schema(), dir / "tree_a0_e0.merges.csv").ok);
  CHECK(csv::validate_file(csv::entropy_sweep_schema(), dir / "entropy_sweep.csv").ok);
  CHECK(csv::validate_file(csv::lambda_by_height_schema(), dir / "lambda_by_height.csv").ok);
  CHECK(csv::validate_file(csv::bigram_classes_schema(), dir / "bigram_classes.csv").ok);
  CHECK(csv::validate_file(csv::perdoc_schema(), dir / "perdoc.csv").ok);
  CHECK(csv::validate_file(csv::demo_schema(), dir / "demo.csv").ok);

  // cross-schema validation fails loudly
  CHECK_FALSE(csv::validate_file(csv::merges_schema(), dir / "balance.csv").ok);

  // bigram class table sums to 100
  {
    std::ifstream in(dir / "bigram_classes.csv");
    std::string line;
    std::getline(in, line);
    double total = 0.0;
    while (std::getline(in, line)) {
      const auto cells = csv::split_row(line);
      REQUIRE(cells.size() == 3);
      total += std::stod(cells[2]);
    }
    CHECK(total == doctest::Approx(100.0).epsilon(1e-9));
  }

  // eval.json exists and carries both models
  {
    std::ifstream in(dir / "eval.json");
    Json j;
    in >> j;
    CHECK(j.contains("baseline"));
    CHECK(j.contains("adaptive"));
    CHECK(j["tokens"]["total"].get<std::uint64_t>() > 0);
    CHECK(j["baseline"]["overall_ppl"].get<double>() > 1.0);
  }
}

TEST_CASE("model container: round trip preserves every probability bit") {
  const auto dir = fresh_dir("roundtrip");
  PipelineConfig cfg = small_config(dir);
  cfg.epsilon = 0.1;  // exercise the smoothed-centroid path
  std::ostringstream quiet;
  run_synth(cfg, quiet);
  run_cluster(cfg, quiet);
  run_cut(cfg, quiet);
  auto trained = run_train(cfg, quiet);
  const auto& lm = trained.train.lm;

  auto corpus = build_corpus(load_raw_corpus(cfg.corpus));
  auto loaded = load_model(dir / "model.bin", corpus.background());

  CHECK(loaded.order == lm.order);
  CHECK(loaded.vocab_hash == lm.vocab_hash);
  CHECK(loaded.beta2 == lm.beta2);
  CHECK(loaded.topo.nodes.size() == lm.topo.nodes.size());
  CHECK(loaded.topo.topics == lm.topo.topics);

  Rng rng(1);
  const auto V = static_cast<TokenId>(lm.vocab_size);
  for (int trial = 0; trial < 2000; ++trial) {
    const TokenId w1 = static_cast<TokenId>(rng.below(V));
    const TokenId w2 = static_cast<TokenId>(rng.below(V));
    const TokenId h[1] = {w1};
    for (std::size_t t = 0; t < lm.n_topics(); ++t) {
      const double a = lm.topic_prob(static_cast<int>(t), std::span<const TokenId>(h, 1), w2);
      const double b = loaded.topic_prob(static_cast<int>(t), std::span<const TokenId>(h, 1), w2);
      CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
  }

  // corrupt container: truncated or bad magic
  {
    std::ofstream out(dir / "corrupt.bin", std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(load_model(dir / "corrupt.bin"), DataError);
  {
    const auto bytes = slurp(dir / "model.bin");
    std::ofstream out(dir / "trunc.bin", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_model(dir / "trunc.bin"), DataError);
}

TEST_CASE("determinism: repeated runs produce identical artifacts") {
  const auto d1 = fresh_dir("det1");
  const auto d2 = fresh_dir("det2");
  std::ostringstream quiet;
  for (const auto& dir : {d1, d2}) {
    PipelineConfig cfg = small_config(dir);
    cfg.workers = 4;  // parallel sections must not change results
    run_synth(cfg, quiet);
    run_cluster(cfg, quiet);
    run_cut(cfg, quiet);
    run_train(cfg, quiet);
    run_eval(cfg, quiet);
  }
  for (const char* f : {"train.txt", "test.txt", "vocab.tsv", "balance.csv", "entropy_sweep.csv",
                        "cut.txt", "model.bin", "eval.json", "perdoc.csv"}) {
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
}

#ifdef TOPICLM_CLI_PATH
TEST_CASE("cli exit codes: 0 success, 2 usage, 3 integrity") {
  const auto dir = fresh_dir("cli");
  const std::string cli = TOPICLM_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
  };

  CHECK(run("synth --workdir " + dir.string() + " --train-docs 40 --test-docs 10 --seed 3") == 0);
  CHECK(run("cluster --workdir " + dir.string() + " --corpus " + (dir / "train.txt").string() +
            " --max-docs 40") == 0);
  // missing corpus path -> usage error
  CHECK(run("cluster --workdir " + dir.string() + " --corpus /nonexistent/path.txt") == 2);
  // K exceeding the leaf count -> usage error
  CHECK(run("cut --workdir " + dir.string() + " --corpus " + (dir / "train.txt").string() +
            " --K 4000") == 2);
  CHECK(run("cut --workdir " + dir.string() + " --corpus " + (dir / "train.txt").string() +
            " --K 3") == 0);
  CHECK(run("train --workdir " + dir.string() + " --corpus " + (dir / "train.txt").string()) == 0);
  // corrupt model container -> data integrity error
  {
    std::ofstream out(dir / "model.bin", std::ios::binary);
    out << "garbage";
  }
  CHECK(run("dump --workdir " + dir.string()) == 3);
  // unknown flag -> usage
  CHECK(run("cluster --definitely-not-a-flag") == 2);
}
#endif

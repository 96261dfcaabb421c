#pragma once

/**
 * Pipeline orchestration behind the CLI subcommands. One declarative JSON
 * config (plus command-line overrides) drives every stage; all randomness
 * flows from the single seed, and every artifact lands in the work
 * directory:
 *
 *   synth    train.txt test.txt
 *   cluster  vocab.tsv  tree_a<A>_e<E>.{tree,centroids}  *.merges.csv  balance.csv
 *   cut      cut.txt  cut_K<k>.txt  entropy_sweep.csv
 *   train    model.bin  lambda_by_height.csv  bigram_classes.csv
 *   eval     eval.json  perdoc.csv
 *   demo     demo.csv
 *   dump     human-readable model listing
 */

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "topiclm/adapt.hpp"
#include "topiclm/cluster.hpp"
#include "topiclm/corpus.hpp"
#include "topiclm/csv.hpp"
#include "topiclm/lm.hpp"
#include "topiclm/lm_train.hpp"
#include "topiclm/serialize.hpp"
#include "topiclm/synth.hpp"
#include "topiclm/treecut.hpp"

namespace topiclm {

using Json = nlohmann::ordered_json;

struct PipelineConfig {
  // paths
  std::filesystem::path corpus;       // training corpus (file or directory)
  std::filesystem::path test_corpus;  // evaluation corpus
  std::filesystem::path workdir = "work";

  // clustering
  Linkage linkage = Linkage::kAverage;
  double alpha = 0.3;
  double epsilon = 0.0;
  std::size_t max_docs = 2000;          // cap on tree-building documents
  std::vector<double> sweep_alphas;     // extra trees to build
  std::vector<double> sweep_epsilons;

  // cut
  std::size_t K = 3;
  std::vector<std::size_t> sweep_K;
  std::filesystem::path word_set;  // optional token list restricting W

  // lm
  int order = 2;
  int gt_max = 5;
  bool em = false;
  double heldout_fraction = 0.1;
  std::filesystem::path fw_stoplist;   // optional custom stoplist
  double fw_df_threshold = -1.0;       // >= 0 switches to threshold mode

  // adapt
  std::size_t window = 5000;
  SimilarityTransform::Family transform = SimilarityTransform::Family::kLinear;
  double gamma = 2.0;
  bool scaling = true;
  int knn = 0;
  std::size_t demo_docs = 3;

  // synth
  SynthConfig synth;

  std::uint64_t seed = 1;
  int workers = 0;  // 0 = hardware concurrency

  int effective_workers() const { return workers <= 0 ? default_workers() : workers; }

  SimilarityTransform similarity_transform() const {
    SimilarityTransform t;
    t.family = transform;
    t.gamma = gamma;
    t.scaling = scaling;
    t.knn = knn;
    t.validate();
    return t;
  }

  /// Model-relevant parameters; excludes filesystem paths on purpose so
  /// reports from different work directories stay byte-comparable.
  Json echo() const {
    Json j;
    j["seed"] = seed;
    j["clustering"] = {{"linkage", linkage_name(linkage)},
                       {"alpha", alpha},
                       {"epsilon", epsilon},
                       {"max_docs", max_docs}};
    j["cut"] = {{"K", K}};
    j["lm"] = {{"order", order},
               {"gt_max", gt_max},
               {"em", em},
               {"heldout_fraction", heldout_fraction}};
    j["adapt"] = {{"window", window},
                  {"transform", SimilarityTransform::family_name(transform)},
                  {"gamma", gamma},
                  {"scaling", scaling},
                  {"knn", knn}};
    return j;
  }
};

namespace detail {

template <typename T>
void maybe(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void maybe_path(const Json& j, const char* key, std::filesystem::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

}  // namespace detail

inline PipelineConfig config_from_json(const Json& j) {
  PipelineConfig c;
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    detail::maybe_path(p, "corpus", c.corpus);
    detail::maybe_path(p, "test_corpus", c.test_corpus);
    detail::maybe_path(p, "workdir", c.workdir);
  }
  if (j.contains("clustering")) {
    const auto& p = j.at("clustering");
    if (p.contains("linkage")) c.linkage = linkage_from_name(p.at("linkage").get<std::string>());
    detail::maybe(p, "alpha", c.alpha);
    detail::maybe(p, "epsilon", c.epsilon);
    detail::maybe(p, "max_docs", c.max_docs);
    detail::maybe(p, "sweep_alphas", c.sweep_alphas);
    detail::maybe(p, "sweep_epsilons", c.sweep_epsilons);
  }
  if (j.contains("cut")) {
    const auto& p = j.at("cut");
    detail::maybe(p, "K", c.K);
    detail::maybe(p, "sweep_K", c.sweep_K);
    detail::maybe_path(p, "word_set", c.word_set);
  }
  if (j.contains("lm")) {
    const auto& p = j.at("lm");
    detail::maybe(p, "order", c.order);
    detail::maybe(p, "gt_max", c.gt_max);
    detail::maybe(p, "em", c.em);
    detail::maybe(p, "heldout_fraction", c.heldout_fraction);
    detail::maybe_path(p, "fw_stoplist", c.fw_stoplist);
    detail::maybe(p, "fw_df_threshold", c.fw_df_threshold);
  }
  if (j.contains("adapt")) {
    const auto& p = j.at("adapt");
    if (p.contains("transform")) {
      c.transform = SimilarityTransform::family_from_name(p.at("transform").get<std::string>());
    }
    detail::maybe(p, "window", c.window);
    detail::maybe(p, "gamma", c.gamma);
    detail::maybe(p, "scaling", c.scaling);
    detail::maybe(p, "knn", c.knn);
    detail::maybe(p, "demo_docs", c.demo_docs);
  }
  if (j.contains("synth")) {
    const auto& p = j.at("synth");
    detail::maybe(p, "topics", c.synth.topics);
    detail::maybe(p, "train_docs", c.synth.train_docs);
    detail::maybe(p, "test_docs", c.synth.test_docs);
    detail::maybe(p, "doc_len_min", c.synth.doc_len_min);
    detail::maybe(p, "doc_len_max", c.synth.doc_len_max);
    detail::maybe(p, "content_words_per_topic", c.synth.content_words_per_topic);
    detail::maybe(p, "function_words", c.synth.function_words);
    detail::maybe(p, "function_share", c.synth.function_share);
    detail::maybe(p, "leak", c.synth.leak);
    detail::maybe(p, "topic_weights", c.synth.topic_weights);
  }
  detail::maybe(j, "seed", c.seed);
  detail::maybe(j, "workers", c.workers);
  c.synth.seed = c.seed;
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw UsageError("config parse error in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Shared stage helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_g(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::filesystem::path tree_base(const PipelineConfig& cfg, double alpha, double eps) {
  return cfg.workdir / ("tree_a" + fmt_g(alpha) + "_e" + fmt_g(eps));
}

inline Corpus load_training_corpus(const PipelineConfig& cfg) {
  if (cfg.corpus.empty()) throw UsageError("no training corpus configured");
  return build_corpus(load_raw_corpus(cfg.corpus));
}

inline WordClassPartition make_classes(const PipelineConfig& cfg, const Corpus& corpus) {
  if (cfg.fw_df_threshold >= 0.0) {
    return WordClassPartition::from_df_threshold(corpus.vocab, corpus.doc_freq,
                                                 corpus.docs.size(), cfg.fw_df_threshold);
  }
  if (!cfg.fw_stoplist.empty()) {
    std::ifstream in(cfg.fw_stoplist);
    if (!in) throw UsageError("cannot open stoplist: " + cfg.fw_stoplist.string());
    std::unordered_set<std::string> words;
    std::string w;
    while (in >> w) words.insert(w);
    return WordClassPartition::from_stoplist(corpus.vocab, words);
  }
  return WordClassPartition::from_stoplist(corpus.vocab, english_stoplist());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline void run_synth(const PipelineConfig& cfg, std::ostream& log = std::cout) {
  std::filesystem::create_directories(cfg.workdir);
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  auto corpus = generate_synthetic_corpus(sc);
  write_corpus_file(corpus.train, cfg.workdir / "train.txt");
  write_corpus_file(corpus.test, cfg.workdir / "test.txt");
  log << "synth: wrote " << corpus.train.size() << " train / " << corpus.test.size()
      << " test documents to " << cfg.workdir.string() << "\n";
}

struct ClusterStageResult {
  std::vector<std::tuple<double, double, BalanceProfile>> balance;  // (alpha, eps, profile)
};

inline ClusterStageResult run_cluster(const PipelineConfig& cfg, std::ostream& log = std::cout) {
  std::filesystem::create_directories(cfg.workdir);
  auto corpus = detail::load_training_corpus(cfg);
  corpus.vocab.save(cfg.workdir / "vocab.tsv");

  std::vector<double> alphas{cfg.alpha};
  for (double a : cfg.sweep_alphas) {
    if (std::find(alphas.begin(), alphas.end(), a) == alphas.end()) alphas.push_back(a);
  }
  std::vector<double> epsilons{cfg.epsilon};
  for (double e : cfg.sweep_epsilons) {
    if (std::find(epsilons.begin(), epsilons.end(), e) == epsilons.end()) epsilons.push_back(e);
  }

  ClusterStageResult res;
  csv::Writer balance(cfg.workdir / "balance.csv", csv::balance_schema());
  for (double eps : epsilons) {
    auto vectors = build_term_vectors(corpus, eps, cfg.effective_workers());
    const std::size_t n = std::min(cfg.max_docs, vectors.size());
    std::span<const TermVector> view(vectors.data(), n);
    for (double alpha : alphas) {
      ClusteringConfig cc;
      cc.linkage = cfg.linkage;
      cc.alpha = alpha;
      cc.epsilon = eps;
      cc.seed = cfg.seed;
      cc.workers = cfg.effective_workers();
      auto tree = agglomerate(view, cc);
      const auto base = detail::tree_base(cfg, alpha, eps);
      save_tree(tree, base);
      {
        csv::Writer merges(base.string() + ".merges.csv", csv::merges_schema());
        for (const auto& m : tree.merges) {
          merges.row({std::to_string(m.step), std::to_string(m.left), std::to_string(m.right),
                      csv::Writer::num(m.similarity)});
        }
      }
      const auto prof = tree_balance_profile(tree);
      balance.row({detail::fmt_g(alpha), detail::fmt_g(eps), linkage_name(cfg.linkage),
                   std::to_string(prof.max_depth), csv::Writer::num(prof.mean_leaf_depth),
                   csv::Writer::num(prof.imbalance)});
      res.balance.emplace_back(alpha, eps, prof);
      log << "cluster: alpha=" << alpha << " eps=" << eps << " linkage="
          << linkage_name(cfg.linkage) << " imbalance=" << prof.imbalance << " -> "
          << base.string() << ".tree\n";
    }
  }
  return res;
}

inline std::optional<std::unordered_set<TokenId>> load_word_set(const PipelineConfig& cfg,
                                                                const Corpus& corpus) {
  if (cfg.word_set.empty()) return std::nullopt;
  std::ifstream in(cfg.word_set);
  if (!in) throw UsageError("cannot open word set: " + cfg.word_set.string());
  std::unordered_set<TokenId> ids;
  std::string w;
  while (in >> w) {
    if (auto id = corpus.vocab.lookup(w)) ids.insert(*id);
  }
  if (ids.empty()) throw DataError("word set shares no tokens with the vocabulary");
  return ids;
}

struct CutStageResult {
  TreeCut primary;
  std::vector<std::tuple<double, std::size_t, double>> sweep;  // (alpha, K, entropy)
};

inline CutStageResult run_cut(const PipelineConfig& cfg, std::ostream& log = std::cout) {
  auto corpus = detail::load_training_corpus(cfg);
  const auto bg = corpus.background();
  auto word_set = load_word_set(cfg, corpus);

  std::vector<double> alphas{cfg.alpha};
  for (double a : cfg.sweep_alphas) {
    if (std::find(alphas.begin(), alphas.end(), a) == alphas.end()) alphas.push_back(a);
  }
  std::vector<std::size_t> ks{cfg.K};
  for (std::size_t k : cfg.sweep_K) {
    if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  }

  CutStageResult res;
  csv::Writer sweep(cfg.workdir / "entropy_sweep.csv", csv::entropy_sweep_schema());
  for (double alpha : alphas) {
    const auto base = detail::tree_base(cfg, alpha, cfg.epsilon);
    if (!std::filesystem::exists(base.string() + ".tree")) {
      throw UsageError("tree not found (run cluster first): " + base.string() + ".tree");
    }
    auto tree = load_tree(base, bg);
    auto obj = build_entropy_objective(tree, corpus.docs, corpus.idf, word_set);
    for (std::size_t k : ks) {
      if (k > tree.leaf_count) {
        throw UsageError("K=" + std::to_string(k) + " exceeds tree leaf count " +
                         std::to_string(tree.leaf_count));
      }
      auto cut = optimal_cut(tree, k, obj);
      sweep.row({detail::fmt_g(alpha), linkage_name(cfg.linkage), std::to_string(k),
                 csv::Writer::num(cut.objective)});
      res.sweep.emplace_back(alpha, k, cut.objective);
      const bool primary = alpha == cfg.alpha && k == cfg.K;
      std::string name = "cut.txt";
      if (!primary) {
        name = "cut_K" + std::to_string(k) +
               (alpha == cfg.alpha ? "" : "_a" + detail::fmt_g(alpha)) + ".txt";
      }
      const auto cut_path = cfg.workdir / name;
      std::ofstream out(cut_path);
      out << "objective " << csv::Writer::num(cut.objective) << '\n';
      for (NodeId n : cut.nodes) out << n << '\n';
      if (primary) res.primary = cut;
      log << "cut: alpha=" << alpha << " K=" << k << " entropy=" << cut.objective << "\n";
    }
  }
  return res;
}

inline TreeCut load_cut(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open cut file: " + path.string());
  TreeCut cut;
  std::string word;
  in >> word >> cut.objective;
  if (word != "objective") throw DataError("bad cut file: " + path.string());
  NodeId n;
  while (in >> n) cut.nodes.push_back(n);
  if (cut.nodes.empty()) throw DataError("cut file lists no nodes: " + path.string());
  return cut;
}

struct TrainStageResult {
  TrainResult train;
};

inline TrainStageResult run_train(const PipelineConfig& cfg, std::ostream& log = std::cout) {
  auto corpus = detail::load_training_corpus(cfg);
  const auto bg = corpus.background();
  const auto base = detail::tree_base(cfg, cfg.alpha, cfg.epsilon);
  if (!std::filesystem::exists(base.string() + ".tree")) {
    throw UsageError("tree not found (run cluster first): " + base.string() + ".tree");
  }
  auto tree = load_tree(base, bg);
  auto cut = load_cut(cfg.workdir / "cut.txt");
  auto classes = detail::make_classes(cfg, corpus);
  auto vectors = build_term_vectors(corpus, cfg.epsilon, cfg.effective_workers());

  TrainOptions opt;
  opt.order = cfg.order;
  opt.gt_max = cfg.gt_max;
  opt.em_mode = cfg.em;
  opt.heldout_fraction = cfg.heldout_fraction;
  opt.seed = cfg.seed;
  opt.workers = cfg.effective_workers();

  TrainStageResult res{train_hierarchical_lm(corpus, vectors, tree, cut.nodes, classes, opt)};
  const auto& tr = res.train;
  save_model(tr.lm, cfg.workdir / "model.bin");

  {
    csv::Writer classes_csv(cfg.workdir / "bigram_classes.csv", csv::bigram_classes_schema());
    const auto& st = tr.class_stats;
    classes_csv.row({"fixed", "p(FW|FW)", csv::Writer::num(st.token_share[0][0])});
    classes_csv.row({"fixed", "p(FW|CW)", csv::Writer::num(st.token_share[1][0])});
    classes_csv.row({"free", "p(CW|CW)", csv::Writer::num(st.token_share[1][1])});
    classes_csv.row({"free", "p(CW|FW)", csv::Writer::num(st.token_share[0][1])});
  }
  {
    csv::Writer lam(cfg.workdir / "lambda_by_height.csv", csv::lambda_by_height_schema());
    if (tr.lm.em_mode) {
      for (int d = 1; d <= tr.lm.em_lambda.n_depths; ++d) {
        // event-weighted mean over buckets at this height
        double wsum = 0.0, p = 0.0, l = 0.0, r = 0.0;
        for (int b = 0; b < LambdaTable::kBuckets; ++b) {
          const double w = tr.em.group_events.empty()
                               ? 1.0
                               : static_cast<double>(
                                     tr.em.group_events[(d - 1) * LambdaTable::kBuckets + b]);
          const auto& t = tr.lm.em_lambda.at(d, b);
          wsum += w;
          p += w * t.parent;
          l += w * t.lower;
          r += w * t.relfreq;
        }
        if (wsum <= 0.0) wsum = 1.0;
        lam.row({std::to_string(d), csv::Writer::num(p / wsum), csv::Writer::num(l / wsum),
                 csv::Writer::num(r / wsum),
                 std::to_string(tr.em.group_events.empty()
                                    ? 0
                                    : std::accumulate(
                                          tr.em.group_events.begin() +
                                              (d - 1) * LambdaTable::kBuckets,
                                          tr.em.group_events.begin() + d * LambdaTable::kBuckets,
                                          std::uint64_t{0}))});
      }
    } else {
      for (int d = 1; d <= std::max(1, tr.lm.topo.max_depth); ++d) {
        lam.row({std::to_string(d), csv::Writer::num(tr.lm.global_lambda.parent),
                 csv::Writer::num(tr.lm.global_lambda.lower),
                 csv::Writer::num(tr.lm.global_lambda.relfreq), "0"});
      }
    }
  }

  log << "train: order=" << cfg.order << (cfg.em ? " (EM)" : " (grid)")
      << " topics=" << tr.lm.n_topics() << " beta=" << tr.lm.beta2 << "\n";
  log << "train: bigram classes %: fixed FW|FW=" << tr.class_stats.token_share[0][0]
      << " FW|CW=" << tr.class_stats.token_share[1][0]
      << " free CW|CW=" << tr.class_stats.token_share[1][1]
      << " CW|FW=" << tr.class_stats.token_share[0][1] << "\n";
  if (!cfg.em) {
    log << "train: grid lambda parent=" << tr.lm.global_lambda.parent
        << " lower=" << tr.lm.global_lambda.lower << " relfreq=" << tr.lm.global_lambda.relfreq
        << " (heldout ll " << tr.grid.best_ll << ")\n";
  } else {
    log << "train: EM iters=" << tr.em.heldout_ll.size()
        << " converged=" << (tr.em.converged ? "yes" : "no") << "\n";
  }
  return res;
}

/// Loads the persisted model plus the vocabulary, verifying the hash.
inline std::pair<HierarchicalLM, Vocabulary> load_model_checked(const PipelineConfig& cfg) {
  const auto vocab_path = cfg.workdir / "vocab.tsv";
  if (!std::filesystem::exists(vocab_path)) {
    throw UsageError("vocabulary not found (run cluster first): " + vocab_path.string());
  }
  auto vocab = Vocabulary::load(vocab_path);
  // rebuilding idf needs the corpus; the model carries its own idf table, so
  // only the background for eps-smoothed centroids needs the stored values
  auto lm = load_model(cfg.workdir / "model.bin");
  if (lm.vocab_hash != vocab.hash()) {
    throw DataError("model/vocabulary hash mismatch; artifacts are inconsistent");
  }
  if (eps_requires_background(lm)) {
    auto bg = Background::make(lm.idf);
    lm = load_model(cfg.workdir / "model.bin", bg);
    if (lm.vocab_hash != vocab.hash()) {
      throw DataError("model/vocabulary hash mismatch; artifacts are inconsistent");
    }
  }
  return {std::move(lm), std::move(vocab)};
}

inline std::vector<Document> load_test_documents(const PipelineConfig& cfg,
                                                 const Vocabulary& vocab) {
  if (cfg.test_corpus.empty()) throw UsageError("no test corpus configured");
  auto raw = load_raw_corpus(cfg.test_corpus);
  auto docs = map_documents(vocab, raw);
  if (docs.empty()) throw UsageError("test corpus has no non-empty documents");
  return docs;
}

struct EvalStageResult {
  EvalReport report;
  Json json;
};

inline EvalStageResult run_eval(const PipelineConfig& cfg, std::ostream& log = std::cout) {
  auto [lm, vocab] = load_model_checked(cfg);
  auto docs = load_test_documents(cfg, vocab);

  EvalOptions opt;
  opt.transform = cfg.similarity_transform();
  opt.window = cfg.window;
  opt.workers = cfg.effective_workers();
  auto rep = evaluate_perplexity(lm, docs, opt);

  Json j;
  j["config"] = cfg.echo();
  j["tokens"] = {{"total", rep.tokens_total},     {"target", rep.tokens_target},
                 {"fixed", rep.tokens_fixed},     {"unknown", rep.tokens_unknown},
                 {"no_context", rep.tokens_no_context}, {"documents", rep.documents}};
  j["baseline"] = {{"overall_ppl", rep.baseline.overall_ppl},
                   {"target_ppl", rep.baseline.target_ppl}};
  j["adaptive"] = {{"overall_ppl", rep.adaptive.overall_ppl},
                   {"target_ppl", rep.adaptive.target_ppl}};
  const double overall_red =
      100.0 * (rep.baseline.overall_ppl - rep.adaptive.overall_ppl) / rep.baseline.overall_ppl;
  const double target_red =
      rep.baseline.target_ppl > 0.0
          ? 100.0 * (rep.baseline.target_ppl - rep.adaptive.target_ppl) / rep.baseline.target_ppl
          : 0.0;
  j["reduction"] = {{"overall_pct", overall_red}, {"target_pct", target_red}};

  {
    std::ofstream out(cfg.workdir / "eval.json", std::ios::binary);
    out << j.dump(2) << '\n';
  }
  {
    csv::Writer perdoc(cfg.workdir / "perdoc.csv", csv::perdoc_schema());
    for (const auto& [id, ppl] : rep.per_doc_adaptive_ppl) {
      perdoc.row({id, csv::Writer::num(ppl)});
    }
  }
  log << "eval: baseline ppl " << rep.baseline.overall_ppl << " (target "
      << rep.baseline.target_ppl << "), adaptive ppl " << rep.adaptive.overall_ppl << " (target "
      << rep.adaptive.target_ppl << ")\n";
  log << "eval: reduction overall " << overall_red << "%, target " << target_red << "%\n";
  return {rep, std::move(j)};
}

inline void run_demo(const PipelineConfig& cfg, std::ostream& log = std::cout) {
  auto [lm, vocab] = load_model_checked(cfg);
  auto docs = load_test_documents(cfg, vocab);
  const std::size_t n_docs = std::min(cfg.demo_docs, docs.size());

  auto transform = cfg.similarity_transform();
  csv::Writer demo(cfg.workdir / "demo.csv", csv::demo_schema());
  for (std::size_t d = 0; d < n_docs; ++d) {
    HistoryState hist(lm.topic_centroids, lm.idf, cfg.window);
    const auto& tokens = docs[d].tokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t ctx_len = std::min<std::size_t>(i, static_cast<std::size_t>(lm.order - 1));
      const std::span<const TokenId> ctx(tokens.data() + i - ctx_len, ctx_len);
      const auto posterior = topic_posterior(hist, transform);
      const double p_base = lm.root.prob(ctx, tokens[i]);
      const double p_adapt = mixture_prob(lm, posterior, ctx, tokens[i]);

      std::vector<std::size_t> order(posterior.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return posterior[a] > posterior[b]; });
      std::string top;
      for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k) {
        if (k) top += '|';
        char buf[48];
        std::snprintf(buf, sizeof(buf), "t%zu:%.4f", order[k], posterior[order[k]]);
        top += buf;
      }
      demo.row({vocab.token(tokens[i]), csv::Writer::num(p_base), csv::Writer::num(p_adapt), top});
      hist.push(tokens[i]);
    }
  }
  log << "demo: wrote per-token trace for " << n_docs << " document(s)\n";
}

inline void run_dump(const PipelineConfig& cfg, std::ostream& out) {
  auto [lm, vocab] = load_model_checked(cfg);
  out << "model order=" << lm.order << " mode=" << (lm.em_mode ? "em" : "grid")
      << " vocab=" << lm.vocab_size << " hash=" << std::hex << lm.vocab_hash << std::dec
      << " beta2=" << csv::Writer::num(lm.beta2) << " beta3=" << csv::Writer::num(lm.beta3)
      << "\n";
  out << "lambda parent=" << csv::Writer::num(lm.global_lambda.parent)
      << " lower=" << csv::Writer::num(lm.global_lambda.lower)
      << " relfreq=" << csv::Writer::num(lm.global_lambda.relfreq) << "\n";
  for (std::size_t i = 0; i < lm.topo.nodes.size(); ++i) {
    const auto& n = lm.topo.nodes[i];
    out << "node " << i << " orig=" << n.orig_id << " parent=" << n.parent
        << " depth=" << n.depth << (n.is_topic ? " topic" : "") << "\n";
    if (i == 0) continue;
    const auto& nm = lm.nodes[i];
    for (int o = 2; o <= lm.order; ++o) {
      const auto& table = o == 2 ? nm.cond2 : nm.cond3;
      for (const auto& [key, t] : table) {
        out << "  h";
        if (o == 2) {
          out << '[' << vocab.token(static_cast<TokenId>(key)) << ']';
        } else {
          out << '[' << vocab.token(static_cast<TokenId>((key >> 32) - 1)) << ' '
              << vocab.token(static_cast<TokenId>(key & 0xffffffffULL)) << ']';
        }
        out << " alpha=" << csv::Writer::num(t.alpha_scale);
        for (const auto& [w, p] : t.free_probs) {
          out << ' ' << vocab.token(w) << ':' << csv::Writer::num(p);
        }
        out << "\n";
      }
    }
  }
}

}  // namespace topiclm

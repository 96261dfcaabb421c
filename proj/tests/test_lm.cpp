/**
 * Hierarchical LM tests: count tables, the Katz/Good-Turing root against an
 * independent dense implementation, the bigram-space partition, beta, node
 * model construction against a spreadsheet-style oracle, three-way
 * interpolation, and EM weight estimation.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "topiclm/cluster.hpp"
#include "topiclm/corpus.hpp"
#include "topiclm/good_turing.hpp"
#include "topiclm/lm.hpp"
#include "topiclm/lm_train.hpp"
#include "topiclm/ngram.hpp"
#include "topiclm/treecut.hpp"

using namespace topiclm;

namespace {

Corpus tiny_corpus(const std::vector<std::pair<std::string, std::string>>& texts) {
  std::vector<RawDocument> raw;
  for (const auto& [id, text] : texts) raw.push_back({id, text});
  return build_corpus(raw);
}

double row_sum_node(const HierarchicalLM& lm, int node, TokenId w1) {
  double s = 0.0;
  const TokenId h[1] = {w1};
  for (TokenId w2 = 0; w2 < static_cast<TokenId>(lm.vocab_size); ++w2) {
    s += lm.node_prob(node, std::span<const TokenId>(h, 1), w2);
  }
  return s;
}

}  // namespace

TEST_CASE("ngram counts: hand tallies and consistency") {
  NgramCounts c(2, 5);
  c.add_document(std::vector<TokenId>{1, 2, 1, 2, 1, 3});
  CHECK(c.total_tokens() == 6);
  CHECK(c.unigram()[1] == 3);
  CHECK(c.unigram()[2] == 2);
  CHECK(c.count(2, 1, 2) == 2);
  CHECK(c.count(2, 2, 1) == 2);
  CHECK(c.count(2, 1, 3) == 1);
  CHECK(c.history_total(2, 1) == 3);
  CHECK(c.rel_freq(2, 1, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(c.check_consistency());

  // sibling addition: {a:1} + {a:2, b:1} -> {a:3, b:1}
  NgramCounts a(2, 5), b(2, 5);
  a.add_document(std::vector<TokenId>{1});
  b.add_document(std::vector<TokenId>{1, 1, 2});
  NgramCounts parent = a;
  parent.add(b);
  CHECK(parent.unigram()[1] == 3);
  CHECK(parent.unigram()[2] == 1);
  CHECK(parent.total_tokens() == 4);
  CHECK(parent.check_consistency());
}

TEST_CASE("good-turing root: frozen hand values for 'a b a b a c'") {
  // vocab: <unk>=0 a=1 b=2 c=3; N=6; all unigram discounts degenerate, so the
  // singleton mass 1/6 is reserved for <unk> and seen probs scale by 5/6.
  auto corpus = tiny_corpus({{"d", "a b a b a c"}});
  NgramCounts counts(2, corpus.vocab.size());
  for (const auto& d : corpus.docs) counts.add_document(d.tokens);
  auto root = train_root(counts, 5);

  CHECK(root.unigram[1] == doctest::Approx(5.0 / 12.0).epsilon(1e-12));
  CHECK(root.unigram[2] == doctest::Approx(5.0 / 18.0).epsilon(1e-12));
  CHECK(root.unigram[3] == doctest::Approx(5.0 / 36.0).epsilon(1e-12));
  CHECK(root.unigram[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

  // bigram discounts also degenerate here: raw relative frequencies, no
  // leftover, so unseen successors of seen histories get zero.
  CHECK(root.prob_bigram(1, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(root.prob_bigram(1, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(root.prob_bigram(2, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(root.prob_bigram(1, 1) == doctest::Approx(0.0));
  CHECK(root.prob_bigram(2, 0) == doctest::Approx(0.0));
  // history c never observed as a history: pure unigram backoff
  CHECK(root.prob_bigram(3, 2) == doctest::Approx(root.unigram[2]));
}

TEST_CASE("good-turing root: matches the independent dense oracle") {
  Rng rng(2718);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t vocab_content = 4 + rng.below(5);  // content types
    std::vector<std::vector<TokenId>> docs;
    const std::size_t n_docs = 2 + rng.below(4);
    for (std::size_t d = 0; d < n_docs; ++d) {
      std::vector<TokenId> doc;
      const std::size_t len = 4 + rng.below(40);
      for (std::size_t i = 0; i < len; ++i) {
        // skewed draws produce realistic counts-of-counts
        const double u = rng.next_double();
        doc.push_back(static_cast<TokenId>(
            1 + std::min<std::size_t>(vocab_content - 1,
                                      static_cast<std::size_t>(u * u * vocab_content))));
      }
      docs.push_back(std::move(doc));
    }
    const std::size_t V = vocab_content + 1;  // + <unk> at id 0
    NgramCounts counts(2, V);
    for (const auto& d : docs) counts.add_document(d);
    auto root = train_root(counts, 5);
    auto ora = oracle::katz_oracle(docs, V, 5);

    for (TokenId w = 0; w < static_cast<TokenId>(V); ++w) {
      CHECK(root.unigram[w] == doctest::Approx(ora.uni[w]).epsilon(1e-9));
    }
    for (TokenId w1 = 0; w1 < static_cast<TokenId>(V); ++w1) {
      for (TokenId w2 = 0; w2 < static_cast<TokenId>(V); ++w2) {
        CHECK(root.prob_bigram(w1, w2) == doctest::Approx(ora.bi[w1][w2]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("good-turing root: normalization over every history") {
  Rng rng(1234);
  std::vector<std::vector<TokenId>> docs;
  for (int d = 0; d < 6; ++d) {
    std::vector<TokenId> doc;
    for (int i = 0; i < 70; ++i) doc.push_back(static_cast<TokenId>(1 + rng.below(24)));
    docs.push_back(std::move(doc));
  }
  NgramCounts counts(3, 25);
  for (const auto& d : docs) counts.add_document(d);
  auto root = train_root(counts, 5);

  double s_uni = 0.0;
  for (TokenId w = 0; w < 25; ++w) s_uni += root.unigram[w];
  CHECK(s_uni == doctest::Approx(1.0).epsilon(1e-9));

  for (TokenId w1 = 0; w1 < 25; ++w1) {
    double s = 0.0;
    for (TokenId w2 = 0; w2 < 25; ++w2) s += root.prob_bigram(w1, w2);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (TokenId w1 = 0; w1 < 25; ++w1) {
    for (TokenId w2 = 0; w2 < 25; ++w2) {
      double s = 0.0;
      for (TokenId w3 = 0; w3 < 25; ++w3) s += root.prob_trigram(w1, w2, w3);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }

  // discounted mass actually moved: some history has positive unseen mass
  bool any_unseen = false;
  for (const auto& [k, e] : root.cond2) any_unseen |= e.unseen_mass > 1e-9;
  CHECK(any_unseen);
}

TEST_CASE("classify_bigram: the partition rules") {
  auto corpus = tiny_corpus({{"1", "in the air"}, {"2", "the air in the scenario"}});
  auto classes = WordClassPartition::from_stoplist(corpus.vocab, english_stoplist());
  NgramCounts counts(2, corpus.vocab.size());
  for (const auto& d : corpus.docs) counts.add_document(d.tokens);

  const TokenId tin = corpus.vocab.lookup("in").value();
  const TokenId tthe = corpus.vocab.lookup("the").value();
  const TokenId tair = corpus.vocab.lookup("air").value();
  const TokenId tscenario = corpus.vocab.lookup("scenario").value();

  CHECK(classify_bigram(tin, tthe, classes, counts) == BigramClass::kFixed);   // p(FW|FW), seen
  CHECK(classify_bigram(tthe, tair, classes, counts) == BigramClass::kFree);   // p(CW|FW), seen
  CHECK(classify_bigram(tair, tin, classes, counts) == BigramClass::kFixed);   // p(FW|CW), seen
  CHECK(classify_bigram(tair, tscenario, classes, counts) == BigramClass::kUnknown);  // never seen
  CHECK(classify_bigram(tscenario, tscenario, classes, counts) == BigramClass::kUnknown);
}

TEST_CASE("bigram class stats: four cells summing to 100%") {
  auto corpus = tiny_corpus({{"1", "the air in the cold air"}, {"2", "cold air in scenario of the air"}});
  auto classes = WordClassPartition::from_stoplist(corpus.vocab, english_stoplist());
  NgramCounts counts(2, corpus.vocab.size());
  for (const auto& d : corpus.docs) counts.add_document(d.tokens);
  auto stats = bigram_class_stats(counts, classes);
  const double total = stats.token_share[0][0] + stats.token_share[0][1] +
                       stats.token_share[1][0] + stats.token_share[1][1];
  CHECK(total == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(stats.seen_bigram_tokens == 11);  // 13 tokens, 2 docs
}

TEST_CASE("compute_beta: against the dense oracle and degenerate partition") {
  Rng rng(555);
  std::vector<std::vector<TokenId>> docs;
  for (int d = 0; d < 5; ++d) {
    std::vector<TokenId> doc;
    for (int i = 0; i < 50; ++i) doc.push_back(static_cast<TokenId>(1 + rng.below(8)));
    docs.push_back(std::move(doc));
  }
  NgramCounts counts(2, 9);
  for (const auto& d : docs) counts.add_document(d);
  auto root = train_root(counts, 5);

  // token ids 1..4 function words, 5..8 content
  WordClassPartition classes;
  {
    Vocabulary v;
    for (int i = 1; i <= 8; ++i) v.add("w" + std::to_string(i));
    std::unordered_set<std::string> stop{"w1", "w2", "w3", "w4"};
    classes = WordClassPartition::from_stoplist(v, stop);
  }
  auto mr = compute_beta(root, classes, 2);
  std::vector<bool> is_fw(9, false);
  for (int i = 1; i <= 4; ++i) is_fw[i] = true;
  auto ora = oracle::katz_oracle(docs, 9, 5);
  CHECK(mr.beta == doctest::Approx(oracle::beta_oracle(ora, is_fw)).epsilon(1e-9));
  CHECK(mr.beta > 0.0);

  // degenerate: every word is a function word -> no seen free mass
  WordClassPartition all_fw;
  {
    Vocabulary v;
    for (int i = 1; i <= 8; ++i) v.add("w" + std::to_string(i));
    std::unordered_set<std::string> stop;
    for (int i = 1; i <= 8; ++i) stop.insert("w" + std::to_string(i));
    all_fw = WordClassPartition::from_stoplist(v, stop);
  }
  CHECK_THROWS_AS(compute_beta(root, all_fw, 2), DataError);
}

// ---------------------------------------------------------------------------
// Toy hierarchy fixture: 4 forced-merge docs, cut {leaf0, leaf1, node(2,3)}
// ---------------------------------------------------------------------------

namespace {

struct ToyModel {
  Corpus corpus;
  std::vector<TermVector> vectors;
  ClusterTree tree;
  TreeCut cut;
  WordClassPartition classes;
  TrainResult trained;
};

ToyModel build_toy(bool em_mode, int order = 2, double heldout_fraction = 0.0) {
  ToyModel toy;
  // two topical word families (x*, y*) plus shared function words
  toy.corpus = tiny_corpus({
      {"d0", "the xa xb of xa xc the xb xa of xc xa xb"},
      {"d1", "the xb of xa xa xd the xa xb xd of xb"},
      {"d2", "the ya yb of ya yc the yb ya of yc ya yb"},
      {"d3", "the yb of ya ya yd the ya yb yd of yb"},
  });
  toy.vectors = build_term_vectors(toy.corpus, 0.0);
  ClusteringConfig cfg;
  auto tree = agglomerate(toy.vectors, cfg);
  // expect ((0,1),(2,3)) by construction
  REQUIRE(tree.nodes[4].left == 0);
  REQUIRE(tree.nodes[4].right == 1);
  REQUIRE(tree.nodes[5].left == 2);
  REQUIRE(tree.nodes[5].right == 3);
  toy.tree = std::move(tree);
  toy.cut.nodes = {0, 1, 5};  // depth-2 topics under node 4, depth-1 topic 5
  toy.classes = WordClassPartition::from_stoplist(toy.corpus.vocab, english_stoplist());

  TrainOptions opt;
  opt.order = order;
  opt.em_mode = em_mode;
  opt.heldout_fraction = heldout_fraction;
  opt.seed = 7;
  toy.trained = train_hierarchical_lm(toy.corpus, toy.vectors, toy.tree, toy.cut.nodes,
                                      toy.classes, opt);
  return toy;
}

}  // namespace

TEST_CASE("toy hierarchy: topology, assignment and count propagation") {
  auto toy = build_toy(false);
  const auto& lm = toy.trained.lm;
  REQUIRE(lm.topo.nodes.size() == 5);  // root, node4, node5, leaf0, leaf1
  CHECK(lm.topo.nodes[0].orig_id == toy.tree.root);
  CHECK(lm.n_topics() == 3);
  CHECK(lm.topo.max_depth == 2);

  // independent argmax assignment: doc vectors against the three centroids
  for (std::size_t d = 0; d < toy.corpus.docs.size(); ++d) {
    int best = 0;
    double best_sim = -1.0;
    for (std::size_t t = 0; t < lm.n_topics(); ++t) {
      const double s = cosine_similarity(toy.vectors[d], lm.topic_centroids[t]);
      if (s > best_sim) {
        best_sim = s;
        best = static_cast<int>(t);
      }
    }
    CHECK(toy.trained.doc_topic[d] == best);
  }

  // root counts equal corpus totals, exactly
  CHECK(toy.trained.node_counts[0].total_tokens() == toy.corpus.total_tokens);
  CHECK(toy.trained.node_counts[0].check_consistency());
  // each internal node's totals equal its children's sums
  for (std::size_t i = 0; i < lm.topo.nodes.size(); ++i) {
    if (lm.topo.nodes[i].children.empty()) continue;
    std::uint64_t child_sum = 0;
    for (int c : lm.topo.nodes[i].children) {
      child_sum += toy.trained.node_counts[c].total_tokens();
    }
    CHECK(toy.trained.node_counts[i].total_tokens() == child_sum);
  }
}

TEST_CASE("node models: normalization, fixed identity and beta split") {
  for (bool em : {false, true}) {
    auto toy = build_toy(em, 2, em ? 0.25 : 0.0);
    const auto& lm = toy.trained.lm;
    const auto V = static_cast<TokenId>(lm.vocab_size);

    for (int node = 0; node < static_cast<int>(lm.topo.nodes.size()); ++node) {
      for (TokenId w1 = 0; w1 < V; ++w1) {
        CHECK(row_sum_node(lm, node, w1) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }

    // fixed space: bit-for-bit equality with the root
    for (int node = 1; node < static_cast<int>(lm.topo.nodes.size()); ++node) {
      for (TokenId w1 = 0; w1 < V; ++w1) {
        const TokenId h[1] = {w1};
        for (TokenId w2 = 0; w2 < V; ++w2) {
          if (lm.classify(std::span<const TokenId>(h, 1), w2) != BigramClass::kFixed) continue;
          const double pn = lm.node_prob(node, std::span<const TokenId>(h, 1), w2);
          const double pr = lm.root.prob_bigram(w1, w2);
          CHECK(std::memcmp(&pn, &pr, sizeof(double)) == 0);
        }
      }
    }

    // unseen/free mass ratio equals beta at every non-root node, per history
    for (int node = 1; node < static_cast<int>(lm.topo.nodes.size()); ++node) {
      for (const auto& [key, re] : lm.root.cond2) {
        const TokenId w1 = static_cast<TokenId>(key);
        const TokenId h[1] = {w1};
        double free_mass = 0.0, unknown_mass = 0.0;
        bool any_free = false, any_unknown = false;
        for (TokenId w2 = 0; w2 < V; ++w2) {
          const auto cls = lm.classify(std::span<const TokenId>(h, 1), w2);
          const double p = lm.node_prob(node, std::span<const TokenId>(h, 1), w2);
          if (cls == BigramClass::kFree) {
            free_mass += p;
            any_free = true;
          } else if (cls == BigramClass::kUnknown) {
            unknown_mass += p;
            any_unknown = true;
          }
        }
        if (any_free && any_unknown && free_mass > 1e-12) {
          CHECK(unknown_mass / free_mass == doctest::Approx(lm.beta2).epsilon(1e-4));
        }
      }
    }
  }
}

TEST_CASE("node models: dense spreadsheet oracle agreement") {
  auto toy = build_toy(false);
  auto& lm = toy.trained.lm;

  // hand-set weights for the comparison
  const LambdaTriple l{0.5, 0.2, 0.3};  // parent, lower, relfreq
  NodeBuildOptions nb;
  nb.em_mode = false;
  nb.global_lambda = l;
  build_node_models(lm, toy.trained.node_counts, nb);

  const std::size_t V = lm.vocab_size;
  std::vector<bool> is_fw(V, false);
  for (TokenId w = 0; w < static_cast<TokenId>(V); ++w) is_fw[w] = lm.classes.is_function(w);

  // dense root oracle over all four documents
  std::vector<std::vector<TokenId>> all_docs;
  for (const auto& d : toy.corpus.docs) all_docs.push_back(d.tokens);
  auto root_ora = oracle::katz_oracle(all_docs, V, 5);
  const double beta_ora = oracle::beta_oracle(root_ora, is_fw);
  REQUIRE(lm.beta2 == doctest::Approx(beta_ora).epsilon(1e-9));

  // independent dense counts per collapsed node, from the independent argmax
  auto dense_counts_for = [&](const std::vector<int>& doc_ids) {
    std::pair<std::vector<std::uint64_t>, std::vector<std::vector<std::uint64_t>>> out;
    out.first.assign(V, 0);
    out.second.assign(V, std::vector<std::uint64_t>(V, 0));
    for (int d : doc_ids) {
      const auto& t = toy.corpus.docs[d].tokens;
      for (std::size_t i = 0; i < t.size(); ++i) {
        ++out.first[t[i]];
        if (i > 0) ++out.second[t[i - 1]][t[i]];
      }
    }
    return out;
  };

  // collapsed layout: 0=root, 1=node4(docs 0,1), 2=node5(docs 2,3),
  // 3=leaf0, 4=leaf1
  const std::vector<std::vector<int>> node_docs = {{0, 1, 2, 3}, {0, 1}, {2, 3}, {0}, {1}};

  oracle::NodeOracleInput base;
  base.root = &root_ora;
  base.is_function = is_fw;
  base.beta = beta_ora;
  base.lambda_parent = l.parent;
  base.lambda_lower = l.lower;
  base.lambda_relfreq = l.relfreq;
  base.uniform = 1.0 / static_cast<double>(V);

  // evaluate depth-1 nodes against the root, then leaves against node 1
  std::vector<oracle::NodeOracle> node_oracles(5);
  for (int node : {1, 2, 3, 4}) {
    oracle::NodeOracleInput in = base;
    const int parent = lm.topo.nodes[node].parent;
    if (parent == 0) {
      in.parent = root_ora.bi;
      in.parent_uni = root_ora.uni;
    } else {
      in.parent = node_oracles[parent].bi;
      in.parent_uni = node_oracles[parent].uni;
    }
    auto [uni_c, bi_c] = dense_counts_for(node_docs[node]);
    in.node_uni_count = uni_c;
    in.node_bi_count = bi_c;
    node_oracles[node] = oracle::node_oracle(in);

    for (TokenId w = 0; w < static_cast<TokenId>(V); ++w) {
      CHECK(lm.nodes[node].unigram[w] ==
            doctest::Approx(node_oracles[node].uni[w]).epsilon(1e-9));
    }
    for (TokenId w1 = 0; w1 < static_cast<TokenId>(V); ++w1) {
      const TokenId h[1] = {w1};
      for (TokenId w2 = 0; w2 < static_cast<TokenId>(V); ++w2) {
        const double got = lm.node_prob(node, std::span<const TokenId>(h, 1), w2);
        CHECK(got == doctest::Approx(node_oracles[node].bi[w1][w2]).epsilon(1e-9));
      }
    }
  }

  // the root collapsed node reduces to the root model for all classes
  for (TokenId w1 = 0; w1 < static_cast<TokenId>(V); ++w1) {
    const TokenId h[1] = {w1};
    for (TokenId w2 = 0; w2 < static_cast<TokenId>(V); ++w2) {
      CHECK(lm.node_prob(0, std::span<const TokenId>(h, 1), w2) ==
            lm.root.prob_bigram(w1, w2));
    }
  }

  // frozen oracle values for the x-topic internal node (docs d0, d1);
  // computed once by the dense oracle with lambda = (.5, .2, .3)
  {
    auto id = [&](const char* s) { return toy.corpus.vocab.lookup(s).value(); };
    const int node1 = 1;
    const TokenId the = id("the"), of = id("of"), xa = id("xa"), xb = id("xb"), ya = id("ya");
    CHECK(lm.beta2 == doctest::Approx(0.85039370078740184).epsilon(1e-12));
    CHECK(lm.root.prob_bigram(the, xa) == doctest::Approx(0.09375).epsilon(1e-12));
    CHECK(lm.root.unigram[xa] == doctest::Approx(0.1372549019607843).epsilon(1e-12));
    CHECK(lm.nodes[node1].unigram[xa] == doctest::Approx(0.17080926916221034).epsilon(1e-12));
    auto p = [&](TokenId w1, TokenId w2) {
      const TokenId h[1] = {w1};
      return lm.node_prob(node1, std::span<const TokenId>(h, 1), w2);
    };
    CHECK(p(the, xa) == doctest::Approx(0.1962645009774118).epsilon(1e-12));   // free, on-topic
    CHECK(p(the, ya) == doctest::Approx(0.077775206003220548).epsilon(1e-12)); // free, off-topic
    CHECK(p(xa, of) == doctest::Approx(0.095238095238095233).epsilon(1e-12));  // fixed
    CHECK(p(xa, xa) == doctest::Approx(0.087744696344252068).epsilon(1e-12));  // unknown
    CHECK(p(xb, xa) == doctest::Approx(0.23581635149899244).epsilon(1e-12));   // free
  }
}

TEST_CASE("interpolate_ngram: degenerate weights and independent recursion") {
  auto toy = build_toy(false, 3);
  const auto& lm = toy.trained.lm;
  const auto& counts = toy.trained.node_counts;

  const int topic_node = lm.topo.topics[0];  // depth-1 node (the (2,3) merge)
  const int parent = lm.topo.nodes[topic_node].parent;
  REQUIRE(parent == 0);

  const TokenId the = toy.corpus.vocab.lookup("the").value();
  const TokenId ya = toy.corpus.vocab.lookup("ya").value();

  SUBCASE("(1,0,0) is the parent model verbatim") {
    const LambdaTriple l{1.0, 0.0, 0.0};
    const TokenId h[2] = {the, ya};
    for (TokenId w = 0; w < static_cast<TokenId>(lm.vocab_size); ++w) {
      CHECK(interpolate_ngram(lm, counts, topic_node, std::span<const TokenId>(h, 2), w, l) ==
            doctest::Approx(interpolate_ngram(lm, counts, parent, std::span<const TokenId>(h, 2),
                                              w, l))
                .epsilon(1e-12));
    }
  }

  SUBCASE("(0,0,1) with a deterministic history is an indicator") {
    // find a trigram history with a single successor at the topic node
    const auto& tri = counts[topic_node].table(3);
    bool checked = false;
    for (const auto& [key, succ] : tri) {
      if (succ.counts.size() != 1) continue;
      const TokenId h[2] = {static_cast<TokenId>((key >> 32) - 1),
                            static_cast<TokenId>(key & 0xffffffffULL)};
      const LambdaTriple l{0.0, 0.0, 1.0};
      CHECK(interpolate_ngram(lm, counts, topic_node, std::span<const TokenId>(h, 2),
                              succ.counts.begin()->first, l) == doctest::Approx(1.0));
      checked = true;
      break;
    }
    CHECK(checked);
  }

  SUBCASE("matches an independent recursive evaluator") {
    const LambdaTriple l{0.45, 0.35, 0.20};
    // test-side recursion straight from the definition
    std::function<double(int, std::vector<TokenId>, TokenId, bool)> eval =
        [&](int idx, std::vector<TokenId> h, TokenId w, bool is_root) -> double {
      double lp = is_root ? 0.0 : l.parent;
      double ll = l.lower, lr = l.relfreq;
      if (is_root) {
        const double s = ll + lr;
        ll += l.parent * ll / s;
        lr += l.parent * lr / s;
      }
      const int o = static_cast<int>(h.size()) + 1;
      double f = 0.0;
      bool have = false;
      if (o == 1) {
        const auto& cs = counts[idx];
        have = cs.total_tokens() > 0;
        f = have ? static_cast<double>(cs.unigram()[w]) / static_cast<double>(cs.total_tokens())
                 : 0.0;
      } else {
        const std::uint64_t key = pack_history(std::span<const TokenId>(h));
        have = counts[idx].history_total(o, key) > 0;
        f = counts[idx].rel_freq(o, key, w);
      }
      if (!have) {
        const double s = lp + ll;
        if (s > 0) {
          lp += lr * lp / s;
          ll += lr * ll / s;
        } else {
          lp = is_root ? 0.0 : 1.0;
          ll = is_root ? 1.0 : 0.0;
        }
        lr = 0.0;
      }
      const double p_low =
          o == 1 ? 1.0 / static_cast<double>(lm.vocab_size)
                 : eval(idx, std::vector<TokenId>(h.begin() + 1, h.end()), w, is_root);
      const double p_par =
          is_root ? 0.0
                  : eval(lm.topo.nodes[idx].parent, h, w, lm.topo.nodes[idx].parent == 0);
      return lp * p_par + ll * p_low + lr * f;
    };

    Rng rng(99);
    const auto V = static_cast<TokenId>(lm.vocab_size);
    for (int t = 0; t < 200; ++t) {
      const TokenId h1 = static_cast<TokenId>(rng.below(V));
      const TokenId h2 = static_cast<TokenId>(rng.below(V));
      const TokenId w = static_cast<TokenId>(rng.below(V));
      const TokenId h[2] = {h1, h2};
      const double got =
          interpolate_ngram(lm, counts, topic_node, std::span<const TokenId>(h, 2), w, l);
      const double want = eval(topic_node, {h1, h2}, w, false);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("EM: monotone likelihood and parent-data fixed point") {
  SUBCASE("held-out drawn from the parent pushes the parent weight to 1") {
    Rng rng(4242);
    // parent distribution sharply peaked; the others disagree
    std::vector<double> parent_p{0.7, 0.1, 0.1, 0.05, 0.05};
    std::vector<double> lower_p{0.2, 0.2, 0.2, 0.2, 0.2};
    std::vector<double> relfreq_p{0.05, 0.05, 0.1, 0.1, 0.7};
    std::vector<EmEvent> events;
    for (int i = 0; i < 4000; ++i) {
      const double u = rng.next_double();
      double acc = 0.0;
      std::size_t w = 0;
      for (; w < parent_p.size(); ++w) {
        acc += parent_p[w];
        if (u < acc) break;
      }
      w = std::min(w, parent_p.size() - 1);
      EmEvent e;
      e.depth = 1;
      e.bucket = 3;
      e.c_parent = parent_p[w];
      e.c_lower = lower_p[w];
      e.c_relfreq = relfreq_p[w];
      events.push_back(e);
    }
    auto res = estimate_lambdas_em(events, 1, LambdaTable::uniform(1), 500, 1e-8);
    CHECK(res.converged);
    CHECK(res.lambdas.at(1, 3).parent > 0.85);
    for (std::size_t i = 1; i < res.heldout_ll.size(); ++i) {
      CHECK(res.heldout_ll[i] >= res.heldout_ll[i - 1] - 1e-9 * std::abs(res.heldout_ll[i - 1]));
    }
  }

  SUBCASE("real toy events: monotone, converged, bucket-0 rule holds") {
    auto toy = build_toy(true, 2, 0.25);
    const auto& em = toy.trained.em;
    REQUIRE(em.heldout_ll.size() >= 2);
    CHECK(em.converged);
    for (std::size_t i = 1; i < em.heldout_ll.size(); ++i) {
      CHECK(em.heldout_ll[i] >= em.heldout_ll[i - 1] - 1e-9 * std::abs(em.heldout_ll[i - 1]));
    }
    const auto& lm = toy.trained.lm;
    for (int d = 1; d <= lm.topo.max_depth; ++d) {
      CHECK(lm.em_lambda.at(d, 0).relfreq == 0.0);
      for (int b = 0; b < LambdaTable::kBuckets; ++b) {
        const auto& t = lm.em_lambda.at(d, b);
        CHECK(t.parent + t.lower + t.relfreq == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(t.parent >= 0.0);
        CHECK(t.lower >= 0.0);
        CHECK(t.relfreq >= 0.0);
      }
    }
  }
}

TEST_CASE("good-turing root: trigram level matches the dense oracle") {
  Rng rng(909);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<std::vector<TokenId>> docs;
    const std::size_t n_docs = 3 + rng.below(3);
    for (std::size_t d = 0; d < n_docs; ++d) {
      std::vector<TokenId> doc;
      const std::size_t len = 20 + rng.below(60);
      for (std::size_t i = 0; i < len; ++i) {
        const double u = rng.next_double();
        doc.push_back(static_cast<TokenId>(1 + std::min<std::size_t>(10, (std::size_t)(u * u * 11))));
      }
      docs.push_back(std::move(doc));
    }
    const std::size_t V = 12;
    NgramCounts counts(3, V);
    for (const auto& d : docs) counts.add_document(d);
    auto root = train_root(counts, 5);
    auto ora = oracle::katz_oracle(docs, V, 5);
    oracle::add_trigram_level(ora, docs, 5);
    for (TokenId w1 = 0; w1 < V; ++w1) {
      for (TokenId w2 = 0; w2 < V; ++w2) {
        for (TokenId w3 = 0; w3 < V; ++w3) {
          CHECK(root.prob_trigram(w1, w2, w3) ==
                doctest::Approx(ora.tri[w1][w2][w3]).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("beta: zero-unseen edge is flagged, root mass split reproduces beta") {
  SUBCASE("degenerate discounts give beta = 0, flagged") {
    auto corpus = tiny_corpus({{"d", "a b a b a c"}});
    NgramCounts counts(2, corpus.vocab.size());
    for (const auto& d : corpus.docs) counts.add_document(d.tokens);
    auto root = train_root(counts, 5);
    auto classes = WordClassPartition::from_stoplist(corpus.vocab, english_stoplist());
    auto mr = compute_beta(root, classes, 2);  // "a" is a function word here
    CHECK(mr.beta == doctest::Approx(0.0));
    CHECK(mr.degenerate);
  }

  SUBCASE("count-weighted mass split through node_prob at the root equals beta") {
    auto toy = build_toy(false);
    const auto& lm = toy.trained.lm;
    const auto V = static_cast<TokenId>(lm.vocab_size);
    double unseen = 0.0, seen_free = 0.0;
    for (const auto& [key, e] : lm.root.cond2) {
      const TokenId w1 = static_cast<TokenId>(key);
      const TokenId h[1] = {w1};
      const double weight = static_cast<double>(e.history_count);
      double u = 0.0, sf = 0.0;
      for (TokenId w2 = 0; w2 < V; ++w2) {
        const double p = lm.node_prob(0, std::span<const TokenId>(h, 1), w2);
        switch (lm.classify(std::span<const TokenId>(h, 1), w2)) {
          case BigramClass::kUnknown:
            u += p;
            break;
          case BigramClass::kFree:
            sf += p;
            break;
          default:
            break;
        }
      }
      unseen += weight * u;
      seen_free += weight * sf;
    }
    CHECK(unseen / seen_free == doctest::Approx(lm.beta2).epsilon(1e-6));
  }
}

namespace {

/// Fragmented corpus: topics share word sets, but each document carries its
/// own frequency ranking, so small (deep) nodes memorize document quirks.
std::vector<RawDocument> fragmented_corpus(int topics, int docs, int cw, Rng& rng) {
  const std::vector<std::string> fw = {"the", "of",  "and", "to",  "in",  "a",
                                       "is",  "was", "for", "on",  "with", "as"};
  auto zipf = [](int n) {
    std::vector<double> c(static_cast<std::size_t>(n));
    double a = 0;
    for (int r = 0; r < n; ++r) {
      a += 1.0 / (r + 1.5);
      c[static_cast<std::size_t>(r)] = a;
    }
    for (auto& v : c) v /= a;
    return c;
  };
  const auto cdf_fw = zipf(static_cast<int>(fw.size()));
  const auto cdf_cw = zipf(cw);
  auto pick = [&](const std::vector<double>& c) {
    const double u = rng.next_double();
    return static_cast<int>(std::lower_bound(c.begin(), c.end(), u) - c.begin());
  };
  std::vector<RawDocument> out;
  for (int d = 0; d < docs; ++d) {
    const int topic = d % topics;
    std::vector<int> perm(static_cast<std::size_t>(cw));
    for (int i = 0; i < cw; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    std::string text;
    const int len = 60 + static_cast<int>(rng.below(60));
    for (int i = 0; i < len; ++i) {
      if (rng.next_double() < 0.4) {
        text += fw[static_cast<std::size_t>(pick(cdf_fw))];
      } else {
        text += "t" + std::to_string(topic) + "w" +
                std::to_string(perm[static_cast<std::size_t>(pick(cdf_cw))]);
      }
      text += ' ';
    }
    out.push_back({"d" + std::to_string(d), text});
  }
  return out;
}

}  // namespace

TEST_CASE("EM lambdas by height: mid-tree favors own counts, leaves favor the parent") {
  Rng rng(3);
  auto raw = fragmented_corpus(4, 240, 20, rng);
  auto corpus = build_corpus(raw);
  auto vectors = build_term_vectors(corpus, 0.0, 4);
  ClusteringConfig cc;
  cc.alpha = 0.3;
  cc.workers = 4;
  auto tree = agglomerate(vectors, cc);
  auto obj = build_entropy_objective(tree, corpus.docs, corpus.idf);
  auto cut = optimal_cut(tree, 8, obj);
  auto classes = WordClassPartition::from_stoplist(corpus.vocab, english_stoplist());
  TrainOptions opt;
  opt.order = 2;
  opt.em_mode = true;
  opt.heldout_fraction = 0.25;
  opt.seed = 5;
  opt.workers = 4;
  auto tr = train_hierarchical_lm(corpus, vectors, tree, cut.nodes, classes, opt);
  const auto& lm = tr.lm;
  REQUIRE(lm.topo.max_depth >= 3);

  auto ratio_at_depth = [&](int depth) {
    double w = 0.0, parent = 0.0, relfreq = 0.0;
    for (int b = 0; b < LambdaTable::kBuckets; ++b) {
      const double ev = static_cast<double>(
          tr.em.group_events[static_cast<std::size_t>(depth - 1) * LambdaTable::kBuckets + b]);
      const auto& t = lm.em_lambda.at(depth, b);
      w += ev;
      parent += ev * t.parent;
      relfreq += ev * t.relfreq;
    }
    REQUIRE(w > 0.0);
    return (relfreq / w) / std::max(1e-12, parent / w);
  };
  // directional: own-counts-to-parent ratio larger in the middle of the tree
  // than at the fragmented deepest level
  CHECK(ratio_at_depth(1) > ratio_at_depth(lm.topo.max_depth));
}

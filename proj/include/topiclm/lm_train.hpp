#pragma once

/**
 * Weight estimation and the end-to-end trainer for the hierarchical LM.
 *
 * Bigram mode keeps one global weight triple, tuned by grid search over a
 * 0.05 simplex lattice against held-out likelihood. EM mode fits per
 * (depth, history-count-bucket) triples by deleted interpolation: component
 * probabilities are frozen from the current models, so each EM run is a
 * plain tied-weight mixture fit with non-decreasing held-out likelihood;
 * models are rebuilt with the converged weights afterwards.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "topiclm/common.hpp"
#include "topiclm/lm.hpp"

namespace topiclm {

// ---------------------------------------------------------------------------
// Deleted-interpolation EM
// ---------------------------------------------------------------------------

struct EmEvent {
  std::int32_t depth;
  std::int32_t bucket;
  double c_parent, c_lower, c_relfreq;  // frozen component probabilities
};

struct EmResult {
  LambdaTable lambdas;
  std::vector<double> heldout_ll;  // one entry per iteration, evaluated pre-update
  bool converged = false;          // mean-LL gain per event dropped below tol
  std::vector<std::uint64_t> group_events;  // events per (depth, bucket) row
};

/**
 * Extract one event per (held-out free-space m-gram occurrence, path node).
 * A document assigned to topic t contributes at every non-root node on the
 * root-to-t path; the history bucket comes from that node's training counts.
 * Only free-space occurrences qualify: the weights being estimated shape the
 * free space alone, and fixed- or unknown-space events would bias them (the
 * fixed space is root-tied regardless of the weights).
 */
inline std::vector<EmEvent> collect_em_events(const HierarchicalLM& lm,
                                              std::span<const NgramCounts> node_counts,
                                              std::span<const Document> heldout,
                                              std::span<const int> heldout_topic) {
  std::vector<EmEvent> events;
  const int m = lm.order;
  for (std::size_t d = 0; d < heldout.size(); ++d) {
    std::vector<int> path;
    for (int n = lm.topo.topics[heldout_topic[d]]; n > 0; n = lm.topo.nodes[n].parent) {
      path.push_back(n);
    }
    const auto& tokens = heldout[d].tokens;
    for (std::size_t i = static_cast<std::size_t>(m) - 1; i < tokens.size(); ++i) {
      const std::span<const TokenId> h(tokens.data() + i - (m - 1), static_cast<std::size_t>(m - 1));
      const TokenId w = tokens[i];
      if (lm.classify(h, w) != BigramClass::kFree) continue;
      const std::uint64_t key = pack_history(h);
      for (int n : path) {
        EmEvent e;
        e.depth = lm.topo.nodes[n].depth;
        e.bucket = LambdaTable::bucket_of(node_counts[n].history_total(m, key));
        e.c_parent = lm.node_prob(lm.topo.nodes[n].parent, h, w);
        e.c_lower = lm.node_prob(n, h.subspan(1), w);
        e.c_relfreq = node_counts[n].rel_freq(m, key, w);
        events.push_back(e);
      }
    }
  }
  return events;
}

/**
 * Tied-weight mixture EM over precomputed events. The log-likelihood is
 * recorded before each update; convergence is a relative gain below `tol`
 * (|dLL| <= tol * (1 + |LL|), the usual scale-free stopping rule) or the
 * iteration cap. Empty groups inherit the shallower depth's bucket.
 */
inline EmResult estimate_lambdas_em(std::span<const EmEvent> events, int n_depths,
                                    LambdaTable init, int max_iters = 100, double tol = 1e-6) {
  EmResult res;
  res.lambdas = std::move(init);
  if (res.lambdas.n_depths != n_depths) {
    throw UsageError("estimate_lambdas_em: init table has wrong depth range");
  }
  const std::size_t n_rows = res.lambdas.rows.size();
  res.group_events.assign(n_rows, 0);
  for (const auto& e : events) {
    ++res.group_events[static_cast<std::size_t>(e.depth - 1) * LambdaTable::kBuckets + e.bucket];
  }

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<std::array<double, 3>> acc(n_rows, {0.0, 0.0, 0.0});
    double ll = 0.0;
    std::uint64_t skipped = 0;
    for (const auto& e : events) {
      const LambdaTriple& l = res.lambdas.at(e.depth, e.bucket);
      const double p1 = l.parent * e.c_parent;
      const double p2 = l.lower * e.c_lower;
      const double p3 = e.bucket == 0 ? 0.0 : l.relfreq * e.c_relfreq;
      const double s = p1 + p2 + p3;
      if (s <= 0.0) {
        ++skipped;
        continue;
      }
      ll += std::log(s);
      auto& a = acc[static_cast<std::size_t>(e.depth - 1) * LambdaTable::kBuckets + e.bucket];
      a[0] += p1 / s;
      a[1] += p2 / s;
      a[2] += p3 / s;
    }
    if (skipped > 0) {
      diag::note("estimate_lambdas_em: " + std::to_string(skipped) +
                 " event(s) with zero mixture mass skipped");
    }
    res.heldout_ll.push_back(ll);

    // M-step
    for (int depth = 1; depth <= n_depths; ++depth) {
      for (int b = 0; b < LambdaTable::kBuckets; ++b) {
        const auto& a = acc[static_cast<std::size_t>(depth - 1) * LambdaTable::kBuckets + b];
        const double s = a[0] + a[1] + a[2];
        auto& l = res.lambdas.at(depth, b);
        if (s > 0.0) {
          l.parent = a[0] / s;
          l.lower = a[1] / s;
          l.relfreq = a[2] / s;
        } else if (depth > 1) {
          l = res.lambdas.at(depth - 1, b);  // inherit shallower depth
        }
        if (b == 0) res.lambdas.force_bucket0_rule(depth);
      }
    }

    if (iter > 0 && std::abs(ll - prev_ll) <= tol * (1.0 + std::abs(prev_ll))) {
      res.converged = true;
      break;
    }
    prev_ll = ll;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Grid search for the global bigram-mode triple
// ---------------------------------------------------------------------------

struct GridSearchResult {
  LambdaTriple best;
  double best_ll = -std::numeric_limits<double>::infinity();
  std::size_t points = 0;
};

/// Held-out log-likelihood of the assigned-topic models, longest context.
inline double heldout_loglik(const HierarchicalLM& lm, std::span<const Document> heldout,
                             std::span<const int> heldout_topic) {
  double ll = 0.0;
  for (std::size_t d = 0; d < heldout.size(); ++d) {
    const int node = lm.topo.topics[heldout_topic[d]];
    const auto& tokens = heldout[d].tokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t ctx = std::min<std::size_t>(i, static_cast<std::size_t>(lm.order - 1));
      const std::span<const TokenId> h(tokens.data() + i - ctx, ctx);
      const double p = lm.node_prob(node, h, tokens[i]);
      if (p <= 0.0) return -std::numeric_limits<double>::infinity();
      ll += std::log(p);
    }
  }
  return ll;
}

/**
 * Lattice walk over (relfreq, lower) with parent = 1 - relfreq - lower.
 * The relfreq-only corner is excluded (it can zero out unigram smoothing).
 * Rebuilds node models per point; ties keep the first point in scan order.
 */
inline GridSearchResult grid_search_lambda(HierarchicalLM& lm,
                                           std::span<const NgramCounts> node_counts,
                                           std::span<const Document> heldout,
                                           std::span<const int> heldout_topic,
                                           double step = 0.05) {
  GridSearchResult res;
  const int n = static_cast<int>(std::round(1.0 / step));
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; i + j <= n; ++j) {
      const double relfreq = static_cast<double>(i) / static_cast<double>(n);
      const double lower = static_cast<double>(j) / static_cast<double>(n);
      const double parent = static_cast<double>(n - i - j) / static_cast<double>(n);
      if (lower <= 0.0 && parent <= 0.0) continue;  // degenerate corner
      NodeBuildOptions opt;
      opt.em_mode = false;
      opt.global_lambda = LambdaTriple{parent, lower, relfreq};
      build_node_models(lm, node_counts, opt);
      const double ll = heldout_loglik(lm, heldout, heldout_topic);
      ++res.points;
      if (ll > res.best_ll) {
        res.best_ll = ll;
        res.best = opt.global_lambda;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Bigram class statistics (token-mass shares of the four seen cells)
// ---------------------------------------------------------------------------

struct BigramClassStats {
  // [w1 class][w2 class]: 0 = function word, 1 = content word
  double token_share[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  std::uint64_t seen_bigram_tokens = 0;
};

inline BigramClassStats bigram_class_stats(const NgramCounts& root_counts,
                                           const WordClassPartition& classes) {
  BigramClassStats s;
  for (const auto& [w1, succ] : root_counts.table(2)) {
    const int c1 = classes.is_function(static_cast<TokenId>(w1)) ? 0 : 1;
    for (const auto& [w2, c] : succ.counts) {
      s.token_share[c1][classes.is_function(w2) ? 0 : 1] += static_cast<double>(c);
      s.seen_bigram_tokens += c;
    }
  }
  if (s.seen_bigram_tokens > 0) {
    for (auto& row : s.token_share)
      for (auto& v : row) v = 100.0 * v / static_cast<double>(s.seen_bigram_tokens);
  }
  return s;
}

// ---------------------------------------------------------------------------
// End-to-end training
// ---------------------------------------------------------------------------

struct TrainOptions {
  int order = 2;
  int gt_max = 5;
  bool em_mode = false;           // default: bigram-mode grid search
  double heldout_fraction = 0.1;  // carved deterministically from the corpus
  double grid_step = 0.05;
  int em_max_iters = 100;
  double em_tol = 1e-6;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct TrainResult {
  HierarchicalLM lm;
  std::vector<NgramCounts> node_counts;  // transient; per collapsed node
  std::vector<int> doc_topic;            // per corpus doc; -1 when held out
  BigramClassStats class_stats;
  GridSearchResult grid;                 // bigram mode
  EmResult em;                           // EM mode
  std::size_t heldout_docs = 0;
};

/**
 * Assemble the full hierarchy from a corpus, a cluster tree and a cut.
 * `vectors` must align with `corpus.docs`.
 */
inline TrainResult train_hierarchical_lm(const Corpus& corpus, std::span<const TermVector> vectors,
                                         const ClusterTree& tree, std::span<const NodeId> cut,
                                         const WordClassPartition& classes,
                                         const TrainOptions& opt) {
  if (opt.order < 2 || opt.order > 3) throw UsageError("lm order must be 2 or 3");
  TrainResult res;
  HierarchicalLM& lm = res.lm;
  lm.order = opt.order;
  lm.em_mode = opt.em_mode;
  lm.vocab_hash = corpus.vocab.hash();
  lm.vocab_size = corpus.vocab.size();
  lm.classes = classes;
  lm.idf = corpus.idf;
  lm.topo = CollapsedTree::build(tree, cut);

  // Topic centroids and masses from the cut nodes, in topic order.
  for (int t : lm.topo.topics) {
    const auto& nd = tree.nodes[lm.topo.nodes[t].orig_id];
    lm.topic_centroids.push_back(nd.centroid);
    lm.topic_mass.push_back(nd.doc_count);
  }

  // Held-out split: seeded shuffle, last slice held out.
  std::vector<std::size_t> perm(corpus.docs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(Rng::mix64(opt.seed ^ 0x68656c646f757421ULL));
  rng.shuffle(perm);
  const std::size_t n_heldout =
      std::min(perm.size() - 1,
               static_cast<std::size_t>(std::floor(opt.heldout_fraction *
                                                   static_cast<double>(perm.size()))));
  std::vector<Document> train_docs, heldout_docs;
  std::vector<TermVector> train_vecs, heldout_vecs;
  std::vector<std::size_t> train_orig;  // original corpus index per train doc
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const bool held = i + n_heldout >= perm.size();
    const std::size_t d = perm[i];
    if (held) {
      heldout_docs.push_back(corpus.docs[d]);
      heldout_vecs.push_back(vectors[d]);
    } else {
      train_docs.push_back(corpus.docs[d]);
      train_vecs.push_back(vectors[d]);
      train_orig.push_back(d);
    }
  }
  res.heldout_docs = heldout_docs.size();

  // Phases 1-2: assignment and propagation.
  auto assignment = assign_documents(train_docs, train_vecs, lm.topic_centroids, lm.topic_mass,
                                     opt.order, lm.vocab_size, opt.workers);
  res.doc_topic.assign(corpus.docs.size(), -1);
  for (std::size_t i = 0; i < train_orig.size(); ++i) {
    res.doc_topic[train_orig[i]] = assignment.topic_of_doc[i];
  }
  res.node_counts =
      propagate_counts(lm.topo, std::move(assignment.topic_counts), opt.order, lm.vocab_size);

  // Phase 3: root Good-Turing model; partition statistics; beta.
  lm.root = train_root(res.node_counts[0], opt.gt_max);
  res.class_stats = bigram_class_stats(res.node_counts[0], classes);
  lm.beta2 = compute_beta(lm.root, classes, 2).beta;
  lm.beta3 = opt.order >= 3 ? compute_beta(lm.root, classes, 3).beta : 0.0;

  // Held-out topic assignment for weight estimation.
  auto heldout_assign = assign_documents(heldout_docs, heldout_vecs, lm.topic_centroids,
                                         lm.topic_mass, opt.order, lm.vocab_size, opt.workers);

  // Phase 4: node models + weights.
  if (!opt.em_mode) {
    if (!heldout_docs.empty()) {
      res.grid = grid_search_lambda(lm, res.node_counts, heldout_docs,
                                    heldout_assign.topic_of_doc, opt.grid_step);
      lm.global_lambda = res.grid.best;
    } else {
      diag::note("train: no held-out data; keeping default global lambdas");
      lm.global_lambda = LambdaTriple{0.4, 0.2, 0.4};
    }
    NodeBuildOptions nb;
    nb.em_mode = false;
    nb.global_lambda = lm.global_lambda;
    build_node_models(lm, res.node_counts, nb);
  } else {
    lm.em_lambda = LambdaTable::uniform(std::max(1, lm.topo.max_depth));
    NodeBuildOptions nb;
    nb.em_mode = true;
    nb.em_lambda = &lm.em_lambda;
    build_node_models(lm, res.node_counts, nb);
    if (!heldout_docs.empty()) {
      auto events = collect_em_events(lm, res.node_counts, heldout_docs,
                                      heldout_assign.topic_of_doc);
      res.em = estimate_lambdas_em(events, std::max(1, lm.topo.max_depth), lm.em_lambda,
                                   opt.em_max_iters, opt.em_tol);
      lm.em_lambda = res.em.lambdas;
      nb.em_lambda = &lm.em_lambda;
      build_node_models(lm, res.node_counts, nb);
    } else {
      diag::note("train: no held-out data; keeping uniform EM lambdas");
    }
  }
  return res;
}

}  // namespace topiclm

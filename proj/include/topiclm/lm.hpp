#pragma once

/**
 * Hierarchical topic-conditional n-gram models.
 *
 * Training pipeline:
 *   1. every document joins the cut node whose centroid it is closest to;
 *   2. counts propagate bottom-up so each node holds its subtree's counts;
 *   3. the root gets a Katz/Good-Turing model (the topic-insensitive core);
 *   4. every other node gets a smoothed model per history:
 *        - the fixed space (seen successors that are function words) is tied
 *          bit-for-bit to the root probabilities;
 *        - the free space (seen content-word successors) carries a blend of
 *          the node's relative frequency, the node's lower-order model and
 *          the parent model, scaled so the free and unknown spaces split the
 *          non-fixed mass 1 : beta;
 *        - the unknown space (never-seen successors) follows the node's
 *          lower-order model under that beta share.
 *
 * beta is the root's unseen-to-seen-free mass ratio, held fixed across the
 * tree. Blend weights are either global constants tuned by grid search
 * (bigram mode) or per (node-depth, history-count-bucket) weights fitted by
 * deleted-interpolation EM on held-out data.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "topiclm/cluster.hpp"
#include "topiclm/common.hpp"
#include "topiclm/corpus.hpp"
#include "topiclm/good_turing.hpp"
#include "topiclm/ngram.hpp"
#include "topiclm/treecut.hpp"
#include "topiclm/vocab.hpp"

namespace topiclm {

enum class BigramClass : std::uint8_t { kFixed, kFree, kUnknown };

/// Seen + function word -> Fixed, seen + content word -> Free, else Unknown.
inline BigramClass classify_bigram(TokenId w1, TokenId w2, const WordClassPartition& classes,
                                   const NgramCounts& counts) {
  if (counts.count(2, w1, w2) == 0) return BigramClass::kUnknown;
  return classes.is_function(w2) ? BigramClass::kFixed : BigramClass::kFree;
}

// ---------------------------------------------------------------------------
// Interpolation weights
// ---------------------------------------------------------------------------

struct LambdaTriple {
  double parent = 1.0 / 3.0;   // parent-node same-order model
  double lower = 1.0 / 3.0;    // same-node lower-order model
  double relfreq = 1.0 / 3.0;  // same-node relative frequency

  void normalize() {
    const double s = parent + lower + relfreq;
    if (s <= 0.0) {
      parent = lower = relfreq = 1.0 / 3.0;
      return;
    }
    parent /= s;
    lower /= s;
    relfreq /= s;
  }
};

/// Per (node-depth, history-count-bucket) weights. Bucket 0 holds unseen
/// histories: its relfreq weight is identically 0 and the remaining two
/// weights renormalize, which is how the missing-history rule is realized.
struct LambdaTable {
  static constexpr int kBuckets = 7;  // {0, 1, 2, 3-5, 6-10, 11-50, 51+}
  int n_depths = 0;                   // rows cover depths 1..n_depths
  std::vector<LambdaTriple> rows;

  static int bucket_of(std::uint64_t c) {
    if (c == 0) return 0;
    if (c == 1) return 1;
    if (c == 2) return 2;
    if (c <= 5) return 3;
    if (c <= 10) return 4;
    if (c <= 50) return 5;
    return 6;
  }

  static LambdaTable uniform(int n_depths) {
    LambdaTable t;
    t.n_depths = n_depths;
    t.rows.assign(static_cast<std::size_t>(n_depths) * kBuckets, LambdaTriple{});
    for (int d = 1; d <= n_depths; ++d) t.force_bucket0_rule(d);
    return t;
  }

  const LambdaTriple& at(int depth, int bucket) const {
    return rows.at(static_cast<std::size_t>(depth - 1) * kBuckets + bucket);
  }
  LambdaTriple& at(int depth, int bucket) {
    return rows.at(static_cast<std::size_t>(depth - 1) * kBuckets + bucket);
  }

  void force_bucket0_rule(int depth) {
    auto& l = at(depth, 0);
    const double s = l.parent + l.lower;
    l.relfreq = 0.0;
    if (s <= 0.0) {
      l.parent = l.lower = 0.5;
    } else {
      l.parent /= s;
      l.lower /= s;
    }
  }
};

// ---------------------------------------------------------------------------
// Collapsed topology: root + internal nodes on root-to-cut paths + cut nodes
// ---------------------------------------------------------------------------

struct CollapsedNode {
  NodeId orig_id = kNoNode;
  int parent = -1;  // collapsed index; -1 for the root
  std::vector<int> children;
  int depth = 0;
  bool is_topic = false;  // member of the cut
};

struct CollapsedTree {
  std::vector<CollapsedNode> nodes;  // BFS order: parents precede children
  std::vector<int> topics;           // collapsed indices of cut nodes
  int max_depth = 0;

  static CollapsedTree build(const ClusterTree& tree, std::span<const NodeId> cut) {
    if (!is_valid_cut(tree, cut)) throw UsageError("cut is not a covering antichain");
    CollapsedTree out;
    std::map<NodeId, bool> needed;  // orig id -> is_topic
    for (NodeId c : cut) {
      needed[c] = true;
      for (NodeId n = tree.nodes[c].parent; n != kNoNode; n = tree.nodes[n].parent) {
        needed.emplace(n, false);
      }
    }
    std::map<NodeId, int> index_of;
    std::vector<NodeId> frontier{tree.root};
    while (!frontier.empty()) {
      std::vector<NodeId> next;
      for (NodeId id : frontier) {
        CollapsedNode cn;
        cn.orig_id = id;
        cn.is_topic = needed.at(id);
        const NodeId p = tree.nodes[id].parent;
        if (p != kNoNode && needed.count(p)) {
          cn.parent = index_of.at(p);
          cn.depth = out.nodes[cn.parent].depth + 1;
        }
        index_of[id] = static_cast<int>(out.nodes.size());
        if (cn.parent >= 0) out.nodes[cn.parent].children.push_back(static_cast<int>(out.nodes.size()));
        out.max_depth = std::max(out.max_depth, cn.depth);
        out.nodes.push_back(std::move(cn));
        if (!out.nodes.back().is_topic) {
          const auto& t = tree.nodes[id];
          for (NodeId ch : {t.left, t.right}) {
            if (ch != kNoNode && needed.count(ch)) next.push_back(ch);
          }
        }
      }
      std::sort(next.begin(), next.end());
      frontier = std::move(next);
    }
    for (std::size_t i = 0; i < out.nodes.size(); ++i) {
      if (out.nodes[i].is_topic) out.topics.push_back(static_cast<int>(i));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Document assignment and count propagation
// ---------------------------------------------------------------------------

struct DocAssignment {
  std::vector<int> topic_of_doc;          // per document: topic index 0..K-1
  std::vector<NgramCounts> topic_counts;  // per topic
};

/**
 * Argmax-cosine assignment of documents to cut-node centroids. Ties go to the
 * lowest topic index (topics are ordered by original node id); documents with
 * zero-norm vectors fall to the largest-mass topic and are counted.
 */
inline DocAssignment assign_documents(std::span<const Document> docs,
                                      std::span<const TermVector> vectors,
                                      std::span<const TermVector> topic_centroids,
                                      std::span<const std::uint32_t> topic_mass, int order,
                                      std::size_t vocab_size, int workers = 1) {
  const std::size_t k = topic_centroids.size();
  if (k == 0) throw UsageError("assign_documents: no topics");
  int largest = 0;
  for (std::size_t t = 1; t < k; ++t) {
    if (topic_mass[t] > topic_mass[largest]) largest = static_cast<int>(t);
  }
  DocAssignment out;
  out.topic_of_doc.assign(docs.size(), 0);
  std::vector<std::uint8_t> degenerate(docs.size(), 0);
  parallel_for(docs.size(), workers, [&](std::size_t i) {
    if (vectors[i].is_zero()) {
      out.topic_of_doc[i] = largest;
      degenerate[i] = 1;
      return;
    }
    int best = 0;
    double best_sim = -1.0;
    for (std::size_t t = 0; t < k; ++t) {
      const double s = cosine_similarity(vectors[i], topic_centroids[t]);
      if (s > best_sim) {
        best_sim = s;
        best = static_cast<int>(t);
      }
    }
    out.topic_of_doc[i] = best;
  });
  std::uint64_t n_degenerate = 0;
  for (auto d : degenerate) n_degenerate += d;
  if (n_degenerate > 0) {
    diag::note("assign_documents: " + std::to_string(n_degenerate) +
               " zero-norm document(s) assigned to the largest topic");
  }
  out.topic_counts.assign(k, NgramCounts(order, vocab_size));
  for (std::size_t i = 0; i < docs.size(); ++i) {
    out.topic_counts[out.topic_of_doc[i]].add_document(docs[i].tokens);
  }
  return out;
}

/// Counts at every collapsed node: topics own their assigned documents,
/// ancestors accumulate their children.
inline std::vector<NgramCounts> propagate_counts(const CollapsedTree& topo,
                                                 std::vector<NgramCounts> topic_counts, int order,
                                                 std::size_t vocab_size) {
  std::vector<NgramCounts> node_counts(topo.nodes.size(), NgramCounts(order, vocab_size));
  for (std::size_t t = 0; t < topo.topics.size(); ++t) {
    node_counts[topo.topics[t]] = std::move(topic_counts[t]);
  }
  // children have larger BFS indices; sweep bottom-up
  for (std::size_t i = topo.nodes.size(); i-- > 0;) {
    const int p = topo.nodes[i].parent;
    if (p >= 0) node_counts[p].add(node_counts[i]);
  }
  return node_counts;
}

// ---------------------------------------------------------------------------
// beta: unseen-to-seen-free mass ratio at the root
// ---------------------------------------------------------------------------

struct MassRatio {
  double beta = 0.0;
  bool degenerate = false;  // no unseen mass anywhere (beta == 0 edge)
};

/// Count-weighted root ratio at the given order (2 or 3).
inline MassRatio compute_beta(const RootModel& root, const WordClassPartition& classes, int order) {
  const auto& table = order == 2 ? root.cond2 : root.cond3;
  double unseen = 0.0, seen_free = 0.0;
  for (const auto& [key, e] : table) {
    const double w = static_cast<double>(e.history_count);
    unseen += w * e.unseen_mass;
    double sf = 0.0;
    for (const auto& [tok, p] : e.probs) {
      if (!classes.is_function(tok)) sf += p;
    }
    seen_free += w * sf;
  }
  if (seen_free <= 0.0) {
    throw DataError("compute_beta: no seen free-space mass (degenerate partition)");
  }
  MassRatio r;
  r.beta = unseen / seen_free;
  if (r.beta <= 0.0) {
    r.degenerate = true;
    diag::note("compute_beta: zero unseen mass, beta = 0 edge");
  }
  return r;
}

// ---------------------------------------------------------------------------
// The trained model
// ---------------------------------------------------------------------------

struct NodeCondTable {
  double alpha_scale = 0.0;  // unknown-space multiplier on the lower-order model
  std::vector<std::pair<TokenId, double>> free_probs;  // sorted by token id
};

struct NodeModel {
  std::vector<double> unigram;
  std::map<std::uint64_t, NodeCondTable> cond2;
  std::map<std::uint64_t, NodeCondTable> cond3;

  const NodeCondTable* entry(int o, std::uint64_t key) const {
    const auto& t = o == 2 ? cond2 : cond3;
    auto it = t.find(key);
    return it == t.end() ? nullptr : &it->second;
  }
};

class HierarchicalLM {
 public:
  int order = 2;
  bool em_mode = false;
  double beta2 = 0.0;  // bigram-level mass ratio
  double beta3 = 0.0;  // trigram-level mass ratio (order 3 only)
  LambdaTriple global_lambda;  // bigram mode
  LambdaTable em_lambda;       // EM mode
  std::uint64_t vocab_hash = 0;
  std::size_t vocab_size = 0;
  WordClassPartition classes;
  std::vector<double> idf;
  RootModel root;
  CollapsedTree topo;
  std::vector<NodeModel> nodes;            // by collapsed index; [0] delegates to root
  std::vector<TermVector> topic_centroids; // parallel to topo.topics
  std::vector<std::uint32_t> topic_mass;   // training doc counts per topic

  std::size_t n_topics() const { return topo.topics.size(); }

  double beta_for(int o) const { return o == 2 ? beta2 : beta3; }

  /// Class of the longest-context event (history, w); kUnknown when no
  /// context is available.
  BigramClass classify(std::span<const TokenId> history, TokenId w) const {
    const int o = effective_order(history);
    if (o < 2) return BigramClass::kUnknown;
    const std::uint64_t key = pack_history(history.subspan(history.size() - (o - 1)));
    if (!root.seen(o, key, w)) return BigramClass::kUnknown;
    return classes.is_function(w) ? BigramClass::kFixed : BigramClass::kFree;
  }

  int effective_order(std::span<const TokenId> history) const {
    return std::min<int>(order, static_cast<int>(history.size()) + 1);
  }

  /// Smoothed probability at a collapsed node (0 = root). Defined after
  /// node_prob_lookup below.
  double node_prob(int idx, std::span<const TokenId> history, TokenId w) const;

  double topic_prob(int topic, std::span<const TokenId> history, TokenId w) const {
    return node_prob(topo.topics[topic], history, w);
  }
};

/**
 * Probability lookup against a node model (also usable mid-construction,
 * where `nm` may belong to a partially built hierarchy). Fixed-space words
 * return the root's stored value verbatim; unknown-space words scale the
 * node's lower-order probability; histories unseen at the root at this order
 * fall to the node's lower order.
 */
inline double node_prob_lookup(const HierarchicalLM& lm, const NodeModel& nm, int o,
                               std::span<const TokenId> history, TokenId w) {
  if (o <= 1) return nm.unigram[w];
  const auto h = history.subspan(history.size() - (o - 1));
  const std::uint64_t key = pack_history(h);
  const NodeCondTable* t = nm.entry(o, key);
  if (!t) return node_prob_lookup(lm, nm, o - 1, history, w);
  const RootModel::CondEntry* re = lm.root.entry(o, key);
  bool seen = false;
  const double root_p = RootModel::lookup(*re, w, &seen);
  if (seen) {
    if (lm.classes.is_function(w)) return root_p;  // fixed space, root verbatim
    auto it = std::lower_bound(t->free_probs.begin(), t->free_probs.end(), w,
                               [](const auto& p, TokenId id) { return p.first < id; });
    if (it == t->free_probs.end() || it->first != w) {
      throw Error("node model: free-space entry missing");
    }
    return it->second;
  }
  return t->alpha_scale * node_prob_lookup(lm, nm, o - 1, history, w);
}

inline double HierarchicalLM::node_prob(int idx, std::span<const TokenId> history,
                                        TokenId w) const {
  if (idx == 0) return root.prob(history, w);
  return node_prob_lookup(*this, nodes[idx], effective_order(history), history, w);
}

// ---------------------------------------------------------------------------
// Three-way interpolation (plain recursion, exposed for reuse)
// ---------------------------------------------------------------------------

/**
 * P_n(w | h) = l.parent * P_parent(w|h) + l.lower * P_n(w|suffix(h))
 *            + l.relfreq * f_n(w|h), grounded at order 0 by uniform 1/|V|.
 * At the root the parent term is dropped and its weight redistributes over
 * the other two; for histories unseen at the node the relfreq term drops the
 * same way.
 */
inline double interpolate_ngram(const HierarchicalLM& lm,
                                std::span<const NgramCounts> node_counts, int idx,
                                std::span<const TokenId> history, TokenId w,
                                const LambdaTriple& l) {
  LambdaTriple lam = l;
  const bool at_root = idx == 0;
  if (at_root) {
    const double s = lam.lower + lam.relfreq;
    if (s > 0.0) {
      lam.lower += lam.parent * lam.lower / s;
      lam.relfreq += lam.parent * lam.relfreq / s;
    } else {
      lam.lower = lam.relfreq = 0.5;
    }
    lam.parent = 0.0;
  }
  const int o = static_cast<int>(history.size()) + 1;
  double f = 0.0;
  bool have_hist = true;
  if (o == 1) {
    const auto& counts = node_counts[idx];
    f = counts.total_tokens() > 0
            ? static_cast<double>(counts.unigram()[w]) / static_cast<double>(counts.total_tokens())
            : 0.0;
    have_hist = counts.total_tokens() > 0;
  } else {
    const std::uint64_t key = pack_history(history);
    have_hist = node_counts[idx].history_total(o, key) > 0;
    f = node_counts[idx].rel_freq(o, key, w);
  }
  if (!have_hist) {
    const double s = lam.parent + lam.lower;
    if (s > 0.0) {
      lam.parent += lam.relfreq * lam.parent / s;
      lam.lower += lam.relfreq * lam.lower / s;
    } else {
      lam.parent = at_root ? 0.0 : 1.0;
      lam.lower = at_root ? 1.0 : 0.0;
    }
    lam.relfreq = 0.0;
  }
  const double p_lower =
      o == 1 ? 1.0 / static_cast<double>(lm.vocab_size)
             : interpolate_ngram(lm, node_counts, idx, history.subspan(1), w, l);
  const double p_parent =
      at_root ? 0.0
              : interpolate_ngram(lm, node_counts, lm.topo.nodes[idx].parent, history, w, l);
  return lam.parent * p_parent + lam.lower * p_lower + lam.relfreq * f;
}

// ---------------------------------------------------------------------------
// Node model construction
// ---------------------------------------------------------------------------

namespace detail {

/// Shared free/unknown mass bookkeeping for one history at one node.
struct HistoryBudget {
  double fixed_root_mass = 0.0;  // sum of root probs over fixed successors
  double free_target = 0.0;      // mass the free space must carry
  double unknown_target = 0.0;   // mass the unknown space must carry
  double seen_lower_mass = 0.0;  // node lower-order mass over seen successors
};

inline HistoryBudget history_budget(const RootModel::CondEntry& re,
                                    const WordClassPartition& classes, double beta,
                                    const std::function<double(TokenId)>& node_lower,
                                    bool any_free) {
  HistoryBudget b;
  for (const auto& [w, p] : re.probs) {
    if (classes.is_function(w)) b.fixed_root_mass += p;
    b.seen_lower_mass += node_lower(w);
  }
  const double m = std::max(0.0, 1.0 - b.fixed_root_mass);
  const double unk_lower = 1.0 - b.seen_lower_mass;
  const bool any_unknown = unk_lower > 1e-15;
  if (any_free && any_unknown) {
    b.free_target = m / (1.0 + beta);
    b.unknown_target = m * beta / (1.0 + beta);
  } else if (any_free) {
    b.free_target = m;
  } else if (any_unknown) {
    b.unknown_target = m;
  }
  return b;
}

}  // namespace detail

struct NodeBuildOptions {
  bool em_mode = false;
  LambdaTriple global_lambda;  // bigram mode
  const LambdaTable* em_lambda = nullptr;
};

/**
 * Build all non-root node models, parents before children.
 * `node_counts` are the propagated per-node counts.
 */
inline void build_node_models(HierarchicalLM& lm, std::span<const NgramCounts> node_counts,
                              const NodeBuildOptions& opt) {
  const std::size_t n_nodes = lm.topo.nodes.size();
  lm.nodes.assign(n_nodes, NodeModel{});
  lm.nodes[0].unigram = lm.root.unigram;  // root passthrough for order 1
  const double uniform = 1.0 / static_cast<double>(lm.vocab_size);

  std::uint64_t flat_free_histories = 0;

  for (std::size_t idx = 1; idx < n_nodes; ++idx) {
    const auto& cn = lm.topo.nodes[idx];
    const NodeModel& parent = lm.nodes[cn.parent];
    NodeModel& nm = lm.nodes[idx];
    const NgramCounts& counts = node_counts[idx];

    // ---- order 1: three-way blend of relfreq, uniform and parent ----
    LambdaTriple l1 = opt.global_lambda;
    if (opt.em_mode) {
      l1 = opt.em_lambda->at(cn.depth, LambdaTable::bucket_of(counts.total_tokens()));
    }
    nm.unigram.assign(lm.vocab_size, 0.0);
    const double total = static_cast<double>(counts.total_tokens());
    for (std::size_t w = 0; w < lm.vocab_size; ++w) {
      const double f = total > 0.0 ? static_cast<double>(counts.unigram()[w]) / total : 0.0;
      nm.unigram[w] =
          l1.relfreq * f + l1.lower * uniform + l1.parent * parent.unigram[w];
    }

    // ---- orders 2..m ----
    for (int o = 2; o <= lm.order; ++o) {
      const auto& root_table = o == 2 ? lm.root.cond2 : lm.root.cond3;
      auto& out = o == 2 ? nm.cond2 : nm.cond3;
      const double beta = lm.beta_for(o);

      for (const auto& [key, re] : root_table) {
        auto node_lower = [&](TokenId w) -> double {
          if (o == 2) return nm.unigram[w];
          // suffix of a packed 2-token history is its low word
          const TokenId w2 = static_cast<TokenId>(key & 0xffffffffULL);
          const TokenId h[1] = {w2};
          return node_prob_lookup(lm, nm, 2, h, w);
        };
        auto parent_prob = [&](TokenId w) -> double {
          if (cn.parent == 0) {
            if (o == 2) return lm.root.prob_bigram(static_cast<TokenId>(key), w);
            const TokenId w1 = static_cast<TokenId>((key >> 32) - 1);
            const TokenId w2 = static_cast<TokenId>(key & 0xffffffffULL);
            return lm.root.prob_trigram(w1, w2, w);
          }
          const TokenId h2[2] = {static_cast<TokenId>((key >> 32) - 1),
                                 static_cast<TokenId>(key & 0xffffffffULL)};
          const TokenId h1[1] = {static_cast<TokenId>(key)};
          return o == 2 ? node_prob_lookup(lm, parent, 2, std::span<const TokenId>(h1), w)
                        : node_prob_lookup(lm, parent, 3, std::span<const TokenId>(h2), w);
        };

        std::vector<TokenId> free_set;
        for (const auto& [w, p] : re.probs) {
          if (!lm.classes.is_function(w)) free_set.push_back(w);
        }
        const auto budget =
            detail::history_budget(re, lm.classes, beta, node_lower, !free_set.empty());

        NodeCondTable tbl;
        const double unk_lower_mass = 1.0 - budget.seen_lower_mass;
        tbl.alpha_scale =
            budget.unknown_target > 0.0 && unk_lower_mass > 1e-15
                ? budget.unknown_target / unk_lower_mass
                : 0.0;

        if (!free_set.empty() && budget.free_target > 0.0) {
          const std::uint64_t hist_count = counts.history_total(o, key);
          std::vector<double> score(free_set.size(), 0.0);
          if (!opt.em_mode) {
            // Blend of relfreq (gamma-scaled), lower-order and parent. gamma
            // rescales the node's free relative frequency to free-mass units.
            double free_relfreq_mass = 0.0, fixed_relfreq_mass = 0.0;
            if (hist_count > 0) {
              for (const auto& [w, c] : counts.table(o).at(key).counts) {
                const double f = static_cast<double>(c) / static_cast<double>(hist_count);
                if (lm.classes.is_function(w)) {
                  fixed_relfreq_mass += f;
                } else {
                  free_relfreq_mass += f;
                }
              }
            }
            if (hist_count > 0 && free_relfreq_mass > 0.0) {
              const double gamma =
                  (1.0 - fixed_relfreq_mass) / ((1.0 + beta) * free_relfreq_mass);
              for (std::size_t i = 0; i < free_set.size(); ++i) {
                const TokenId w = free_set[i];
                score[i] = opt.global_lambda.relfreq * gamma * counts.rel_freq(o, key, w) +
                           opt.global_lambda.lower * node_lower(w) +
                           opt.global_lambda.parent * parent_prob(w);
              }
            } else {
              // history absent at this node: two-way blend, weights renormalized
              const double s = opt.global_lambda.lower + opt.global_lambda.parent;
              const double mix = s > 0.0 ? opt.global_lambda.lower / s : 0.5;
              for (std::size_t i = 0; i < free_set.size(); ++i) {
                const TokenId w = free_set[i];
                score[i] = mix * node_lower(w) + (1.0 - mix) * parent_prob(w);
              }
            }
          } else {
            const std::uint64_t c = counts.history_total(o, key);
            const LambdaTriple& lg = opt.em_lambda->at(cn.depth, LambdaTable::bucket_of(c));
            for (std::size_t i = 0; i < free_set.size(); ++i) {
              const TokenId w = free_set[i];
              score[i] = lg.parent * parent_prob(w) + lg.lower * node_lower(w) +
                         lg.relfreq * counts.rel_freq(o, key, w);
            }
          }
          double sum = 0.0;
          for (double s : score) sum += s;
          tbl.free_probs.reserve(free_set.size());
          if (sum <= 0.0) {
            ++flat_free_histories;
            const double p = budget.free_target / static_cast<double>(free_set.size());
            for (TokenId w : free_set) tbl.free_probs.emplace_back(w, p);
          } else {
            for (std::size_t i = 0; i < free_set.size(); ++i) {
              tbl.free_probs.emplace_back(free_set[i], budget.free_target * score[i] / sum);
            }
          }
        }
        out.emplace(key, std::move(tbl));
      }
    }
  }
  if (flat_free_histories > 0) {
    diag::note("build_node_models: " + std::to_string(flat_free_histories) +
               " free-space histories had zero blend mass; spread uniformly");
  }
}

}  // namespace topiclm

#pragma once

/**
 * Entropy-optimal tree cuts.
 *
 * A cut is an antichain of tree nodes covering every leaf; its nodes act as
 * the topics. The objective is the conditional entropy of a word set W given
 * the cut, evaluated from per-node TF-IDF word masses:
 *
 *     H(W | cut) = sum over cut nodes C of  -(1/T) * sum_{w in W∩C} c(w,C) ln P(w|C)
 *     P(w|C) = c(w,C) / sum_{w' in W∩C} c(w',C)
 *
 * with T the total W-mass of the corpus. Masses are additive up the tree, so
 * contributions are computed once per node bottom-up. The optimal K-cut comes
 * from the two-child knapsack recurrence
 *
 *     g(n,1) = contribution(n)
 *     g(n,k) = min over kl+kr=k, kl,kr>=1 of g(left,kl) + g(right,kr)
 *
 * and brute_force_cut enumerates every antichain as an independent check.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "topiclm/cluster.hpp"
#include "topiclm/common.hpp"
#include "topiclm/corpus.hpp"

namespace topiclm {

/// Per-node objective values; `contribution[n]` is the node's additive term.
struct EntropyObjective {
  std::vector<double> contribution;  // indexed by node id
  std::vector<double> node_mass;     // total W-mass per node
  double total_mass = 0.0;           // T

  double contribution_of(NodeId n) const { return contribution.at(n); }
};

using SparseMass = std::vector<std::pair<TokenId, double>>;  // sorted by token id

namespace detail {

inline SparseMass merge_masses(const SparseMass& a, const SparseMass& b) {
  SparseMass out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j >= b.size() || (i < a.size() && a[i].first < b[j].first)) {
      out.push_back(a[i++]);
    } else if (i >= a.size() || b[j].first < a[i].first) {
      out.push_back(b[j++]);
    } else {
      out.emplace_back(a[i].first, a[i].second + b[j].second);
      ++i;
      ++j;
    }
  }
  return out;
}

/// Sum of m * ln(m / node_total) over the node's masses; 0 for empty nodes.
inline double raw_entropy_term(const SparseMass& mass, double node_total) {
  if (node_total <= 0.0) return 0.0;
  double acc = 0.0;
  for (const auto& [w, m] : mass) {
    if (m > 0.0) acc += m * std::log(m / node_total);
  }
  return acc;
}

}  // namespace detail

/**
 * Build the objective from per-leaf sparse word masses (leaf id -> mass over
 * W). Internal masses are children sums; children always carry smaller ids
 * than their parent, so one forward sweep suffices, and a child's map is
 * released as soon as its parent has consumed it. The 1/T division is applied
 * at the end once the corpus total is known. Nodes whose total mass falls
 * below `mass_floor` contribute 0 (their conditional is unreliable or
 * undefined).
 */
inline EntropyObjective build_entropy_objective_from_leaf_masses(
    const ClusterTree& tree, std::vector<SparseMass> leaf_mass, double mass_floor = 1.0) {
  EntropyObjective obj;
  const std::size_t n_nodes = tree.nodes.size();
  obj.contribution.assign(n_nodes, 0.0);
  obj.node_mass.assign(n_nodes, 0.0);

  std::vector<double> raw(n_nodes, 0.0);
  std::vector<SparseMass> mass(n_nodes);
  for (NodeId i = 0; i < tree.leaf_count; ++i) mass[i] = std::move(leaf_mass.at(i));

  for (NodeId i = 0; i < static_cast<NodeId>(n_nodes); ++i) {
    const auto& nd = tree.nodes[i];
    if (!nd.is_leaf()) {
      mass[i] = detail::merge_masses(mass[nd.left], mass[nd.right]);
      mass[nd.left] = SparseMass{};
      mass[nd.right] = SparseMass{};
    }
    double node_total = 0.0;
    for (const auto& [w, m] : mass[i]) node_total += m;
    obj.node_mass[i] = node_total;
    raw[i] = node_total >= mass_floor ? detail::raw_entropy_term(mass[i], node_total) : 0.0;
  }
  obj.total_mass = obj.node_mass[tree.root];
  if (obj.total_mass <= 0.0) throw DataError("entropy objective: corpus has zero word mass");
  for (std::size_t i = 0; i < n_nodes; ++i) obj.contribution[i] = -raw[i] / obj.total_mass;
  return obj;
}

/// W restricted to `word_set` when present, else the full vocabulary.
inline EntropyObjective build_entropy_objective(
    const ClusterTree& tree, std::span<const Document> docs, std::span<const double> idf,
    const std::optional<std::unordered_set<TokenId>>& word_set = std::nullopt,
    double mass_floor = 1.0) {
  std::vector<SparseMass> leaf_mass(tree.leaf_count);
  for (NodeId i = 0; i < tree.leaf_count; ++i) {
    const auto& leaf = tree.nodes[i];
    SparseMass acc;
    for (DocId d : leaf.docs) {
      std::map<TokenId, std::uint32_t> tf;
      for (TokenId t : docs[d].tokens) {
        if (!word_set || word_set->count(t)) ++tf[t];
      }
      SparseMass m;
      m.reserve(tf.size());
      for (const auto& [t, count] : tf) {
        const double w = static_cast<double>(count) * idf[t];
        if (w > 0.0) m.emplace_back(t, w);
      }
      acc = detail::merge_masses(acc, m);
    }
    leaf_mass[i] = std::move(acc);
  }
  return build_entropy_objective_from_leaf_masses(tree, std::move(leaf_mass), mass_floor);
}

struct TreeCut {
  std::vector<NodeId> nodes;  // ascending
  double objective = 0.0;

  std::size_t k() const { return nodes.size(); }
};

/// Antichain + full-cover check.
inline bool is_valid_cut(const ClusterTree& tree, std::span<const NodeId> cut_nodes) {
  std::unordered_set<NodeId> cut(cut_nodes.begin(), cut_nodes.end());
  if (cut.size() != cut_nodes.size()) return false;
  // Every leaf must have exactly one ancestor-or-self in the cut.
  for (NodeId leaf = 0; leaf < tree.leaf_count; ++leaf) {
    int hits = 0;
    for (NodeId n = leaf; n != kNoNode; n = tree.nodes[n].parent) {
      if (cut.count(n)) ++hits;
    }
    if (hits != 1) return false;
  }
  return true;
}

inline double conditional_entropy(std::span<const NodeId> cut_nodes, const EntropyObjective& obj) {
  double h = 0.0;
  for (NodeId n : cut_nodes) h += obj.contribution_of(n);
  return h;
}

/// Per-cluster entropy term; 0 for nodes with no W-mass.
inline double node_entropy_contribution(NodeId node, const EntropyObjective& obj) {
  return obj.contribution_of(node);
}

/**
 * DP over the binary tree: exact minimizer over all valid K-cuts.
 */
inline TreeCut optimal_cut(const ClusterTree& tree, std::size_t K, const EntropyObjective& obj) {
  if (K < 1) throw UsageError("cut size K must be >= 1");
  if (K > tree.leaf_count) {
    throw UsageError("cut size K=" + std::to_string(K) + " exceeds leaf count " +
                     std::to_string(tree.leaf_count));
  }
  const std::size_t n_nodes = tree.nodes.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<std::uint32_t> leaves(n_nodes, 0);
  for (NodeId i = 0; i < static_cast<NodeId>(n_nodes); ++i) {
    const auto& nd = tree.nodes[i];
    leaves[i] = nd.is_leaf() ? 1 : leaves[nd.left] + leaves[nd.right];
  }

  // g[n][k-1]: minimal objective with exactly k cut nodes in n's subtree.
  std::vector<std::vector<double>> g(n_nodes);
  std::vector<std::vector<std::uint32_t>> split(n_nodes);  // backpointer: k_left
  for (NodeId i = 0; i < static_cast<NodeId>(n_nodes); ++i) {
    const auto& nd = tree.nodes[i];
    const std::size_t cap = std::min<std::size_t>(K, leaves[i]);
    g[i].assign(cap, kInf);
    split[i].assign(cap, 0);
    g[i][0] = obj.contribution_of(i);
    if (nd.is_leaf()) continue;
    const auto& gl = g[nd.left];
    const auto& gr = g[nd.right];
    for (std::size_t k = 2; k <= cap; ++k) {
      double best = kInf;
      std::uint32_t best_kl = 0;
      const std::size_t kl_max = std::min(gl.size(), k - 1);
      for (std::size_t kl = 1; kl <= kl_max; ++kl) {
        const std::size_t kr = k - kl;
        if (kr > gr.size()) continue;
        const double cand = gl[kl - 1] + gr[kr - 1];
        if (cand < best) {
          best = cand;
          best_kl = static_cast<std::uint32_t>(kl);
        }
      }
      g[i][k - 1] = best;
      split[i][k - 1] = best_kl;
    }
  }

  TreeCut cut;
  // Reconstruct by walking the backpointers.
  std::vector<std::pair<NodeId, std::size_t>> stack{{tree.root, K}};
  while (!stack.empty()) {
    const auto [n, k] = stack.back();
    stack.pop_back();
    if (k == 1) {
      cut.nodes.push_back(n);
      continue;
    }
    const auto& nd = tree.nodes[n];
    const std::size_t kl = split[n][k - 1];
    stack.emplace_back(nd.left, kl);
    stack.emplace_back(nd.right, k - kl);
  }
  std::sort(cut.nodes.begin(), cut.nodes.end());
  // Report the canonical sum over the sorted cut; the DP's nested partial
  // sums can differ from it in the last ulp.
  cut.objective = conditional_entropy(cut.nodes, obj);
  return cut;
}

/**
 * Exhaustive K-antichain enumeration; the independent optimality oracle.
 * Guarded to trees with at most 20 leaves.
 */
inline TreeCut brute_force_cut(const ClusterTree& tree, std::size_t K, const EntropyObjective& obj) {
  if (tree.leaf_count > 20) throw UsageError("brute_force_cut is limited to trees with <= 20 leaves");
  if (K < 1 || K > tree.leaf_count) throw UsageError("infeasible cut size K");

  // cuts[n][k]: all k-node antichain covers of n's subtree.
  const std::size_t n_nodes = tree.nodes.size();
  std::vector<std::vector<std::vector<std::vector<NodeId>>>> cuts(n_nodes);
  for (NodeId i = 0; i < static_cast<NodeId>(n_nodes); ++i) {
    const auto& nd = tree.nodes[i];
    auto& mine = cuts[i];
    mine.resize(K + 1);
    mine[1].push_back({i});
    if (nd.is_leaf()) continue;
    for (std::size_t k = 2; k <= K; ++k) {
      for (std::size_t kl = 1; kl < k; ++kl) {
        const std::size_t kr = k - kl;
        if (kl >= cuts[nd.left].size() || kr >= cuts[nd.right].size()) continue;
        for (const auto& lc : cuts[nd.left][kl]) {
          for (const auto& rc : cuts[nd.right][kr]) {
            std::vector<NodeId> combo = lc;
            combo.insert(combo.end(), rc.begin(), rc.end());
            mine[k].push_back(std::move(combo));
          }
        }
      }
    }
  }

  const auto& candidates = cuts[tree.root][K];
  if (candidates.empty()) throw Error("brute_force_cut: no antichain found");
  TreeCut best;
  best.objective = std::numeric_limits<double>::infinity();
  for (const auto& cand : candidates) {
    std::vector<NodeId> sorted = cand;
    std::sort(sorted.begin(), sorted.end());
    const double h = conditional_entropy(sorted, obj);  // canonical order
    if (h < best.objective) {
      best.objective = h;
      best.nodes = std::move(sorted);
    }
  }
  return best;
}

}  // namespace topiclm

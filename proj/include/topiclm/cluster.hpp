#pragma once

/**
 * Hierarchical agglomerative clustering over document term vectors.
 *
 * Inter-cluster similarity, average linkage:
 *     d(C1,C2) = <c(C1),c(C2)> / (N(C1)^alpha ||c(C1)||  *  N(C2)^alpha ||c(C2)||)
 * where c(C) is the unnormalized centroid sum and N(C) the document count.
 * The alpha exponent damps the pull of large clusters. Maximum linkage
 * replaces the centroid cosine with the best cross-cluster document cosine,
 * divided by the same (N1*N2)^alpha factor.
 *
 * The merge loop keeps pairwise statistics incrementally (centroid dots and
 * best-pair cosines are both additive under merges) and drives selection
 * from a max-heap with lazy invalidation, so a full run is O(n^2 log n).
 * Ties break toward the lexicographically smallest (id1, id2) pair, which
 * makes the merge history a pure function of the inputs.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "topiclm/common.hpp"
#include "topiclm/term_vector.hpp"

namespace topiclm {

enum class Linkage { kAverage, kMaximum };

inline const char* linkage_name(Linkage l) {
  return l == Linkage::kAverage ? "average" : "maximum";
}

inline Linkage linkage_from_name(std::string_view name) {
  if (name == "average") return Linkage::kAverage;
  if (name == "maximum") return Linkage::kMaximum;
  throw UsageError("unknown linkage '" + std::string(name) + "' (expected average|maximum)");
}

struct ClusteringConfig {
  Linkage linkage = Linkage::kAverage;
  double alpha = 0.0;    // cluster-size normalization exponent, [0, 1]
  double epsilon = 0.0;  // vector smoothing, forwarded to vector construction
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw UsageError("alpha must lie in [0, 1]");
    if (epsilon < 0.0) throw UsageError("epsilon must be >= 0");
  }
};

struct ClusterNode {
  NodeId id = kNoNode;
  NodeId left = kNoNode;   // kNoNode for leaves
  NodeId right = kNoNode;
  NodeId parent = kNoNode;
  TermVector centroid;     // unnormalized sum of member document vectors
  std::uint32_t doc_count = 0;
  std::vector<DocId> docs;  // leaves only; internal nodes derive by union

  bool is_leaf() const { return left == kNoNode; }
};

struct MergeRecord {
  std::uint32_t step;
  NodeId left, right, parent;
  double similarity;
};

struct ClusterTree {
  std::vector<ClusterNode> nodes;  // leaves first (0..n-1), then merge order
  NodeId root = kNoNode;
  std::uint32_t leaf_count = 0;
  std::vector<MergeRecord> merges;

  const ClusterNode& node(NodeId id) const { return nodes.at(id); }
  bool is_leaf(NodeId id) const { return nodes.at(id).is_leaf(); }

  /// Doc ids under a node, ascending.
  std::vector<DocId> docs_under(NodeId id) const {
    std::vector<DocId> out;
    std::vector<NodeId> stack{id};
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      const auto& nd = nodes[n];
      if (nd.is_leaf()) {
        out.insert(out.end(), nd.docs.begin(), nd.docs.end());
      } else {
        stack.push_back(nd.left);
        stack.push_back(nd.right);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<std::uint32_t> depths() const {
    std::vector<std::uint32_t> d(nodes.size(), 0);
    // Parents precede children in a reverse id sweep: internal ids grow with
    // merge order, so a child always has a smaller id than its parent.
    for (std::size_t i = nodes.size(); i-- > 0;) {
      const auto& nd = nodes[i];
      if (!nd.is_leaf()) {
        d[nd.left] = d[i] + 1;
        d[nd.right] = d[i] + 1;
      }
    }
    return d;
  }
};

struct SimilarityResult {
  double value = 0.0;
  bool degenerate = false;  // a zero-norm centroid was involved
};

/// Inter-cluster similarity between two materialized nodes.
/// `doc_vectors` backs maximum linkage (best cross-pair cosine).
inline SimilarityResult intercluster_similarity(const ClusterNode& c1, const ClusterNode& c2,
                                                const ClusteringConfig& cfg,
                                                std::span<const TermVector> doc_vectors,
                                                const ClusterTree* tree = nullptr) {
  SimilarityResult r;
  const double size_norm =
      std::pow(static_cast<double>(c1.doc_count), cfg.alpha) *
      std::pow(static_cast<double>(c2.doc_count), cfg.alpha);
  if (cfg.linkage == Linkage::kAverage) {
    if (c1.centroid.is_zero() || c2.centroid.is_zero()) {
      r.degenerate = true;
      return r;
    }
    r.value = TermVector::dot(c1.centroid, c2.centroid) /
              (size_norm * c1.centroid.norm() * c2.centroid.norm());
  } else {
    const auto docs1 = tree ? tree->docs_under(c1.id) : c1.docs;
    const auto docs2 = tree ? tree->docs_under(c2.id) : c2.docs;
    double best = 0.0;
    bool any = false;
    for (DocId a : docs1) {
      for (DocId b : docs2) {
        if (doc_vectors[a].is_zero() || doc_vectors[b].is_zero()) {
          r.degenerate = true;
          continue;
        }
        best = std::max(best, cosine_similarity(doc_vectors[a], doc_vectors[b]));
        any = true;
      }
    }
    if (!any) {
      r.degenerate = true;
      return r;
    }
    r.value = best / size_norm;
  }
  return r;
}

namespace detail {

struct HeapEntry {
  double sim;
  NodeId a, b;  // a < b

  bool operator<(const HeapEntry& o) const {
    // max-heap on sim; equal sims prefer the smallest (a, b) pair
    if (sim != o.sim) return sim < o.sim;
    if (a != o.a) return a > o.a;
    return b > o.b;
  }
};

}  // namespace detail

/**
 * Full agglomeration of n >= 2 vectors into a binary tree of 2n-1 nodes.
 * Leaves get ids 0..n-1 in input order; internal nodes follow in merge order.
 */
inline ClusterTree agglomerate(std::span<const TermVector> vectors, const ClusteringConfig& cfg) {
  cfg.validate();
  const std::size_t n = vectors.size();
  if (n < 2) throw UsageError("agglomerate needs at least 2 vectors");

  ClusterTree tree;
  tree.leaf_count = static_cast<std::uint32_t>(n);
  tree.nodes.resize(2 * n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto& nd = tree.nodes[i];
    nd.id = static_cast<NodeId>(i);
    nd.centroid = vectors[i];
    nd.doc_count = 1;
    nd.docs = {static_cast<DocId>(i)};
  }

  // Pairwise state lives in an n x n lower triangle over reusable slots; a
  // merged cluster takes over its left child's slot. Node ids (used for
  // tie-breaking and the heap) stay distinct from slots.
  const std::size_t total = 2 * n - 1;
  std::vector<double> norm_sq(total, 0.0);
  std::vector<std::uint32_t> count(total, 0);
  std::vector<bool> alive(total, false);
  std::vector<std::uint32_t> slot_of(total, 0);
  std::vector<NodeId> live;  // live node ids, kept sorted ascending
  live.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    norm_sq[i] = vectors[i].norm_sq();
    count[i] = 1;
    alive[i] = true;
    slot_of[i] = static_cast<std::uint32_t>(i);
    live.push_back(static_cast<NodeId>(i));
  }

  auto pair_index = [](std::uint32_t sa, std::uint32_t sb) -> std::size_t {
    if (sa > sb) std::swap(sa, sb);
    return static_cast<std::size_t>(sb) * (sb - 1) / 2 + sa;
  };
  const bool use_dot = cfg.linkage == Linkage::kAverage;
  std::vector<double> pair_stat(n * (n - 1) / 2, 0.0);

  auto similarity_of = [&](NodeId a, NodeId b) -> double {
    const std::size_t idx = pair_index(slot_of[a], slot_of[b]);
    const double size_norm = std::pow(static_cast<double>(count[a]), cfg.alpha) *
                             std::pow(static_cast<double>(count[b]), cfg.alpha);
    if (use_dot) {
      const double na = norm_sq[a], nb = norm_sq[b];
      if (na <= 0.0 || nb <= 0.0) return 0.0;
      return pair_stat[idx] / (size_norm * std::sqrt(na) * std::sqrt(nb));
    }
    return pair_stat[idx] / size_norm;
  };

  std::priority_queue<detail::HeapEntry> heap;
  {
    // Initial pairwise stats: centroid dots or document cosines. Cells are
    // independent, so the fill can fan out.
    std::vector<std::pair<NodeId, NodeId>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (NodeId b = 1; b < static_cast<NodeId>(n); ++b)
      for (NodeId a = 0; a < b; ++a) pairs.emplace_back(a, b);
    parallel_for(pairs.size(), cfg.workers, [&](std::size_t k) {
      const auto [a, b] = pairs[k];
      pair_stat[pair_index(a, b)] =
          use_dot ? TermVector::dot(vectors[a], vectors[b])
                  : cosine_similarity(vectors[a], vectors[b]);
    });
    for (const auto& [a, b] : pairs) heap.push({similarity_of(a, b), a, b});
  }

  std::uint32_t degenerate_pairs = 0;
  NodeId next_id = static_cast<NodeId>(n);
  for (std::uint32_t step = 0; step < n - 1; ++step) {
    detail::HeapEntry top{};
    for (;;) {
      if (heap.empty()) throw Error("agglomerate: exhausted candidate pairs");
      top = heap.top();
      heap.pop();
      if (alive[top.a] && alive[top.b]) break;
    }
    const NodeId a = top.a, b = top.b, m = next_id++;
    if (top.sim == 0.0) ++degenerate_pairs;
    alive[a] = alive[b] = false;

    auto& nd = tree.nodes[m];
    nd.id = m;
    nd.left = a;
    nd.right = b;
    nd.centroid = tree.nodes[a].centroid;
    nd.centroid.add(tree.nodes[b].centroid);
    nd.doc_count = count[a] + count[b];
    tree.nodes[a].parent = m;
    tree.nodes[b].parent = m;

    count[m] = nd.doc_count;
    norm_sq[m] = nd.centroid.norm_sq();  // recompute; immune to update drift
    tree.merges.push_back({step, a, b, m, top.sim});

    live.erase(std::remove_if(live.begin(), live.end(),
                              [&](NodeId k) { return k == a || k == b; }),
               live.end());
    slot_of[m] = slot_of[a];
    const std::uint32_t slot_b = slot_of[b];
    for (NodeId k : live) {
      const std::size_t ka = pair_index(slot_of[k], slot_of[m]);
      const std::size_t kb = pair_index(slot_of[k], slot_b);
      pair_stat[ka] = use_dot ? pair_stat[ka] + pair_stat[kb]
                              : std::max(pair_stat[ka], pair_stat[kb]);
    }
    alive[m] = true;
    live.push_back(m);
    for (NodeId k : live) {
      if (k != m) heap.push({similarity_of(k, m), std::min(k, m), std::max(k, m)});
    }
  }
  if (degenerate_pairs > 0) {
    diag::note("agglomerate: " + std::to_string(degenerate_pairs) +
               " merge(s) involved zero-similarity pairs");
  }
  tree.root = static_cast<NodeId>(total - 1);
  return tree;
}

struct BalanceProfile {
  std::uint32_t max_depth = 0;
  double mean_leaf_depth = 0.0;
  /// mean over internal nodes of |N(left) - N(right)| / N(node)
  double imbalance = 0.0;
};

inline BalanceProfile tree_balance_profile(const ClusterTree& tree) {
  BalanceProfile p;
  const auto depth = tree.depths();
  std::uint64_t leaf_depth_sum = 0;
  std::uint32_t leaves = 0;
  double imbalance_sum = 0.0;
  std::uint32_t internal = 0;
  for (const auto& nd : tree.nodes) {
    if (nd.is_leaf()) {
      ++leaves;
      leaf_depth_sum += depth[nd.id];
      p.max_depth = std::max(p.max_depth, depth[nd.id]);
    } else {
      ++internal;
      const double l = tree.nodes[nd.left].doc_count;
      const double r = tree.nodes[nd.right].doc_count;
      imbalance_sum += std::abs(l - r) / static_cast<double>(nd.doc_count);
    }
  }
  p.mean_leaf_depth = leaves ? static_cast<double>(leaf_depth_sum) / leaves : 0.0;
  p.imbalance = internal ? imbalance_sum / internal : 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// Persistence: `<base>.tree` line records `node_id parent_id N [doc_id]`,
// `<base>.centroids` sidecar with sparse centroid entries. Doubles use %.17g
// so values round-trip exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void save_tree(const ClusterTree& tree, const std::filesystem::path& base) {
  {
    std::ofstream out(base.string() + ".tree", std::ios::binary);
    if (!out) throw DataError("cannot write tree: " + base.string() + ".tree");
    for (const auto& nd : tree.nodes) {
      out << nd.id << ' '
          << (nd.parent == kNoNode ? std::int64_t{-1} : static_cast<std::int64_t>(nd.parent))
          << ' ' << nd.doc_count;
      if (nd.is_leaf()) out << ' ' << nd.docs.front();
      out << '\n';
    }
  }
  {
    std::ofstream out(base.string() + ".centroids", std::ios::binary);
    if (!out) throw DataError("cannot write centroids: " + base.string() + ".centroids");
    for (const auto& nd : tree.nodes) {
      out << nd.id << ' ' << detail::fmt_double(nd.centroid.eps_coeff()) << ' '
          << nd.centroid.entries().size();
      for (const auto& [id, w] : nd.centroid.entries()) {
        out << ' ' << id << ':' << detail::fmt_double(w);
      }
      out << '\n';
    }
  }
}

inline ClusterTree load_tree(const std::filesystem::path& base,
                             const std::shared_ptr<const Background>& bg) {
  ClusterTree tree;
  {
    std::ifstream in(base.string() + ".tree", std::ios::binary);
    if (!in) throw DataError("cannot read tree: " + base.string() + ".tree");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::int64_t id, parent, count;
      if (!(ls >> id >> parent >> count)) throw DataError("bad tree record: " + line);
      ClusterNode nd;
      nd.id = static_cast<NodeId>(id);
      nd.parent = parent < 0 ? kNoNode : static_cast<NodeId>(parent);
      nd.doc_count = static_cast<std::uint32_t>(count);
      std::int64_t doc;
      if (ls >> doc) nd.docs = {static_cast<DocId>(doc)};
      tree.nodes.push_back(std::move(nd));
    }
  }
  if (tree.nodes.empty()) throw DataError("empty tree file: " + base.string() + ".tree");
  for (const auto& nd : tree.nodes) {
    if (nd.parent != kNoNode) {
      auto& p = tree.nodes.at(nd.parent);
      if (p.left == kNoNode) {
        p.left = nd.id;
      } else if (p.right == kNoNode) {
        p.right = nd.id;
      } else {
        throw DataError("tree node has more than two children");
      }
    } else {
      tree.root = nd.id;
    }
  }
  for (auto& nd : tree.nodes) {
    if (nd.is_leaf()) ++tree.leaf_count;
    if (!nd.is_leaf() && nd.left > nd.right) std::swap(nd.left, nd.right);
  }
  {
    std::ifstream in(base.string() + ".centroids", std::ios::binary);
    if (!in) throw DataError("cannot read centroids: " + base.string() + ".centroids");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::uint64_t id;
      double eps;
      std::size_t nnz;
      if (!(ls >> id >> eps >> nnz)) throw DataError("bad centroid record: " + line);
      std::vector<std::pair<TokenId, double>> entries;
      entries.reserve(nnz);
      for (std::size_t k = 0; k < nnz; ++k) {
        std::string cell;
        if (!(ls >> cell)) throw DataError("truncated centroid record: " + line);
        const auto colon = cell.find(':');
        if (colon == std::string::npos) throw DataError("bad centroid entry: " + cell);
        entries.emplace_back(static_cast<TokenId>(std::stoul(cell.substr(0, colon))),
                             std::stod(cell.substr(colon + 1)));
      }
      tree.nodes.at(id).centroid = TermVector(std::move(entries), eps, eps > 0.0 ? bg : nullptr);
    }
  }
  if (tree.root == kNoNode) throw DataError("tree file has no root");
  return tree;
}

}  // namespace topiclm

#pragma once

/**
 * Katz backoff model with Good-Turing discounting; the root of the topic
 * hierarchy and the baseline n-gram model.
 *
 * Discounts, from counts-of-counts n_r with cutoff gt_max:
 *
 *     d_r = ( (r+1) n_{r+1} / (r n_r)  -  A ) / (1 - A),
 *     A   = (gt_max + 1) n_{gt_max+1} / n_1,          1 <= r <= gt_max
 *
 * with raw relative frequency above the cutoff. Degenerate cells (missing
 * counts-of-counts, or a ratio outside (0,1]) fall back to no discount and
 * are counted. The per-history leftover mass routes through a backoff weight
 * to the next-lower order; the unigram level floors zero-count words from
 * the singleton mass so every vocabulary word keeps positive probability.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "topiclm/common.hpp"
#include "topiclm/ngram.hpp"

namespace topiclm {

struct DiscountTable {
  std::vector<double> d;  // d[r] for r = 1..gt_max (index r-1)
  int fallbacks = 0;

  double of(std::uint64_t r) const {
    if (r == 0) return 1.0;
    return r <= d.size() ? d[r - 1] : 1.0;
  }
};

/// counts_of_counts[r] = number of n-gram types with count exactly r.
inline DiscountTable compute_discounts(const std::map<std::uint64_t, std::uint64_t>& counts_of_counts,
                                       int gt_max) {
  DiscountTable t;
  t.d.assign(static_cast<std::size_t>(gt_max), 1.0);
  auto n = [&](std::uint64_t r) -> double {
    auto it = counts_of_counts.find(r);
    return it == counts_of_counts.end() ? 0.0 : static_cast<double>(it->second);
  };
  const double n1 = n(1);
  if (n1 <= 0.0) {
    t.fallbacks = gt_max;
    return t;  // no singletons: discounting is undefined, keep raw estimates
  }
  const double a = static_cast<double>(gt_max + 1) * n(static_cast<std::uint64_t>(gt_max) + 1) / n1;
  for (int r = 1; r <= gt_max; ++r) {
    const double nr = n(static_cast<std::uint64_t>(r));
    const double nr1 = n(static_cast<std::uint64_t>(r) + 1);
    if (nr <= 0.0) continue;  // no type has this count; cell unused
    double dr = 1.0;
    bool ok = false;
    if (nr1 > 0.0 && a < 1.0) {
      dr = ((static_cast<double>(r + 1) * nr1) / (static_cast<double>(r) * nr) - a) / (1.0 - a);
      ok = dr > 0.0 && dr <= 1.0;
    }
    if (!ok) {
      dr = 1.0;
      ++t.fallbacks;
    }
    t.d[static_cast<std::size_t>(r) - 1] = dr;
  }
  return t;
}

class RootModel {
 public:
  struct CondEntry {
    std::uint64_t history_count = 0;
    std::vector<std::pair<TokenId, double>> probs;  // seen successors, sorted
    double bow = 0.0;          // backoff weight to the lower order
    double unseen_mass = 0.0;  // discounted holdout for this history
  };

  int order = 2;
  std::size_t vocab_size = 0;
  std::vector<double> unigram;  // dense; positive for every vocabulary word
  double unigram_zero_floor = 0.0;
  std::map<std::uint64_t, CondEntry> cond2;
  std::map<std::uint64_t, CondEntry> cond3;
  DiscountTable discounts_by_order[4];  // index by order

  double prob_unigram(TokenId w) const { return unigram[w]; }

  const CondEntry* entry(int o, std::uint64_t key) const {
    const auto& t = o == 2 ? cond2 : cond3;
    auto it = t.find(key);
    return it == t.end() ? nullptr : &it->second;
  }

  static double lookup(const CondEntry& e, TokenId w, bool* found = nullptr) {
    auto it = std::lower_bound(e.probs.begin(), e.probs.end(), w,
                               [](const auto& p, TokenId id) { return p.first < id; });
    if (it != e.probs.end() && it->first == w) {
      if (found) *found = true;
      return it->second;
    }
    if (found) *found = false;
    return 0.0;
  }

  double prob_bigram(TokenId w1, TokenId w2) const {
    const CondEntry* e = entry(2, w1);
    if (!e) return unigram[w2];  // no bigram evidence for this history
    bool seen = false;
    const double p = lookup(*e, w2, &seen);
    return seen ? p : e->bow * unigram[w2];
  }

  double prob_trigram(TokenId w1, TokenId w2, TokenId w3) const {
    const TokenId h[2] = {w1, w2};
    const CondEntry* e = entry(3, pack_history(h));
    if (!e) return prob_bigram(w2, w3);
    bool seen = false;
    const double p = lookup(*e, w3, &seen);
    return seen ? p : e->bow * prob_bigram(w2, w3);
  }

  /// Longest-available-context probability, history = preceding tokens.
  double prob(std::span<const TokenId> history, TokenId w) const {
    if (order >= 3 && history.size() >= 2) {
      return prob_trigram(history[history.size() - 2], history[history.size() - 1], w);
    }
    if (order >= 2 && !history.empty()) {
      return prob_bigram(history.back(), w);
    }
    return unigram[w];
  }

  /// Whether (history, w) was observed in training at the given order.
  bool seen(int o, std::uint64_t key, TokenId w) const {
    const CondEntry* e = entry(o, key);
    if (!e) return false;
    bool found = false;
    lookup(*e, w, &found);
    return found;
  }
};

namespace detail {

inline std::map<std::uint64_t, std::uint64_t> counts_of_counts_unigram(
    const std::vector<std::uint64_t>& uni) {
  std::map<std::uint64_t, std::uint64_t> n;
  for (auto c : uni) {
    if (c > 0) ++n[c];
  }
  return n;
}

inline std::map<std::uint64_t, std::uint64_t> counts_of_counts_table(
    const std::map<std::uint64_t, SuccessorCounts>& table) {
  std::map<std::uint64_t, std::uint64_t> n;
  for (const auto& [key, succ] : table) {
    for (const auto& [w, c] : succ.counts) ++n[c];
  }
  return n;
}

}  // namespace detail

/**
 * Train the Katz-GT model from root counts. gt_max >= 1 (counts above it are
 * left undiscounted).
 */
inline RootModel train_root(const NgramCounts& counts, int gt_max = 5) {
  if (gt_max < 1) throw UsageError("gt_max must be >= 1");
  if (counts.total_tokens() == 0) throw DataError("train_root: empty counts");

  RootModel m;
  m.order = counts.order();
  m.vocab_size = counts.vocab_size();

  // ---- unigram level ----
  const auto& uni = counts.unigram();
  const double n_tokens = static_cast<double>(counts.total_tokens());
  const auto cc1 = detail::counts_of_counts_unigram(uni);
  const auto d1 = compute_discounts(cc1, gt_max);
  m.discounts_by_order[1] = d1;
  if (d1.fallbacks > 0) {
    diag::note("train_root: " + std::to_string(d1.fallbacks) +
               " unigram discount cell(s) degenerate, using no discount there");
  }

  m.unigram.assign(m.vocab_size, 0.0);
  double seen_mass = 0.0;
  std::size_t zero_types = 0;
  for (std::size_t w = 0; w < m.vocab_size; ++w) {
    if (uni[w] == 0) {
      ++zero_types;
      continue;
    }
    const double p = d1.of(uni[w]) * static_cast<double>(uni[w]) / n_tokens;
    m.unigram[w] = p;
    seen_mass += p;
  }
  const double leftover = 1.0 - seen_mass;
  if (zero_types == 0) {
    if (std::abs(leftover) > 1e-12) {
      diag::note("train_root: no zero-count words; renormalizing unigram leftover");
      for (auto& p : m.unigram) p /= seen_mass;
    }
  } else if (leftover > 1e-12) {
    m.unigram_zero_floor = leftover / static_cast<double>(zero_types);
  } else {
    // Discounting freed nothing; reserve the singleton mass explicitly so
    // zero-count words keep positive probability.
    auto it = cc1.find(1);
    const double singletons = it == cc1.end() ? 0.0 : static_cast<double>(it->second);
    const double reserve = singletons > 0.0 ? singletons / n_tokens : 1.0 / (n_tokens + 1.0);
    const double scale = (1.0 - reserve) / seen_mass;
    for (auto& p : m.unigram) p *= scale;
    m.unigram_zero_floor = reserve / static_cast<double>(zero_types);
    diag::note("train_root: unigram discounts inactive; reserving singleton mass for unseen words");
  }
  for (std::size_t w = 0; w < m.vocab_size; ++w) {
    if (uni[w] == 0) m.unigram[w] = m.unigram_zero_floor;
  }

  // ---- conditional levels ----
  auto build_level = [&](int o, auto lower_prob) {
    const auto& table = counts.table(o);
    const auto cc = detail::counts_of_counts_table(table);
    const auto d = compute_discounts(cc, gt_max);
    m.discounts_by_order[o] = d;
    if (d.fallbacks > 0) {
      diag::note("train_root: order-" + std::to_string(o) + " has " +
                 std::to_string(d.fallbacks) + " degenerate discount cell(s)");
    }
    auto& out = o == 2 ? m.cond2 : m.cond3;
    std::uint64_t folded = 0;
    for (const auto& [key, succ] : table) {
      RootModel::CondEntry e;
      e.history_count = succ.total;
      e.probs.reserve(succ.counts.size());
      double mass = 0.0;
      double lower_seen = 0.0;
      for (const auto& [w, c] : succ.counts) {
        const double p = d.of(c) * static_cast<double>(c) / static_cast<double>(succ.total);
        e.probs.emplace_back(w, p);
        mass += p;
        lower_seen += lower_prob(key, w);
      }
      e.unseen_mass = std::max(0.0, 1.0 - mass);
      const double denom = 1.0 - lower_seen;
      if (e.unseen_mass <= 0.0) {
        e.bow = 0.0;
      } else if (denom > 1e-15) {
        e.bow = e.unseen_mass / denom;
      } else {
        // The lower order puts no mass outside the seen set, so the leftover
        // has nowhere to back off to; fold it back into the seen events.
        for (auto& [w, p] : e.probs) p /= mass;
        e.unseen_mass = 0.0;
        e.bow = 0.0;
        ++folded;
      }
      out.emplace(key, std::move(e));
    }
    if (folded > 0) {
      diag::note("train_root: order-" + std::to_string(o) + ": leftover folded back for " +
                 std::to_string(folded) + " history(ies) with saturated lower order");
    }
  };

  if (m.order >= 2) {
    build_level(2, [&](std::uint64_t, TokenId w) { return m.unigram[w]; });
  }
  if (m.order >= 3) {
    build_level(3, [&](std::uint64_t key, TokenId w) {
      const TokenId w2 = static_cast<TokenId>(key & 0xffffffffULL);
      return m.prob_bigram(w2, w);
    });
  }
  return m;
}

}  // namespace topiclm

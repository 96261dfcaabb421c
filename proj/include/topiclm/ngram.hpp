#pragma once

/**
 * N-gram count tables, orders 1..3. Histories are packed token-id keys and
 * every table keeps per-history totals alongside successor counts, so
 * relative frequencies and prefix-consistency checks are direct. Ordered
 * maps keep iteration deterministic for model building and serialization.
 */

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "topiclm/common.hpp"

namespace topiclm {

inline std::uint64_t pack_history(std::span<const TokenId> h) {
  // 1 token -> the id, 2 tokens -> (w1+1)<<32 | w2 (the +1 keeps one-token
  // and two-token keys from colliding in mixed contexts)
  if (h.size() == 1) return h[0];
  return (static_cast<std::uint64_t>(h[0]) + 1) << 32 | h[1];
}

struct SuccessorCounts {
  std::uint64_t total = 0;
  std::map<TokenId, std::uint64_t> counts;
};

class NgramCounts {
 public:
  NgramCounts() = default;
  NgramCounts(int order, std::size_t vocab_size) : order_(order), unigram_(vocab_size, 0) {
    if (order < 1 || order > 3) throw UsageError("ngram order must be 1..3");
  }

  int order() const { return order_; }
  std::uint64_t total_tokens() const { return total_tokens_; }
  std::size_t vocab_size() const { return unigram_.size(); }

  void add_document(std::span<const TokenId> tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      ++unigram_.at(tokens[i]);
      ++total_tokens_;
      if (order_ >= 2 && i >= 1) {
        auto& h = bigram_[pack_history(tokens.subspan(i - 1, 1))];
        ++h.total;
        ++h.counts[tokens[i]];
      }
      if (order_ >= 3 && i >= 2) {
        auto& h = trigram_[pack_history(tokens.subspan(i - 2, 2))];
        ++h.total;
        ++h.counts[tokens[i]];
      }
    }
  }

  void add(const NgramCounts& other) {
    if (other.order_ != order_ || other.unigram_.size() != unigram_.size()) {
      throw Error("NgramCounts::add: incompatible tables");
    }
    total_tokens_ += other.total_tokens_;
    for (std::size_t i = 0; i < unigram_.size(); ++i) unigram_[i] += other.unigram_[i];
    for (const auto& [key, succ] : other.bigram_) {
      auto& mine = bigram_[key];
      mine.total += succ.total;
      for (const auto& [w, c] : succ.counts) mine.counts[w] += c;
    }
    for (const auto& [key, succ] : other.trigram_) {
      auto& mine = trigram_[key];
      mine.total += succ.total;
      for (const auto& [w, c] : succ.counts) mine.counts[w] += c;
    }
  }

  const std::vector<std::uint64_t>& unigram() const { return unigram_; }
  const std::map<std::uint64_t, SuccessorCounts>& table(int order) const {
    if (order == 2) return bigram_;
    if (order == 3) return trigram_;
    throw Error("NgramCounts::table: order must be 2 or 3");
  }

  std::uint64_t history_total(int order, std::uint64_t key) const {
    const auto& t = table(order);
    auto it = t.find(key);
    return it == t.end() ? 0 : it->second.total;
  }

  std::uint64_t count(int order, std::uint64_t key, TokenId w) const {
    const auto& t = table(order);
    auto it = t.find(key);
    if (it == t.end()) return 0;
    auto jt = it->second.counts.find(w);
    return jt == it->second.counts.end() ? 0 : jt->second;
  }

  /// Relative frequency f(w | h); 0 for unseen histories.
  double rel_freq(int order, std::uint64_t key, TokenId w) const {
    const auto& t = table(order);
    auto it = t.find(key);
    if (it == t.end() || it->second.total == 0) return 0.0;
    auto jt = it->second.counts.find(w);
    if (jt == it->second.counts.end()) return 0.0;
    return static_cast<double>(jt->second) / static_cast<double>(it->second.total);
  }

  /// History totals equal their successor sums, exactly.
  bool check_consistency() const {
    for (int o = 2; o <= order_; ++o) {
      for (const auto& [key, succ] : table(o)) {
        std::uint64_t s = 0;
        for (const auto& [w, c] : succ.counts) s += c;
        if (s != succ.total) return false;
      }
    }
    std::uint64_t u = 0;
    for (auto c : unigram_) u += c;
    return u == total_tokens_;
  }

 private:
  int order_ = 2;
  std::uint64_t total_tokens_ = 0;
  std::vector<std::uint64_t> unigram_;
  std::map<std::uint64_t, SuccessorCounts> bigram_;
  std::map<std::uint64_t, SuccessorCounts> trigram_;
};

}  // namespace topiclm

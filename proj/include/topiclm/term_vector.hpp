#pragma once

/**
 * Sparse weighted term vectors with an exact rank-1 smoothing correction.
 *
 * The dense interpretation of a smoothed document vector is
 *     v(w) = tf(w) * idf(w)        for words in the document,
 *     v(w) = eps * idf(w)          for every other vocabulary word,
 * which factors as  v = s + eps * u  with u the shared idf vector and s a
 * sparse residual. Dot products and norms account for the correction in
 * closed form, so nothing dense is ever materialized. Sums of vectors
 * (cluster centroids) stay in the same form: the eps coefficients add.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "topiclm/common.hpp"

namespace topiclm {

/// Shared dense background u (per-token idf weights) with cached moments.
struct Background {
  std::vector<double> weights;
  double norm_sq = 0.0;

  static std::shared_ptr<const Background> make(std::vector<double> idf) {
    auto bg = std::make_shared<Background>();
    bg->weights = std::move(idf);
    for (double w : bg->weights) bg->norm_sq += w * w;
    return bg;
  }
};

class TermVector {
 public:
  TermVector() = default;

  /// `entries` must be sorted by token id, unique, finite.
  TermVector(std::vector<std::pair<TokenId, double>> entries, double eps_coeff,
             std::shared_ptr<const Background> background)
      : entries_(std::move(entries)), eps_(eps_coeff), bg_(std::move(background)) {
    refresh_cache();
  }

  const std::vector<std::pair<TokenId, double>>& entries() const { return entries_; }
  double eps_coeff() const { return eps_; }
  const std::shared_ptr<const Background>& background() const { return bg_; }

  /// Weight of the dense interpretation at token w.
  double dense_weight(TokenId w) const {
    double v = eps_ > 0.0 && bg_ ? eps_ * bg_->weights[w] : 0.0;
    auto it = std::lower_bound(entries_.begin(), entries_.end(), w,
                               [](const auto& e, TokenId id) { return e.first < id; });
    if (it != entries_.end() && it->first == w) v += it->second;
    return v;
  }

  double norm_sq() const { return norm_sq_; }
  double norm() const { return std::sqrt(std::max(0.0, norm_sq_)); }
  bool is_zero() const { return norm_sq_ <= 0.0; }

  /// Recompute the norm from scratch; used to validate the cached value.
  double recomputed_norm() const {
    double s = 0.0;
    for (const auto& [id, w] : entries_) s += w * w;
    if (eps_ > 0.0 && bg_) {
      double sd = 0.0;
      for (const auto& [id, w] : entries_) sd += w * bg_->weights[id];
      s += 2.0 * eps_ * sd + eps_ * eps_ * bg_->norm_sq;
    }
    return std::sqrt(std::max(0.0, s));
  }

  /// Accumulate another vector (centroid building). Backgrounds must match.
  void add(const TermVector& other) {
    if (eps_ > 0.0 || other.eps_ > 0.0) {
      if (bg_ && other.bg_ && bg_ != other.bg_) {
        throw Error("TermVector::add: mismatched smoothing backgrounds");
      }
      if (!bg_) bg_ = other.bg_;
    }
    std::vector<std::pair<TokenId, double>> merged;
    merged.reserve(entries_.size() + other.entries_.size());
    std::size_t i = 0, j = 0;
    while (i < entries_.size() || j < other.entries_.size()) {
      if (j >= other.entries_.size() ||
          (i < entries_.size() && entries_[i].first < other.entries_[j].first)) {
        merged.push_back(entries_[i++]);
      } else if (i >= entries_.size() || other.entries_[j].first < entries_[i].first) {
        merged.push_back(other.entries_[j++]);
      } else {
        merged.emplace_back(entries_[i].first, entries_[i].second + other.entries_[j].second);
        ++i;
        ++j;
      }
    }
    entries_ = std::move(merged);
    eps_ += other.eps_;
    refresh_cache();
  }

  static double dot(const TermVector& a, const TermVector& b) {
    double s = 0.0;
    std::size_t i = 0, j = 0;
    const auto& ae = a.entries_;
    const auto& be = b.entries_;
    while (i < ae.size() && j < be.size()) {
      if (ae[i].first < be[j].first) {
        ++i;
      } else if (be[j].first < ae[i].first) {
        ++j;
      } else {
        s += ae[i].second * be[j].second;
        ++i;
        ++j;
      }
    }
    const bool a_bg = a.eps_ > 0.0 && a.bg_;
    const bool b_bg = b.eps_ > 0.0 && b.bg_;
    if (a_bg && b_bg && a.bg_ != b.bg_) {
      throw Error("TermVector::dot: mismatched smoothing backgrounds");
    }
    if (b_bg) s += b.eps_ * sparse_dot_background(a, *b.bg_);
    if (a_bg) s += a.eps_ * sparse_dot_background(b, *a.bg_);
    if (a_bg && b_bg) s += a.eps_ * b.eps_ * a.bg_->norm_sq;
    return s;
  }

 private:
  /// <sparse part of v, bg>; uses v's cache when the backgrounds coincide.
  static double sparse_dot_background(const TermVector& v, const Background& bg) {
    if (v.bg_ && v.bg_.get() == &bg) return v.sparse_dot_bg_;
    double s = 0.0;
    for (const auto& [id, w] : v.entries_) s += w * bg.weights[id];
    return s;
  }

  void refresh_cache() {
    double nsq = 0.0;
    for (const auto& [id, w] : entries_) nsq += w * w;
    sparse_dot_bg_ = 0.0;
    if (bg_) {
      for (const auto& [id, w] : entries_) sparse_dot_bg_ += w * bg_->weights[id];
    }
    if (eps_ > 0.0 && bg_) {
      nsq += 2.0 * eps_ * sparse_dot_bg_ + eps_ * eps_ * bg_->norm_sq;
    }
    norm_sq_ = std::max(0.0, nsq);
  }

  std::vector<std::pair<TokenId, double>> entries_;  // sorted by id
  double eps_ = 0.0;
  std::shared_ptr<const Background> bg_;
  double norm_sq_ = 0.0;
  double sparse_dot_bg_ = 0.0;
};

/// Cosine similarity. A zero-norm operand yields 0 (vacuous comparison).
inline double cosine_similarity(const TermVector& a, const TermVector& b) {
  if (a.is_zero() || b.is_zero()) return 0.0;
  const double d = TermVector::dot(a, b);
  const double c = d / (a.norm() * b.norm());
  // Guard rounding at the boundaries; weights are non-negative.
  return std::min(1.0, std::max(0.0, c));
}

}  // namespace topiclm

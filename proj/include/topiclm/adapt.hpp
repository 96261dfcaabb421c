#pragma once

/**
 * Dynamic topic adaptation and perplexity evaluation.
 *
 * A rolling discourse history (idf-weighted term vector over the last W
 * tokens, reset at document boundaries) is scored against the K topic
 * centroids by cosine. The similarities pass through optional min-max
 * scaling, optional top-k truncation and a transform f, then normalize into
 * the topic posterior. The adaptive word probability is the posterior-
 * weighted mixture of the topic models; fixed-space events shortcut to the
 * root model, which every topic agrees with there.
 *
 * Transform families (all satisfy f(x)/x non-decreasing on [0,1]):
 *   identity      f(x) = x          (g = 1)
 *   linear        f(x) = x^2        (g = x)
 *   power         f(x) = x^gamma    (scaled similarity to the gamma)
 *   power_comp    f(x) = x^(1+gamma)  (x * g with g = x^gamma)
 *   exponential   f(x) = x e^x      (g = e^x)
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "topiclm/common.hpp"
#include "topiclm/corpus.hpp"
#include "topiclm/lm.hpp"
#include "topiclm/term_vector.hpp"

namespace topiclm {

struct SimilarityTransform {
  enum class Family : std::uint8_t { kIdentity, kLinear, kPower, kPowerComposed, kExponential };

  Family family = Family::kLinear;  // f(x) = x^2, the default configuration
  double gamma = 2.0;               // power families only; must be >= 1
  bool scaling = true;              // min-max scale similarities first
  int knn = 0;                      // keep only the k closest topics; 0 = all

  double apply(double x) const {
    switch (family) {
      case Family::kIdentity:
        return x;
      case Family::kLinear:
        return x * x;
      case Family::kPower:
        return std::pow(x, gamma);
      case Family::kPowerComposed:
        return x * std::pow(x, gamma);
      case Family::kExponential:
        return x * std::exp(x);
    }
    return x;
  }

  void validate() const {
    if ((family == Family::kPower || family == Family::kPowerComposed) && gamma < 1.0) {
      throw UsageError("transform gamma must be >= 1 (ratio-damping requires it)");
    }
    if (knn < 0) throw UsageError("knn must be >= 0");
  }

  static Family family_from_name(std::string_view name) {
    if (name == "identity" || name == "1") return Family::kIdentity;
    if (name == "linear" || name == "x") return Family::kLinear;
    if (name == "power") return Family::kPower;
    if (name == "power-composed") return Family::kPowerComposed;
    if (name == "exp" || name == "exponential") return Family::kExponential;
    throw UsageError("unknown transform family '" + std::string(name) + "'");
  }

  static const char* family_name(Family f) {
    switch (f) {
      case Family::kIdentity: return "identity";
      case Family::kLinear: return "linear";
      case Family::kPower: return "power";
      case Family::kPowerComposed: return "power-composed";
      case Family::kExponential: return "exponential";
    }
    return "?";
  }
};

/**
 * Rolling history vector: raw tf times training idf over the last
 * `window` tokens. Dots against the topic centroids and the norm are
 * maintained incrementally, O(K) per push.
 */
class HistoryState {
 public:
  HistoryState(std::span<const TermVector> centroids, std::span<const double> idf,
               std::size_t window)
      : centroids_(centroids), idf_(idf), window_(window), dot_(centroids.size(), 0.0) {
    if (window_ == 0) throw UsageError("history window must be positive");
  }

  std::size_t window() const { return window_; }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

  void reset() {
    tokens_.clear();
    tf_.clear();
    std::fill(dot_.begin(), dot_.end(), 0.0);
    norm_sq_ = 0.0;
    dot_bg_ = 0.0;
  }

  void push(TokenId w) {
    add_weight(w, +1);
    tokens_.push_back(w);
    if (tokens_.size() > window_) {
      const TokenId old = tokens_.front();
      tokens_.pop_front();
      add_weight(old, -1);
    }
  }

  /// Cosine similarity against topic centroid t, in [0, 1].
  double similarity(std::size_t t) const {
    const auto& c = centroids_[t];
    if (norm_sq_ <= 0.0 || c.is_zero()) return 0.0;
    double d = dot_[t];
    if (c.eps_coeff() > 0.0 && c.background()) d += c.eps_coeff() * dot_bg_;
    const double s = d / (std::sqrt(norm_sq_) * c.norm());
    return std::min(1.0, std::max(0.0, s));
  }

  std::size_t n_topics() const { return centroids_.size(); }

 private:
  void add_weight(TokenId w, int delta) {
    const double idf = idf_[w];
    if (idf <= 0.0) {
      // zero-idf tokens carry no similarity signal but still occupy window slots
      return;
    }
    auto& tf = tf_[w];
    const double old_w = static_cast<double>(tf) * idf;
    tf += delta;
    const double new_w = static_cast<double>(tf) * idf;
    if (tf == 0) tf_.erase(w);
    const double dw = new_w - old_w;
    norm_sq_ = std::max(0.0, norm_sq_ + 2.0 * old_w * dw + dw * dw);
    dot_bg_ += dw * idf;
    for (std::size_t t = 0; t < centroids_.size(); ++t) {
      // sparse residual weight of the centroid at w
      const auto& entries = centroids_[t].entries();
      auto it = std::lower_bound(entries.begin(), entries.end(), w,
                                 [](const auto& e, TokenId id) { return e.first < id; });
      if (it != entries.end() && it->first == w) dot_[t] += dw * it->second;
    }
  }

  std::span<const TermVector> centroids_;
  std::span<const double> idf_;
  std::size_t window_;
  std::deque<TokenId> tokens_;
  std::map<TokenId, std::int64_t> tf_;
  std::vector<double> dot_;   // sparse-part dot per topic
  double dot_bg_ = 0.0;       // <history, idf background>
  double norm_sq_ = 0.0;
};

using TopicPosterior = std::vector<double>;

/**
 * Posterior over topics from raw similarities: scale, truncate to the top k,
 * transform, normalize. Degenerate inputs (empty history, all-equal
 * similarities, zero transformed mass) yield the uniform posterior over the
 * active topics.
 */
inline TopicPosterior posterior_from_similarities(std::vector<double> sims,
                                                  const SimilarityTransform& tf) {
  const std::size_t k = sims.size();
  if (k == 0) throw UsageError("posterior: no topics");
  TopicPosterior post(k, 0.0);

  std::vector<std::size_t> active(k);
  std::iota(active.begin(), active.end(), 0);

  const auto [mn_it, mx_it] = std::minmax_element(sims.begin(), sims.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mx <= mn) {
    // all similarities equal (covers the empty-history case)
    const double u = 1.0 / static_cast<double>(k);
    std::fill(post.begin(), post.end(), u);
    return post;
  }
  if (tf.scaling) {
    for (auto& s : sims) s = (s - mn) / (mx - mn);
  }
  if (tf.knn > 0 && static_cast<std::size_t>(tf.knn) < k) {
    // keep the k closest; ties resolve to the lowest topic index
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    active.assign(order.begin(), order.begin() + tf.knn);
    std::sort(active.begin(), active.end());
  }
  double total = 0.0;
  for (std::size_t t : active) {
    const double f = tf.apply(sims[t]);
    post[t] = f;
    total += f;
  }
  if (total <= 0.0) {
    const double u = 1.0 / static_cast<double>(active.size());
    std::fill(post.begin(), post.end(), 0.0);
    for (std::size_t t : active) post[t] = u;
    return post;
  }
  for (std::size_t t : active) post[t] /= total;
  for (std::size_t t = 0; t < k; ++t) {
    if (std::find(active.begin(), active.end(), t) == active.end()) post[t] = 0.0;
  }
  return post;
}

inline TopicPosterior topic_posterior(const HistoryState& state, const SimilarityTransform& tf) {
  std::vector<double> sims(state.n_topics(), 0.0);
  if (!state.empty()) {
    for (std::size_t t = 0; t < state.n_topics(); ++t) sims[t] = state.similarity(t);
  }
  return posterior_from_similarities(std::move(sims), tf);
}

/**
 * P(w | history) = sum_t posterior_t * P_t(w | context). Fixed-space events
 * return the root probability directly; every topic model agrees there.
 */
inline double mixture_prob(const HierarchicalLM& lm, const TopicPosterior& posterior,
                           std::span<const TokenId> context, TokenId w) {
  if (lm.classify(context, w) == BigramClass::kFixed) {
    return lm.root.prob(context, w);
  }
  double p = 0.0;
  for (std::size_t t = 0; t < posterior.size(); ++t) {
    if (posterior[t] > 0.0) p += posterior[t] * lm.topic_prob(static_cast<int>(t), context, w);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Perplexity evaluation
// ---------------------------------------------------------------------------

struct EvalOptions {
  SimilarityTransform transform;
  std::size_t window = 5000;
  int workers = 1;
};

struct ModelScore {
  double overall_ppl = 0.0;
  double target_ppl = 0.0;  // free-space events only
  double log_sum = 0.0;
  double target_log_sum = 0.0;
};

struct EvalReport {
  ModelScore baseline;  // root model alone
  ModelScore adaptive;  // posterior-weighted topic mixture
  std::uint64_t tokens_total = 0;
  std::uint64_t tokens_target = 0;   // free-space events
  std::uint64_t tokens_fixed = 0;
  std::uint64_t tokens_unknown = 0;  // unseen events with context
  std::uint64_t tokens_no_context = 0;
  std::uint64_t documents = 0;
  std::vector<std::pair<std::string, double>> per_doc_adaptive_ppl;
};

namespace detail {

struct DocScore {
  double base_ls = 0.0, adapt_ls = 0.0;
  double base_target_ls = 0.0, adapt_target_ls = 0.0;
  std::uint64_t tokens = 0, target = 0, fixed = 0, unknown = 0, no_context = 0;
};

}  // namespace detail

/**
 * Token-by-token evaluation. The history feeding the posterior covers the
 * document prefix (never crossing the boundary); the n-gram context is the
 * longest available. A non-positive probability is a hard error: the model
 * normalizes by construction, so zero mass means a bug, not data sparsity.
 */
inline EvalReport evaluate_perplexity(const HierarchicalLM& lm, std::span<const Document> docs,
                                      const EvalOptions& opt) {
  opt.transform.validate();
  if (docs.empty()) throw UsageError("evaluate_perplexity: empty test set");
  if (lm.n_topics() < 1) throw DataError("evaluate_perplexity: model has no topics");

  std::vector<detail::DocScore> scores(docs.size());
  std::string failure;
  std::mutex failure_mu;

  parallel_for(docs.size(), opt.workers, [&](std::size_t d) {
    HistoryState hist(lm.topic_centroids, lm.idf, opt.window);
    detail::DocScore& sc = scores[d];
    const auto& tokens = docs[d].tokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t ctx_len = std::min<std::size_t>(i, static_cast<std::size_t>(lm.order - 1));
      const std::span<const TokenId> ctx(tokens.data() + i - ctx_len, ctx_len);
      const TokenId w = tokens[i];

      const auto posterior = topic_posterior(hist, opt.transform);
      const double p_base = lm.root.prob(ctx, w);
      const double p_adapt = mixture_prob(lm, posterior, ctx, w);
      if (!(p_base > 0.0) || !(p_adapt > 0.0)) {
        std::lock_guard<std::mutex> lock(failure_mu);
        failure = "zero probability for token '" + std::to_string(w) + "' in document '" +
                  docs[d].id + "' (baseline " + std::to_string(p_base) + ", adaptive " +
                  std::to_string(p_adapt) + ")";
        throw DataError(failure);
      }
      sc.base_ls += std::log(p_base);
      sc.adapt_ls += std::log(p_adapt);
      ++sc.tokens;
      if (ctx_len == 0) {
        ++sc.no_context;
      } else {
        switch (lm.classify(ctx, w)) {
          case BigramClass::kFixed:
            ++sc.fixed;
            break;
          case BigramClass::kFree:
            ++sc.target;
            sc.base_target_ls += std::log(p_base);
            sc.adapt_target_ls += std::log(p_adapt);
            break;
          case BigramClass::kUnknown:
            ++sc.unknown;
            break;
        }
      }
      hist.push(w);
    }
  });

  EvalReport rep;
  rep.documents = docs.size();
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& sc = scores[d];
    rep.baseline.log_sum += sc.base_ls;
    rep.adaptive.log_sum += sc.adapt_ls;
    rep.baseline.target_log_sum += sc.base_target_ls;
    rep.adaptive.target_log_sum += sc.adapt_target_ls;
    rep.tokens_total += sc.tokens;
    rep.tokens_target += sc.target;
    rep.tokens_fixed += sc.fixed;
    rep.tokens_unknown += sc.unknown;
    rep.tokens_no_context += sc.no_context;
    if (sc.tokens > 0) {
      rep.per_doc_adaptive_ppl.emplace_back(
          docs[d].id, std::exp(-sc.adapt_ls / static_cast<double>(sc.tokens)));
    }
  }
  if (rep.tokens_total == 0) throw DataError("evaluate_perplexity: no tokens evaluated");
  auto finish = [&](ModelScore& m) {
    m.overall_ppl = std::exp(-m.log_sum / static_cast<double>(rep.tokens_total));
    m.target_ppl = rep.tokens_target > 0
                       ? std::exp(-m.target_log_sum / static_cast<double>(rep.tokens_target))
                       : 0.0;
  };
  finish(rep.baseline);
  finish(rep.adaptive);
  return rep;
}

/// Perplexity of the adaptive model; `target_only` restricts the average to
/// free-space events.
inline double perplexity(const HierarchicalLM& lm, std::span<const Document> docs,
                         const EvalOptions& opt, bool target_only = false) {
  const auto rep = evaluate_perplexity(lm, docs, opt);
  return target_only ? rep.adaptive.target_ppl : rep.adaptive.overall_ppl;
}

}  // namespace topiclm

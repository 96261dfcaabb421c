#pragma once

/**
 * Synthetic corpus generator: K latent topics with disjoint content
 * vocabularies, a shared pool of real English function words, Zipf-like
 * within-topic word frequencies and a configurable cross-topic leak. The
 * desk-scale stand-in for a large labeled news corpus; fully determined by
 * the seed.
 */

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "topiclm/common.hpp"
#include "topiclm/text.hpp"
#include "topiclm/vocab.hpp"

namespace topiclm {

struct SynthConfig {
  int topics = 3;
  int train_docs = 1500;
  int test_docs = 500;
  int doc_len_min = 60;
  int doc_len_max = 140;
  int content_words_per_topic = 50;
  int function_words = 25;         // drawn from the shipped English stoplist
  double function_share = 0.45;    // chance a token is a function word
  double leak = 0.05;              // chance a content token comes from another topic
  std::vector<double> topic_weights;  // empty = uniform; else relative weights
  std::uint64_t seed = 1;

  void validate() const {
    if (topics < 1) throw UsageError("synth: topics must be >= 1");
    if (train_docs < 1 || test_docs < 0) throw UsageError("synth: bad document counts");
    if (doc_len_min < 2 || doc_len_max < doc_len_min) throw UsageError("synth: bad doc lengths");
    if (function_share < 0.0 || function_share >= 1.0) {
      throw UsageError("synth: function_share must lie in [0, 1)");
    }
    if (!topic_weights.empty() && topic_weights.size() != static_cast<std::size_t>(topics)) {
      throw UsageError("synth: topic_weights must have one entry per topic");
    }
  }
};

namespace detail {

/// Zipf-ish cumulative table over n ranks: weight(r) = 1 / (r + 1.5).
inline std::vector<double> zipf_cdf(int n) {
  std::vector<double> cdf(n, 0.0);
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    acc += 1.0 / (static_cast<double>(r) + 1.5);
    cdf[r] = acc;
  }
  for (auto& v : cdf) v /= acc;
  return cdf;
}

inline int sample_cdf(const std::vector<double>& cdf, double u) {
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                   static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

inline std::vector<std::string> pick_function_words(int n) {
  std::vector<std::string> all(english_stoplist().begin(), english_stoplist().end());
  std::sort(all.begin(), all.end());  // set order is unspecified; pin it
  if (n > static_cast<int>(all.size())) n = static_cast<int>(all.size());
  return std::vector<std::string>(all.begin(), all.begin() + n);
}

}  // namespace detail

struct SynthCorpus {
  std::vector<RawDocument> train;
  std::vector<RawDocument> test;
  std::vector<int> train_topic;  // generating topic per document
  std::vector<int> test_topic;
};

inline SynthCorpus generate_synthetic_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(Rng::mix64(cfg.seed ^ 0x73796e7468ULL));

  const auto fw = detail::pick_function_words(cfg.function_words);
  const auto fw_cdf = detail::zipf_cdf(static_cast<int>(fw.size()));
  const auto cw_cdf = detail::zipf_cdf(cfg.content_words_per_topic);

  std::vector<double> topic_cdf(cfg.topics, 0.0);
  {
    double acc = 0.0;
    for (int t = 0; t < cfg.topics; ++t) {
      acc += cfg.topic_weights.empty() ? 1.0 : cfg.topic_weights[t];
      topic_cdf[t] = acc;
    }
    for (auto& v : topic_cdf) v /= acc;
  }

  auto content_word = [&](int topic, int rank) {
    return "t" + std::to_string(topic) + "w" + std::to_string(rank);
  };

  auto gen_doc = [&](int index, const char* prefix, int* topic_out) {
    const int topic = detail::sample_cdf(topic_cdf, rng.next_double());
    *topic_out = topic;
    const int len = cfg.doc_len_min +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(
                        cfg.doc_len_max - cfg.doc_len_min + 1)));
    std::string text;
    for (int i = 0; i < len; ++i) {
      if (!fw.empty() && rng.next_double() < cfg.function_share) {
        text += fw[static_cast<std::size_t>(detail::sample_cdf(fw_cdf, rng.next_double()))];
      } else {
        int t = topic;
        if (cfg.topics > 1 && rng.next_double() < cfg.leak) {
          t = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.topics)));
        }
        text += content_word(t, detail::sample_cdf(cw_cdf, rng.next_double()));
      }
      text += i + 1 == len ? "\n" : " ";
    }
    return RawDocument{std::string(prefix) + std::to_string(index), std::move(text)};
  };

  SynthCorpus out;
  out.train_topic.resize(cfg.train_docs);
  out.test_topic.resize(cfg.test_docs);
  for (int d = 0; d < cfg.train_docs; ++d) {
    out.train.push_back(gen_doc(d, "train", &out.train_topic[d]));
  }
  for (int d = 0; d < cfg.test_docs; ++d) {
    out.test.push_back(gen_doc(d, "test", &out.test_topic[d]));
  }
  return out;
}

/// Single-file corpus layout with `###DOC <id>` separators.
inline void write_corpus_file(const std::vector<RawDocument>& docs,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus: " + path.string());
  for (const auto& d : docs) {
    out << kDocSeparatorPrefix << d.id << '\n' << d.text;
    if (d.text.empty() || d.text.back() != '\n') out << '\n';
  }
}

}  // namespace topiclm

#pragma once

/**
 * Tokenized corpus: documents as token-id sequences, document frequencies,
 * training-side idf weights and TF-IDF term vector construction.
 *
 * idf(w) = ln(N / df(w)) with statistics from the training corpus only.
 * Test documents are mapped against the frozen vocabulary, with unseen
 * strings collapsing to <unk>.
 */

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "topiclm/common.hpp"
#include "topiclm/term_vector.hpp"
#include "topiclm/text.hpp"
#include "topiclm/vocab.hpp"

namespace topiclm {

struct Document {
  std::string id;
  std::vector<TokenId> tokens;  // one document = one discourse
};

struct Corpus {
  Vocabulary vocab;
  std::vector<Document> docs;
  std::vector<std::uint32_t> doc_freq;  // per token id
  std::vector<double> idf;              // ln(n_docs / df)
  std::uint64_t total_tokens = 0;

  /// Shared smoothing background; cached so every vector derived from this
  /// corpus carries the same instance (mixed-instance dots are rejected).
  std::shared_ptr<const Background> background() const {
    if (!bg_cache_) bg_cache_ = Background::make(idf);
    return bg_cache_;
  }

 private:
  mutable std::shared_ptr<const Background> bg_cache_;
};

/// Build vocabulary, df and idf from raw training documents. Documents that
/// tokenize to nothing are dropped with a note.
inline Corpus build_corpus(const std::vector<RawDocument>& raw) {
  Corpus c;
  std::vector<std::vector<TokenId>> token_lists;
  for (const auto& rd : raw) {
    auto words = tokenize(rd.text);
    if (words.empty()) {
      diag::note("dropping empty document '" + rd.id + "'");
      continue;
    }
    std::vector<TokenId> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(c.vocab.add(w));
    c.total_tokens += ids.size();
    c.docs.push_back(Document{rd.id, std::move(ids)});
  }
  if (c.docs.empty()) throw DataError("corpus has no non-empty documents");

  c.doc_freq.assign(c.vocab.size(), 0);
  for (const auto& d : c.docs) {
    std::vector<TokenId> uniq = d.tokens;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (TokenId t : uniq) ++c.doc_freq[t];
  }
  const double n = static_cast<double>(c.docs.size());
  c.idf.assign(c.vocab.size(), 0.0);
  for (std::size_t i = 0; i < c.vocab.size(); ++i) {
    if (c.doc_freq[i] > 0) c.idf[i] = std::log(n / static_cast<double>(c.doc_freq[i]));
  }
  return c;
}

/// Map a raw document against a frozen vocabulary (<unk> for novel strings).
inline Document map_document(const Vocabulary& vocab, const RawDocument& rd) {
  Document d;
  d.id = rd.id;
  for (const auto& w : tokenize(rd.text)) d.tokens.push_back(vocab.id_or_unknown(w));
  return d;
}

inline std::vector<Document> map_documents(const Vocabulary& vocab,
                                           const std::vector<RawDocument>& raw) {
  std::vector<Document> out;
  for (const auto& rd : raw) {
    Document d = map_document(vocab, rd);
    if (d.tokens.empty()) {
      diag::note("dropping empty document '" + rd.id + "'");
      continue;
    }
    out.push_back(std::move(d));
  }
  return out;
}

/**
 * TF-IDF vector of one document. With epsilon > 0 the dense interpretation
 * keeps weight tf*idf on document words and eps*idf elsewhere; the sparse
 * residual stores (tf - eps)*idf and the background carries the rest.
 */
inline TermVector build_term_vector(const Document& doc, std::span<const double> idf,
                                    double epsilon,
                                    const std::shared_ptr<const Background>& bg) {
  std::map<TokenId, std::uint32_t> tf;
  for (TokenId t : doc.tokens) ++tf[t];
  std::vector<std::pair<TokenId, double>> entries;
  entries.reserve(tf.size());
  for (const auto& [id, count] : tf) {
    const double w = (static_cast<double>(count) - epsilon) * idf[id];
    if (w != 0.0) entries.emplace_back(id, w);
  }
  return TermVector(std::move(entries), epsilon, epsilon > 0.0 ? bg : nullptr);
}

/// Vectors for every corpus document against a shared background.
inline std::vector<TermVector> build_term_vectors(const Corpus& corpus, double epsilon,
                                                  int workers = 1) {
  auto bg = corpus.background();
  std::vector<TermVector> out(corpus.docs.size());
  parallel_for(corpus.docs.size(), workers, [&](std::size_t i) {
    out[i] = build_term_vector(corpus.docs[i], corpus.idf, epsilon, bg);
  });
  return out;
}

}  // namespace topiclm

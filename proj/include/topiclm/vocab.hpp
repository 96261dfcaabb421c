#pragma once

/**
 * Vocabulary (token <-> dense id bijection with corpus frequencies) and the
 * function-word / content-word partition that drives the fixed/free split.
 */

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "topiclm/common.hpp"

namespace topiclm {

inline constexpr std::string_view kUnknownToken = "<unk>";

class Vocabulary {
 public:
  Vocabulary() {
    // The unknown token owns id 0 and stays at frequency 0.
    tokens_.emplace_back(kUnknownToken);
    freq_.push_back(0);
    index_.emplace(std::string(kUnknownToken), 0);
  }

  TokenId add(std::string_view token, std::uint64_t count = 1) {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) {
      freq_[it->second] += count;
      return it->second;
    }
    const TokenId id = static_cast<TokenId>(tokens_.size());
    tokens_.emplace_back(token);
    freq_.push_back(count);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  /// Id of a known token, or nullopt.
  std::optional<TokenId> lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Id of the token, mapping unknown strings to <unk>.
  TokenId id_or_unknown(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? unknown_id() : it->second;
  }

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::uint64_t frequency(TokenId id) const { return freq_.at(id); }
  TokenId unknown_id() const { return 0; }
  std::size_t size() const { return tokens_.size(); }

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      h = fnv1a(tokens_[i], h);
      h = fnv1a_u64(freq_[i], h);
    }
    return h;
  }

  /// Line-oriented `token<TAB>count` dump, id order.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary: " + path.string());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      out << tokens_[i] << '\t' << freq_[i] << '\n';
    }
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary: " + path.string());
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw DataError("vocabulary line " + std::to_string(lineno) + " has no tab: " + path.string());
      }
      const std::string token = line.substr(0, tab);
      const std::uint64_t count = std::stoull(line.substr(tab + 1));
      if (token == kUnknownToken) continue;  // implicit entry
      v.add(token, count);
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class WordClass : std::uint8_t { FunctionWord, ContentWord };

/// Total partition of the vocabulary into closed-class function words and
/// open-class content words.
class WordClassPartition {
 public:
  WordClassPartition() = default;

  static WordClassPartition from_stoplist(const Vocabulary& vocab,
                                          const std::unordered_set<std::string>& stoplist) {
    if (vocab.size() <= 1) throw UsageError("word classification needs a non-empty vocabulary");
    WordClassPartition p;
    p.function_.assign(vocab.size(), 0);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      if (stoplist.count(vocab.token(static_cast<TokenId>(i)))) p.function_[i] = 1;
    }
    p.function_[vocab.unknown_id()] = 0;  // <unk> is treated as content
    return p;
  }

  /// Threshold mode: document-frequency fraction >= threshold => FunctionWord.
  static WordClassPartition from_df_threshold(const Vocabulary& vocab,
                                              const std::vector<std::uint32_t>& doc_freq,
                                              std::size_t n_docs, double threshold) {
    if (vocab.size() <= 1) throw UsageError("word classification needs a non-empty vocabulary");
    if (n_docs == 0) throw UsageError("word classification needs documents");
    WordClassPartition p;
    p.function_.assign(vocab.size(), 0);
    for (std::size_t i = 0; i < vocab.size() && i < doc_freq.size(); ++i) {
      const double frac = static_cast<double>(doc_freq[i]) / static_cast<double>(n_docs);
      if (frac >= threshold) p.function_[i] = 1;
    }
    p.function_[vocab.unknown_id()] = 0;
    return p;
  }

  /// Rebuild from a serialized per-token byte mask.
  static WordClassPartition from_mask(std::vector<std::uint8_t> mask) {
    WordClassPartition p;
    p.function_ = std::move(mask);
    return p;
  }

  bool is_function(TokenId id) const { return function_.at(id) != 0; }
  WordClass word_class(TokenId id) const {
    return is_function(id) ? WordClass::FunctionWord : WordClass::ContentWord;
  }
  std::size_t size() const { return function_.size(); }

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto f : function_) h = fnv1a_u64(f, h);
    return h;
  }

 private:
  std::vector<std::uint8_t> function_;
};

/// Shipped English closed-class list (articles, prepositions, pronouns,
/// conjunctions, auxiliaries and common adverbial particles).
inline const std::unordered_set<std::string>& english_stoplist() {
  static const std::unordered_set<std::string> words = {
      "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every",
      "no", "either", "neither", "both", "all", "such",
      "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them",
      "my", "your", "his", "its", "our", "their", "mine", "yours", "hers", "ours", "theirs",
      "myself", "yourself", "himself", "herself", "itself", "ourselves", "themselves",
      "who", "whom", "whose", "which", "what", "where", "when", "why", "how",
      "of", "in", "on", "at", "by", "for", "with", "about", "against", "between", "among",
      "into", "through", "during", "before", "after", "above", "below", "to", "from", "up",
      "down", "out", "off", "over", "under", "again", "further", "than", "via", "per",
      "within", "without", "toward", "towards", "upon", "across", "behind", "beyond",
      "and", "but", "or", "nor", "so", "yet", "if", "because", "as", "until", "while",
      "although", "though", "since", "unless", "whether", "once",
      "is", "am", "are", "was", "were", "be", "been", "being",
      "have", "has", "had", "having", "do", "does", "did", "doing",
      "will", "would", "shall", "should", "can", "could", "may", "might", "must",
      "not", "too", "very", "just", "also", "then", "there", "here", "only", "own",
      "same", "other", "another", "more", "most", "less", "least", "few", "much", "many",
      "now", "ever", "never", "still", "even",
  };
  return words;
}

}  // namespace topiclm

#pragma once

/**
 * Raw text ingestion: UTF-8 validation, tokenization and the two corpus
 * layouts (directory of one-document files, or a single file with
 * `###DOC <id>` separator lines).
 *
 * Tokenization rules, applied per whitespace-separated piece:
 * - ASCII letters are lowercased; non-ASCII bytes pass through as letters.
 * - A punctuation character is kept when flanked by alphanumerics on both
 *   sides ("peace-talks", "3.5", "don't").
 * - A trailing '.' is kept when the token already contains an internal '.'
 *   ("u.s." stays an abbreviation; "sat." drops the full stop).
 * - Everything else delimits.
 * The output is idempotent under re-tokenization.
 */

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "topiclm/common.hpp"

namespace topiclm {

/// Byte offset of the first invalid UTF-8 sequence, or npos if clean.
inline std::size_t utf8_invalid_at(std::string_view s) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    if (c < 0x80) {
      len = 1;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xc0) != 0x80) return i;
    }
    // Reject overlong encodings and out-of-range code points.
    if (len == 2 && c < 0xc2) return i;
    if (len == 3 && c == 0xe0 && static_cast<unsigned char>(s[i + 1]) < 0xa0) return i;
    if (len == 4 && (c > 0xf4 || (c == 0xf0 && static_cast<unsigned char>(s[i + 1]) < 0x90))) return i;
    i += len;
  }
  return std::string_view::npos;
}

namespace detail {

inline bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_word_char(unsigned char c) {
  if (c >= 0x80) return true;  // non-ASCII treated as letter
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

inline char lower_ascii(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

inline void tokenize_piece(std::string_view piece, std::vector<std::string>& out) {
  std::string cur;
  for (std::size_t i = 0; i < piece.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(piece[i]);
    if (is_word_char(c)) {
      cur.push_back(lower_ascii(c));
      continue;
    }
    const bool left = i > 0 && is_word_char(static_cast<unsigned char>(piece[i - 1]));
    const bool right = i + 1 < piece.size() && is_word_char(static_cast<unsigned char>(piece[i + 1]));
    if (left && right) {
      cur.push_back(static_cast<char>(c));
    } else if (c == '.' && left && cur.find('.') != std::string::npos) {
      cur.push_back('.');  // abbreviation-final dot
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
}

}  // namespace detail

/// Throws DataError naming the byte offset on malformed UTF-8.
inline std::vector<std::string> tokenize(std::string_view text) {
  const std::size_t bad = utf8_invalid_at(text);
  if (bad != std::string_view::npos) {
    throw DataError("malformed UTF-8 at byte offset " + std::to_string(bad));
  }
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !detail::is_ascii_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) detail::tokenize_piece(text.substr(i, j - i), out);
    i = j;
  }
  return out;
}

struct RawDocument {
  std::string id;
  std::string text;
};

inline constexpr std::string_view kDocSeparatorPrefix = "###DOC ";

/// Single-file layout: documents separated by lines `###DOC <id>`.
inline std::vector<RawDocument> read_corpus_stream(std::istream& in, std::string_view origin) {
  std::vector<RawDocument> docs;
  std::string line;
  bool have_doc = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind(kDocSeparatorPrefix, 0) == 0) {
      std::string id = line.substr(kDocSeparatorPrefix.size());
      while (!id.empty() && detail::is_ascii_space(static_cast<unsigned char>(id.back()))) id.pop_back();
      if (id.empty()) {
        throw DataError(std::string(origin) + ": ###DOC separator without an id");
      }
      docs.push_back(RawDocument{std::move(id), {}});
      have_doc = true;
    } else {
      if (!have_doc) {
        // Leading content before any separator forms an implicit document.
        docs.push_back(RawDocument{"doc0", {}});
        have_doc = true;
      }
      docs.back().text += line;
      docs.back().text += '\n';
    }
  }
  return docs;
}

inline std::vector<RawDocument> load_raw_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) {
    throw UsageError("corpus path does not exist: " + path.string());
  }
  std::vector<RawDocument> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());  // directory order is not portable
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      if (!in) throw DataError("cannot read corpus file: " + f.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      docs.push_back(RawDocument{f.filename().string(), buf.str()});
    }
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read corpus file: " + path.string());
    docs = read_corpus_stream(in, path.string());
  }
  if (docs.empty()) {
    throw DataError("corpus is empty: " + path.string());
  }
  return docs;
}

}  // namespace topiclm
